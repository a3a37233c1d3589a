"""Unbalanced radial power flow (forward-backward sweep) and schedule simulation.

Plays the role of the external circuit simulator: computes squared voltage
magnitudes for injection snapshots, runs time-series simulations of charge
schedules, and scores actual voltage-bound violations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .netmodel import NetworkModel, NodeId, ScenarioData

PF_TOL = 1e-8
PF_MAX_ITER = 100


class PowerFlowError(RuntimeError):
    """Raised when the sweep fails to converge or the network data is unusable."""


@dataclass(frozen=True)
class InjectionSnapshot:
    """Complex power demand (per-unit) per node for one time step."""
    t: int
    demand: Dict[NodeId, complex]


@dataclass
class VoltageSolution:
    phasors: Dict[NodeId, complex]
    v2: Dict[NodeId, float]  # squared magnitudes
    converged: bool
    iterations: int
    mismatch: float

    def require_converged(self):
        if not self.converged:
            raise PowerFlowError(
                f"power flow did not converge in {self.iterations} iterations "
                f"(final mismatch {self.mismatch:.3e} p.u.)"
            )
        return self


@dataclass(frozen=True)
class ViolationEntry:
    node: NodeId
    t: int
    kind: str  # 'over' | 'under'
    magnitude: float  # positive exceedance in squared-p.u.


@dataclass
class ViolationReport:
    entries: List[ViolationEntry] = field(default_factory=list)

    @property
    def total(self) -> float:
        return float(sum(e.magnitude for e in self.entries))

    def count(self) -> int:
        return len(self.entries)


def violation_total(report: ViolationReport) -> float:
    return report.total


def solve_pf(net: NetworkModel, snapshot: InjectionSnapshot,
             tol: float = PF_TOL, max_iter: int = PF_MAX_ITER) -> VoltageSolution:
    """Forward-backward sweep from a flat start.

    Backward pass accumulates branch currents from the leaves toward the
    source; forward pass propagates voltage drops through the full phase
    impedance blocks, which captures mutual coupling between phases.
    """
    order = net.bus_order
    parent = net.parent_lines
    children: Dict[str, List[str]] = {b.id: [] for b in net.buses}
    for child, line in parent.items():
        up = line.from_bus if line.to_bus == child else line.to_bus
        children[up].append(child)

    phase_of = {b.id: list(b.phases) for b in net.buses}
    # Flat start at the source phasors.
    volts: Dict[str, np.ndarray] = {}
    for b in net.buses:
        volts[b.id] = np.array([net.source_voltage[p] for p in b.phases], dtype=complex)

    demand = snapshot.demand
    s_bus = {
        b.id: np.array([demand.get(NodeId(b.id, p), 0j) for p in b.phases], dtype=complex)
        for b in net.buses
    }

    branch_current: Dict[str, np.ndarray] = {}
    mismatch = np.inf
    for it in range(1, max_iter + 1):
        # Backward: per-bus injection currents, accumulated up the tree.
        acc: Dict[str, np.ndarray] = {}
        for bus_id in reversed(order):
            v = volts[bus_id]
            if np.any(np.abs(v) < 1e-12):
                raise PowerFlowError(f"voltage collapse at bus {bus_id} during sweep")
            inj = np.conj(s_bus[bus_id] / v)
            for child in children[bus_id]:
                line = parent[child]
                child_cur = acc[child]
                # child current expressed on this bus's phase list
                mapped = np.zeros(len(phase_of[bus_id]), dtype=complex)
                for p in line.phases:
                    mapped[phase_of[bus_id].index(p)] = child_cur[phase_of[child].index(p)]
                inj = inj + mapped
            acc[bus_id] = inj
            if bus_id != net.source_bus:
                line = parent[bus_id]
                cur = np.array([inj[phase_of[bus_id].index(p)] for p in line.phases],
                               dtype=complex)
                branch_current[bus_id] = cur

        # Forward: propagate voltage drops from the source down.
        mismatch = 0.0
        for bus_id in order:
            if bus_id == net.source_bus:
                continue
            line = parent[bus_id]
            up = line.from_bus if line.to_bus == bus_id else line.to_bus
            v_up = np.array(
                [volts[up][phase_of[up].index(p)] for p in line.phases], dtype=complex
            )
            drop = line.z_pu @ branch_current[bus_id]
            v_line = v_up - drop
            v_new = np.array(
                [v_line[list(line.phases).index(p)] for p in phase_of[bus_id]], dtype=complex
            )
            mismatch = max(mismatch, float(np.max(np.abs(v_new - volts[bus_id]))))
            volts[bus_id] = v_new

        if mismatch <= tol:
            phasors = {
                NodeId(b, p): complex(volts[b][phase_of[b].index(p)])
                for b in order
                for p in phase_of[b]
            }
            v2 = {n: abs(v) ** 2 for n, v in phasors.items()}
            return VoltageSolution(phasors=phasors, v2=v2, converged=True,
                                   iterations=it, mismatch=mismatch)

    phasors = {
        NodeId(b, p): complex(volts[b][phase_of[b].index(p)])
        for b in order
        for p in phase_of[b]
    }
    return VoltageSolution(phasors=phasors, v2={n: abs(v) ** 2 for n, v in phasors.items()},
                           converged=False, iterations=max_iter, mismatch=float(mismatch))


def power_balance(net: NetworkModel, sol: VoltageSolution,
                  snapshot: InjectionSnapshot) -> Tuple[complex, complex, complex]:
    """Return (source injection, total load, total series losses), per-unit."""
    parent = net.parent_lines
    phase_of = {b.id: list(b.phases) for b in net.buses}
    total_load = sum(snapshot.demand.values(), 0j)

    # Recompute branch currents from the converged voltages.
    order = net.bus_order
    children: Dict[str, List[str]] = {b.id: [] for b in net.buses}
    for child, line in parent.items():
        up = line.from_bus if line.to_bus == child else line.to_bus
        children[up].append(child)
    acc: Dict[str, np.ndarray] = {}
    losses = 0j
    source_power = 0j
    for bus_id in reversed(order):
        v = np.array([sol.phasors[NodeId(bus_id, p)] for p in phase_of[bus_id]], dtype=complex)
        s = np.array(
            [snapshot.demand.get(NodeId(bus_id, p), 0j) for p in phase_of[bus_id]],
            dtype=complex,
        )
        inj = np.conj(s / v)
        for child in children[bus_id]:
            line = parent[child]
            for p in line.phases:
                inj[phase_of[bus_id].index(p)] += acc[child][phase_of[child].index(p)]
        acc[bus_id] = inj
        if bus_id != net.source_bus:
            line = parent[bus_id]
            up = line.from_bus if line.to_bus == bus_id else line.to_bus
            cur = np.array([inj[phase_of[bus_id].index(p)] for p in line.phases], dtype=complex)
            v_up = np.array([sol.phasors[NodeId(up, p)] for p in line.phases], dtype=complex)
            v_dn = np.array([sol.phasors[NodeId(bus_id, p)] for p in line.phases], dtype=complex)
            losses += np.sum((v_up - v_dn) * np.conj(cur))
        else:
            source_power = complex(np.sum(v * np.conj(inj)))
    return source_power, complex(total_load), complex(losses)


def snapshot_for(scenario: ScenarioData, t: int,
                 ev_charging: Optional[Sequence[bool]] = None) -> InjectionSnapshot:
    """Background demand at time t plus unity-power-factor EV demand.

    ``ev_charging`` is a per-EV on/off sequence aligned with scenario.evs;
    omitted means no EV load.
    """
    demand: Dict[NodeId, complex] = {}
    for (node, tt), s in scenario.background.items():
        if tt == t:
            demand[node] = demand.get(node, 0j) + s
    if ev_charging is not None:
        r = scenario.rate_pu
        for ev, on in zip(scenario.evs, ev_charging):
            if on:
                demand[ev.node] = demand.get(ev.node, 0j) + complex(r, 0.0)
    return InjectionSnapshot(t=t, demand=demand)


def score_violations(v2: Dict[NodeId, float], t: int, v_max: float, v_min: float,
                     report: ViolationReport) -> None:
    for node in sorted(v2):
        v = v2[node]
        if v > v_max:
            report.entries.append(ViolationEntry(node, t, "over", v - v_max))
        elif v < v_min:
            report.entries.append(ViolationEntry(node, t, "under", v_min - v))


def simulate_states(scenario: ScenarioData,
                    states_by_t: Dict[int, Sequence[bool]]):
    """Run one power flow per time step for the given per-EV charging states.

    Returns (v2 map keyed by (node, t), ViolationReport).
    """
    v_map: Dict[Tuple[NodeId, int], float] = {}
    report = ViolationReport()
    for t in range(1, scenario.T + 1):
        snap = snapshot_for(scenario, t, states_by_t.get(t))
        try:
            sol = solve_pf(scenario.network, snap).require_converged()
        except PowerFlowError as exc:
            raise PowerFlowError(f"t={t}: {exc}") from exc
        for node, v in sol.v2.items():
            v_map[(node, t)] = v
        score_violations(sol.v2, t, scenario.v_max, scenario.v_min, report)
    return v_map, report


def simulate_schedule(scenario: ScenarioData, schedule):
    """Time-series simulation of a decoded charge schedule."""
    states = {t: schedule.ev_states_at(t, scenario) for t in range(1, scenario.T + 1)}
    return simulate_states(scenario, states)


def base_case_violations(scenario: ScenarioData) -> ViolationReport:
    """Violation report for the background load alone (no EV charging)."""
    _, report = simulate_states(scenario, {})
    return report
