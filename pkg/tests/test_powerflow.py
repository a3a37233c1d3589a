import numpy as np
import pytest

from gridevac import powerflow
from gridevac.netmodel import (
    Bus, FeederSpec, Line, NetworkModel, NodeId, generate_synthetic_feeder,
)
from gridevac.powerflow import (
    InjectionSnapshot, ViolationEntry, ViolationReport,
    power_balance, simulate_states, snapshot_for, solve_pf, violation_total,
)


def _two_bus(z=0.01 + 0.02j):
    return NetworkModel(
        buses=(Bus("b0", ("a",)), Bus("b1", ("a",))),
        lines=(Line("b0", "b1", ("a",), np.array([[z]])),),
        source_bus="b0", source_voltage={"a": 1.0 + 0j},
        base_kv=4.16, base_kva=500.0,
    )


def _two_bus_closed_form(r, x, p, q, v1=1.0):
    """|V2|^2 from the quartic |V2|^4 + (2(rp+xq) - v1^2)|V2|^2
    + (r^2+x^2)(p^2+q^2) = 0 (constant-power load on one line)."""
    b = 2.0 * (r * p + x * q) - v1 ** 2
    c = (r ** 2 + x ** 2) * (p ** 2 + q ** 2)
    roots = np.roots([1.0, b, c])
    # The operating point is the high-voltage root.
    return float(max(root.real for root in roots if abs(root.imag) < 1e-12))


class TestSolvePf:
    def test_zero_load_flat_voltages(self, three_phase):
        net, _ = three_phase
        sol = solve_pf(net, InjectionSnapshot(t=1, demand={}))
        assert sol.converged
        for v2 in sol.v2.values():
            assert v2 == pytest.approx(1.0, abs=1e-12)

    def test_two_bus_matches_closed_form(self):
        net = _two_bus()
        sol = solve_pf(net, InjectionSnapshot(
            t=1, demand={NodeId("b1", "a"): 0.1 + 0.05j})).require_converged()
        expected = _two_bus_closed_form(0.01, 0.02, 0.1, 0.05)
        assert sol.v2[NodeId("b1", "a")] == pytest.approx(expected, abs=1e-8)

    def test_balanced_three_phase_symmetry(self):
        nph = 3
        z = np.full((nph, nph), 0.003 + 0.0035j, dtype=complex)
        np.fill_diagonal(z, 0.01 + 0.02j)
        net = NetworkModel(
            buses=(Bus("b0", ("a", "b", "c")), Bus("b1", ("a", "b", "c")),
                   Bus("b2", ("a", "b", "c"))),
            lines=(Line("b0", "b1", ("a", "b", "c"), z),
                   Line("b1", "b2", ("a", "b", "c"), z.copy())),
            source_bus="b0",
            source_voltage={
                "a": np.exp(1j * 0.0), "b": np.exp(-1j * 2 * np.pi / 3),
                "c": np.exp(1j * 2 * np.pi / 3),
            },
            base_kv=4.16, base_kva=500.0,
        )
        demand = {NodeId(b, p): 0.05 + 0.02j
                  for b in ("b1", "b2") for p in ("a", "b", "c")}
        sol = solve_pf(net, InjectionSnapshot(t=1, demand=demand)).require_converged()
        for b in ("b1", "b2"):
            mags = [abs(sol.phasors[NodeId(b, p)]) for p in ("a", "b", "c")]
            assert max(mags) - min(mags) < 1e-10

    def test_phase_decoupling_with_diagonal_impedance(self):
        z3 = np.diag([0.01 + 0.02j] * 3)
        net3 = NetworkModel(
            buses=(Bus("b0", ("a", "b", "c")), Bus("b1", ("a", "b", "c"))),
            lines=(Line("b0", "b1", ("a", "b", "c"), z3),),
            source_bus="b0",
            source_voltage={"a": 1.0 + 0j, "b": 1.0 + 0j, "c": 1.0 + 0j},
            base_kv=4.16, base_kva=500.0,
        )
        sol3 = solve_pf(net3, InjectionSnapshot(
            t=1, demand={NodeId("b1", "a"): 0.1 + 0.05j})).require_converged()
        sol1 = solve_pf(_two_bus(), InjectionSnapshot(
            t=1, demand={NodeId("b1", "a"): 0.1 + 0.05j})).require_converged()
        # Loaded phase equals the scalar solve; unloaded phases see no drop.
        assert sol3.phasors[NodeId("b1", "a")] == pytest.approx(
            sol1.phasors[NodeId("b1", "a")], abs=1e-10)
        assert sol3.v2[NodeId("b1", "b")] == pytest.approx(1.0, abs=1e-12)
        assert sol3.v2[NodeId("b1", "c")] == pytest.approx(1.0, abs=1e-12)

    def test_nonconvergence_diagnostic(self):
        net = _two_bus()
        # Demand far beyond the feeder's transfer capability collapses.
        with pytest.raises(powerflow.PowerFlowError):
            solve_pf(net, InjectionSnapshot(
                t=1, demand={NodeId("b1", "a"): 30.0 + 10.0j})).require_converged()

    @pytest.mark.parametrize("fixture_name", ["tiny", "three_phase", "weak"])
    def test_power_balance(self, fixture_name, request):
        _, scn = request.getfixturevalue(fixture_name)
        for t in (1, scn.T // 2, scn.T):
            snap = snapshot_for(scn, t, [True] * len(scn.evs))
            sol = solve_pf(scn.network, snap).require_converged()
            src, load, losses = power_balance(scn.network, sol, snap)
            assert abs(src - load - losses) < 1e-6

    def test_monotone_sag_downstream(self, weak):
        net, scn = weak
        t = int(0.72 * scn.T)
        snap = snapshot_for(scn, t, [True] * len(scn.evs))
        base = solve_pf(net, snap).require_converged()
        parent = net.parent_lines
        for bus in ("b2", net.bus_order[-1]):
            bumped = dict(snap.demand)
            node = NodeId(bus, "a")
            bumped[node] = bumped.get(node, 0j) + 0.02
            sol = solve_pf(net, InjectionSnapshot(t=t, demand=bumped)
                           ).require_converged()
            # Collect the perturbed bus's subtree.
            children = {}
            for child, line in parent.items():
                up = line.from_bus if line.to_bus == child else line.to_bus
                children.setdefault(up, []).append(child)
            subtree, frontier = [], [bus]
            while frontier:
                cur = frontier.pop()
                subtree.append(cur)
                frontier.extend(children.get(cur, []))
            for b in subtree:
                assert sol.v2[NodeId(b, "a")] <= base.v2[NodeId(b, "a")] + 1e-12


class TestViolations:
    def test_empty_report_total_zero(self):
        assert violation_total(ViolationReport()) == 0.0

    def test_additivity(self):
        rep = ViolationReport(entries=[
            ViolationEntry(NodeId("b1", "a"), 1, "under", 0.002),
            ViolationEntry(NodeId("b2", "a"), 3, "over", 0.003),
        ])
        assert violation_total(rep) == pytest.approx(0.005)
        assert rep.count() == 2

    def test_all_zero_schedule_on_base_case(self, weak):
        _, scn = weak
        _, report = simulate_states(scn, {})
        assert report.entries == []
        assert report.total == 0.0

    def test_full_charging_sags_below_lower_bound(self):
        # Deliberately weak feeder: verify via solve_pf that simultaneous
        # charging of all EVs pushes some node below v_min, then confirm the
        # simulation reports it.
        _, scn = generate_synthetic_feeder(FeederSpec(
            n_buses=6, phases="a", n_tazs=2, evs_per_taz=3, seed=7, T=16,
            beta=4, base_kva=150.0, impedance_scale=12.0, load_scale=0.3))
        all_on = [True] * len(scn.evs)
        sags = [t for t in range(1, scn.T + 1)
                if min(solve_pf(scn.network, snapshot_for(scn, t, all_on))
                       .require_converged().v2.values()) < scn.v_min]
        assert sags, "feeder not weak enough to sag under full charging"
        _, report = simulate_states(scn, {t: all_on for t in range(1, scn.T + 1)})
        assert {e.t for e in report.entries if e.kind == "under"} >= set(sags)

    def test_simulation_is_deterministic(self, weak):
        _, scn = weak
        states = {t: [t % 2 == 0] * len(scn.evs) for t in range(1, scn.T + 1)}
        v_a, rep_a = simulate_states(scn, states)
        v_b, rep_b = simulate_states(scn, states)
        assert v_a == v_b
        assert rep_a.entries == rep_b.entries

    def test_snapshot_places_ev_demand_at_ev_nodes(self, tiny):
        _, scn = tiny
        snap_off = snapshot_for(scn, 1, [False] * len(scn.evs))
        snap_on = snapshot_for(scn, 1, [True] * len(scn.evs))
        extra = {n: snap_on.demand.get(n, 0j) - snap_off.demand.get(n, 0j)
                 for n in set(snap_on.demand) | set(snap_off.demand)}
        per_node = {}
        for ev in scn.evs:
            per_node[ev.node] = per_node.get(ev.node, 0) + 1
        for node, count in per_node.items():
            assert extra[node] == pytest.approx(count * scn.rate_pu)
        assert all(abs(v) < 1e-15 for n, v in extra.items() if n not in per_node)
