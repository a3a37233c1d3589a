import numpy as np
import pytest

from gridevac import cla, mathprog
from gridevac.eevc import (
    EevcInstance, ScheduleError, build_program, decode,
    schedule_to_demand, validate_schedule,
)
from gridevac.netmodel import (
    Bus, Ev, Line, NetworkModel, NodeId, ScenarioData, Taz,
)


def _bare_network(n_buses=2):
    buses = tuple(Bus(f"b{i}", ("a",)) for i in range(n_buses))
    lines = tuple(
        Line(f"b{i - 1}", f"b{i}", ("a",), np.array([[0.01 + 0.02j]]))
        for i in range(1, n_buses)
    )
    return NetworkModel(buses=buses, lines=lines, source_bus="b0",
                        source_voltage={"a": 1.0 + 0j}, base_kv=4.16,
                        base_kva=500.0)


def _scenario(evs, tazs, T=8, beta=4, n_buses=2):
    return ScenarioData(network=_bare_network(n_buses), background={},
                        tazs=tuple(tazs), evs=tuple(evs), T=T, beta=beta)


def _solve(scn):
    inst = EevcInstance(scenario=scn, include_grid=False)
    prog = build_program(inst)
    sol = mathprog.solve_milp(prog)
    assert sol.status == "optimal"
    return decode(prog, sol, inst), sol


class TestBuildProgram:
    def test_naive_program_has_no_slacks(self, tiny):
        _, scn = tiny
        prog = build_program(EevcInstance(scenario=scn, include_grid=False))
        assert not any(v.name.startswith("lam_") for v in prog.variables)
        assert not any(c.name == "budget" for c in prog.constraints)

    def test_fully_charged_ev_allows_gamma_T(self):
        scn = _scenario([Ev("ev0", "z0", NodeId("b1", "a"), 1.0)],
                        [Taz("z0", 8)])
        schedule, sol = _solve(scn)
        assert schedule.gamma_max == pytest.approx(8.0)
        assert sum(schedule.c_ev["ev0"]) == 0
        assert sum(schedule.tau) == 0

    def test_variable_and_constraint_counts(self, weak):
        # 2 TAZs, T=16, beta=4, 4 EVs: counts from the index sets documented
        # in the builder docstring.
        _, scn = weak
        n_taz, T, E = len(scn.tazs), scn.T, len(scn.evs)
        prog = build_program(EevcInstance(scenario=scn, include_grid=False))
        assert len(prog.variables) == 1 + T + n_taz * T + 2 * E * T
        assert len(prog.constraints) == \
            T + T + E * T + n_taz * T + n_taz * T + 2 * E * T + n_taz

    def test_grid_rows_require_fitted_cla(self, weak):
        _, scn = weak
        inst = EevcInstance(scenario=scn,
                            active_constraints=((NodeId("b1", "a"), 3, "under"),),
                            lambda_max=0.0, include_grid=True)
        with pytest.raises(mathprog.ProgramError, match="no CLA"):
            build_program(inst, cla.ClaModel())

    def test_grid_without_constraints_rejected(self, weak):
        _, scn = weak
        with pytest.raises(mathprog.ProgramError):
            build_program(EevcInstance(scenario=scn, include_grid=True))


class TestDecode:
    def test_single_taz_latest_start_closed_form(self):
        # One TAZ, EVs needing up to `need` steps, departure d: the naive
        # optimum starts at d - need.
        evs = [Ev("ev0", "z0", NodeId("b1", "a"), 0.5),
               Ev("ev1", "z0", NodeId("b1", "a"), 0.25)]
        scn = _scenario(evs, [Taz("z0", 7)], T=8, beta=4)
        schedule, sol = _solve(scn)
        need = max(scn.charge_steps(ev) for ev in evs)
        assert schedule.gamma_max == pytest.approx(scn.tazs[0].departure - need)
        assert schedule.taz_window("z0") == (4, 6)

    def test_objective_equals_recomputed_gamma(self, tiny):
        _, scn = tiny
        schedule, sol = _solve(scn)
        first = schedule.first_start()
        expected = float(first) if first is not None else float(scn.T)
        assert sol.objective == pytest.approx(expected, abs=1e-6)
        assert schedule.gamma_max == pytest.approx(expected, abs=1e-6)

    def test_battery_recursion_exact(self, tiny):
        _, scn = tiny
        schedule, _ = _solve(scn)
        for ev in scn.evs:
            batt = schedule.batteries[ev.id]
            c = schedule.c_ev[ev.id]
            assert batt[0] == ev.soc0
            for t in range(1, scn.T + 1):
                assert batt[t] == pytest.approx(
                    batt[t - 1] + c[t - 2] / scn.beta if t > 1 else ev.soc0,
                    abs=1e-12)

    def test_non_binary_solution_rejected(self, tiny):
        _, scn = tiny
        inst = EevcInstance(scenario=scn, include_grid=False)
        prog = build_program(inst)
        sol = mathprog.solve_milp(prog)
        sol.values[f"tau_{scn.T}"] = 0.4
        with pytest.raises(ScheduleError, match="not within"):
            decode(prog, sol, inst)


class TestValidateSchedule:
    def _valid(self, tiny):
        _, scn = tiny
        schedule, _ = _solve(scn)
        return scn, schedule

    def test_tampered_noncontiguous_charging_rejected(self, tiny):
        scn, schedule = self._valid(tiny)
        ev = max(scn.evs, key=scn.charge_steps)
        c = schedule.c_ev[ev.id]
        on = [t for t in range(1, scn.T + 1) if c[t - 1]]
        assert len(on) >= 2
        # Move the first charging step one slot earlier -> gap.
        c[on[0] - 1] = 0
        c[on[0] - 2] = 1
        schedule.batteries[ev.id] = [ev.soc0] + [
            ev.soc0 + sum(c[:t - 1]) / scn.beta for t in range(1, scn.T + 1)]
        with pytest.raises(ScheduleError):
            validate_schedule(schedule, scn)

    def test_ev_charging_outside_taz_window_rejected(self, tiny):
        scn, schedule = self._valid(tiny)
        ev = scn.evs[0]
        z = ev.taz
        t_idle = next(t for t in range(1, scn.T + 1)
                      if not schedule.c_taz[z][t - 1])
        schedule.c_ev[ev.id][t_idle - 1] = 1
        with pytest.raises(ScheduleError):
            validate_schedule(schedule, scn)

    def test_slack_budget_enforced(self, tiny):
        scn, schedule = self._valid(tiny)
        schedule.predicted_slacks[(NodeId("b1", "a"), 1, "under")] = 0.5
        with pytest.raises(ScheduleError, match="budget"):
            validate_schedule(schedule, scn, lambda_max=0.1)
        validate_schedule(schedule, scn, lambda_max=1.0)


class TestScheduleToDemand:
    def test_zero_when_idle_and_conservation(self, tiny):
        _, scn = tiny
        schedule, _ = _solve(scn)
        demand = schedule_to_demand(schedule, scn)
        total_steps = sum(vec.sum() for vec in demand.values()) / scn.rate_pu
        assert total_steps == pytest.approx(
            sum(scn.charge_steps(ev) for ev in scn.evs))
        for t, vec in demand.items():
            if not any(schedule.c_ev[ev.id][t - 1] for ev in scn.evs):
                assert np.all(vec == 0.0)

    def test_three_evs_one_bus(self):
        evs = [Ev(f"ev{i}", "z0", NodeId("b1", "a"), 0.75) for i in range(3)]
        scn = _scenario(evs, [Taz("z0", 8)], T=8, beta=4)
        schedule, _ = _solve(scn)
        demand = schedule_to_demand(schedule, scn)
        t_on = next(t for t in range(1, scn.T + 1)
                    if schedule.c_ev["ev0"][t - 1])
        # 3 EVs x 7.5 kW = 22.5 kW at the shared bus.
        assert demand[t_on][0] * scn.network.base_kva == pytest.approx(22.5)
