"""Steady and transient solvers."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermnet import solvers
from thermnet.catalog import NAMES
from thermnet.errors import SolverError
from thermnet.model import model_from_dict
from thermnet.network import Network
from thermnet.solvers import (
    SolveOptions, close_arithmetic_nodes, solve_steady, solve_steady_iterative, solve_steady_newton,
    solve_transient,
)

from conftest import SIGMA

T_EQ = (1.0 / (SIGMA * 0.01) + 3.0**4) ** 0.25


def single_radiator(C=10.0, T0=300.0, load=1.0):
    return model_from_dict({
        "nodes": [{"id": "n", "kind": "diffusion", "capacity": C, "temperature": T0},
                  {"id": "space", "kind": "boundary", "temperature": 3.0}],
        "loads": [{"id": "q", "node": "n", "kind": "constant", "power": load}],
        "rad_couplings": {"entries": [{"i": "n", "j": "space", "gr": 0.01}]},
    })


def decay_model():
    return model_from_dict({
        "nodes": [{"id": "m", "kind": "diffusion", "capacity": 100.0, "temperature": 110.0},
                  {"id": "b", "kind": "boundary", "temperature": 100.0}],
        "conductors": [{"id": "g", "node_a": "m", "node_b": "b", "kind": "constant", "gl": 1.0}],
    })


def arithmetic_model(couplings, conductors=()):
    nodes = [{"id": "x", "kind": "arithmetic", "temperature": 50.0}]
    seen = set()
    for b, T, _ in [*couplings, *conductors]:
        if b not in seen:
            nodes.append({"id": b, "kind": "boundary", "temperature": T})
            seen.add(b)
    return model_from_dict({
        "nodes": nodes,
        "rad_couplings": {"entries": [{"i": "x", "j": b, "gr": g} for b, _, g in couplings]},
        "conductors": [{"id": f"c{k}", "node_a": "x", "node_b": b, "kind": "constant", "gl": g}
                       for k, (b, _, g) in enumerate(conductors)],
    })


class TestOptions:
    @pytest.mark.parametrize("kw", [dict(tol_residual=0), dict(damping=0), dict(damping=1.5),
                                    dict(dt_min=2.0, dt_max=1.0), dict(method="euler"),
                                    dict(error_tol_abs=-1)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SolveOptions(**kw)


class TestSteady:
    def test_closed_form(self):
        s = solve_steady_newton(single_radiator())
        assert abs(s["n"] - T_EQ) < 1e-6
        assert T_EQ == pytest.approx(204.93, abs=5e-3)

    def test_iterative_closed_form(self):
        s = solve_steady_iterative(single_radiator())
        assert abs(s["n"] - T_EQ) < 1e-3

    def test_linear_chain_one_step(self, networks):
        s = solve_steady_newton(networks["strut_chain"])
        assert s.iterations <= 2
        T = np.array([s[f"rod_{k}"] for k in range(1, 11)])
        x = (np.arange(10) + 0.5) / 10
        assert np.allclose(T, 293.15 + (30.0 - 293.15) * x, atol=1e-9)

    def test_linear_chain_iterative_undamped(self, networks):
        s = solve_steady_iterative(networks["strut_chain"], options=SolveOptions(damping=1.0))
        assert s["rod_5"] == pytest.approx(293.15 + (30 - 293.15) * 0.45, abs=1e-3)

    def test_symmetric_pair(self):
        m = model_from_dict({
            "nodes": [{"id": "a", "kind": "diffusion", "capacity": 1.0, "temperature": 100.0},
                      {"id": "b", "kind": "diffusion", "capacity": 1.0, "temperature": 200.0},
                      {"id": "space", "kind": "boundary", "temperature": 3.0}],
            "loads": [{"id": "qa", "node": "a", "kind": "constant", "power": 2.0},
                      {"id": "qb", "node": "b", "kind": "constant", "power": 2.0}],
            "rad_couplings": {"entries": [{"i": "a", "j": "b", "gr": 0.2}, {"i": "a", "j": "space", "gr": 0.05},
                                          {"i": "b", "j": "space", "gr": 0.05}]},
        })
        s = solve_steady_newton(m)
        assert s["a"] == pytest.approx(s["b"], abs=1e-9)

    @pytest.mark.parametrize("name", NAMES)
    def test_solvers_agree(self, name, networks):
        net = networks[name]
        a = solve_steady_newton(net)
        b = solve_steady_iterative(net)
        assert np.max(np.abs(a.T - b.T)) < 1e-3

    def test_dispatch(self):
        s = solve_steady(single_radiator(), options=SolveOptions(method="iterative"))
        assert s.method == "iterative"

    def test_isolated_node(self):
        m = model_from_dict({
            "nodes": [{"id": "lonely", "kind": "diffusion", "capacity": 1.0, "temperature": 50.0},
                      {"id": "sink", "kind": "boundary", "temperature": 10.0}],
        })
        with pytest.raises(SolverError, match="lonely"):
            solve_steady_newton(m)

    def test_non_convergence_reports_state(self):
        with pytest.raises(SolverError) as exc:
            solve_steady_newton(single_radiator(), options=SolveOptions(max_iter=1, tol_residual=1e-14))
        assert "n" in exc.value.state
        assert exc.value.history

    @given(st.floats(0.01, 50.0), st.floats(1e-3, 1.0))
    def test_residual_vanishes(self, load, gr):
        m = model_from_dict({
            "nodes": [{"id": "n", "kind": "diffusion", "capacity": 1.0, "temperature": 100.0},
                      {"id": "space", "kind": "boundary", "temperature": 3.0}],
            "loads": [{"id": "q", "node": "n", "kind": "constant", "power": load}],
            "rad_couplings": {"entries": [{"i": "n", "j": "space", "gr": gr}]},
        })
        s = solve_steady_newton(m)
        exact = (load / (SIGMA * gr) + 81.0) ** 0.25
        assert s["n"] == pytest.approx(exact, rel=1e-9)


    @pytest.mark.parametrize("method", ["newton", "iterative"])
    def test_follows_boundary_set_on_network(self, method, networks):
        net = Network(networks["single_capacitor"].model)
        opts = SolveOptions(method=method)
        base = solve_steady(net, options=opts)["mass"]
        net.T_fixed[net.index["spacecraft"]] += 50.0
        assert solve_steady(net, options=opts)["mass"] == pytest.approx(base + 50.0, abs=1e-6)

class TestArithmetic:
    def test_isothermal_bath(self):
        m = arithmetic_model([("h1", 300.0, 1.0), ("h2", 300.0, 1.0)])
        assert close_arithmetic_nodes(m, {})["x"] == pytest.approx(300.0, abs=1e-9)

    def test_radiative_mean(self):
        m = arithmetic_model([("hot", 400.0, 1.0), ("cold", 1e-9, 1.0)])
        assert close_arithmetic_nodes(m, {})["x"] == pytest.approx((0.5 * 400.0**4) ** 0.25, abs=1e-6)
        assert (0.5 * 400.0**4) ** 0.25 == pytest.approx(336.36, abs=5e-3)

    def test_conductive_mean(self):
        m = arithmetic_model([], conductors=[("a", 100.0, 1.0), ("b", 200.0, 1.0)])
        assert close_arithmetic_nodes(m, {})["x"] == pytest.approx(150.0, abs=1e-9)

    def test_transient_keeps_arithmetic_closed(self, maqro_net):
        r = solve_transient(maqro_net, None, (0.0, 3600.0), SolveOptions(method="bdf", dt_initial=10.0))
        k = maqro_net.index["test_volume"]
        for row in r.T[::5]:
            R = maqro_net.residual(row)
            assert abs(R[k]) < 1e-9


class TestTransient:
    @pytest.mark.parametrize("method", ["crank_nicolson", "bdf"])
    def test_first_order_decay(self, method):
        r = solve_transient(decay_model(), None, (0.0, 100.0), SolveOptions(method=method), t_eval=[0.0, 100.0])
        offset = r.node("m")[-1] - 100.0
        assert offset == pytest.approx(10 * math.exp(-1), rel=1e-3)

    def test_zero_span(self):
        r = solve_transient(decay_model(), None, (5.0, 5.0))
        assert r.times.tolist() == [5.0]
        assert r.node("m")[0] == 110.0

    @pytest.mark.parametrize("method", ["crank_nicolson", "bdf"])
    def test_result_invariants(self, method, networks):
        r = solve_transient(networks["cube"], None, (0.0, 2000.0), SolveOptions(method=method))
        assert np.all(np.diff(r.times) > 0)
        assert np.all(np.isfinite(r.T)) and np.all(r.T > 0)
        assert r.times[-1] == 2000.0

    @pytest.mark.parametrize("method", ["crank_nicolson", "bdf"])
    def test_radiative_cooldown_matches_reference(self, method):
        m = single_radiator(C=50.0, T0=300.0, load=0.0)
        te = np.linspace(0.0, 5000.0, 11)
        ref = _fixed_step(m, 5000.0, 0.05, te)
        r = solve_transient(m, None, (0.0, 5000.0), SolveOptions(method=method), t_eval=te)
        assert np.max(np.abs(r.node("n") - ref)) < 1e-3

    @pytest.mark.parametrize("method", ["crank_nicolson", "bdf"])
    def test_halving_tolerance_halves_error(self, method):
        errs = _tolerance_sweep(method, (1e-3, 5e-4, 2.5e-4))
        assert errs[1] <= 0.5 * errs[0]
        assert errs[2] <= 0.5 * errs[1]

    @pytest.mark.parametrize("method", ["crank_nicolson", "bdf"])
    def test_error_proportional_to_tolerance_without_cap(self, method, monkeypatch):
        """Pure per-unit-step control: deviation scales like tol (empirical order near 1)."""
        monkeypatch.setattr(solvers, "EPUS_CAP", math.inf)
        tols = (4e-3, 2e-3, 1e-3, 5e-4, 2.5e-4)
        errs = _tolerance_sweep(method, tols)
        order = np.polyfit(np.log(tols), np.log(errs), 1)[0]
        assert order > 0.9

    def test_crank_nicolson_second_order_fixed_step(self):
        m = single_radiator(C=50.0, T0=300.0, load=0.0)
        te = np.linspace(0.0, 2000.0, 5)
        ref = _fixed_step(m, 2000.0, 0.25, te)
        errs = [np.max(np.abs(_fixed_step(m, 2000.0, dt, te) - ref)) for dt in (40.0, 20.0, 10.0)]
        for a, b in zip(errs, errs[1:]):
            assert a / b == pytest.approx(4.0, rel=0.15)

    @pytest.mark.parametrize("name", ["two_node", "single_capacitor", "cube", "strut_chain", "coaxial_discs"])
    def test_converges_to_steady(self, name, networks):
        net = networks[name]
        r = solve_transient(net, None, (0.0, 1e9), SolveOptions(method="bdf", dt_initial=1.0), steady_rate=1e-8)
        assert r.diagnostics["steady_reached"]
        s = solve_steady_newton(net)
        assert np.max(np.abs(r.T[-1] - s.T)) < 0.01

    @pytest.mark.parametrize("name", [n for n in NAMES if not n.startswith("maqro")])
    def test_methods_agree(self, name, networks):
        net = networks[name]
        te = np.linspace(0.0, 20000.0, 21)
        a = solve_transient(net, None, (0.0, 20000.0), SolveOptions(method="crank_nicolson"), t_eval=te)
        b = solve_transient(net, None, (0.0, 20000.0), SolveOptions(method="bdf"), t_eval=te)
        assert np.max(np.abs(a.T - b.T)) < 10 * SolveOptions().error_tol_abs

    def test_early_stop_reports_final_state(self):
        r = solve_transient(decay_model(), None, (0.0, 1e6), SolveOptions(method="bdf"), t_eval=[0.0, 5e5, 1e6],
                            steady_rate=1e-8)
        assert r.diagnostics["steady_reached"]
        assert r.times[0] == 0.0 and r.times[-1] == r.diagnostics["t_final"] < 5e5
        assert r.node("m")[-1] == pytest.approx(100.0, abs=1e-5)

    def test_timeseries_breakpoint(self):
        m = model_from_dict({
            "nodes": [{"id": "m", "kind": "diffusion", "capacity": 100.0, "temperature": 100.0},
                      {"id": "b", "kind": "boundary", "temperature": 100.0}],
            "conductors": [{"id": "g", "node_a": "m", "node_b": "b", "kind": "constant", "gl": 1.0}],
            "loads": [{"id": "step", "node": "m", "kind": "timeseries",
                       "samples": [[0.0, 0.0], [50.0, 0.0], [50.001, 5.0], [1000.0, 5.0]]}],
        })
        r = solve_transient(m, None, (0.0, 300.0), SolveOptions(method="crank_nicolson"), t_eval=[50.0, 150.0, 300.0])
        T = r.node("m")
        assert T[0] == pytest.approx(100.0, abs=1e-9)
        # ramp over 1 ms is a step to within 1e-5 K
        assert T[1] - 100.0 == pytest.approx(5 * (1 - math.exp(-1)), abs=1e-3)
        assert T[2] - 100.0 == pytest.approx(5 * (1 - math.exp(-2.5)), abs=1e-3)

    @settings(max_examples=15)
    @given(st.lists(st.floats(5.0, 500.0), min_size=3, max_size=3), st.lists(st.floats(0.01, 2.0), min_size=3,
                                                                              max_size=3),
           st.floats(1e-4, 0.05), st.sampled_from(["crank_nicolson", "bdf"]))
    def test_monotone_cooldown(self, caps, gls, gr, method):
        """No loads and one cold sink: no node may warm up.

        Monotone at the integrator's resolution: a rise must stay below
        1% of the absolute error tolerance.
        """
        nodes = [{"id": f"n{k}", "kind": "diffusion", "capacity": c, "temperature": 293.15}
                 for k, c in enumerate(caps)]
        nodes.append({"id": "sink", "kind": "boundary", "temperature": 20.0})
        chain = ["sink", "n0", "n1", "n2"]
        m = model_from_dict({
            "nodes": nodes,
            "conductors": [{"id": f"c{k}", "node_a": chain[k], "node_b": chain[k + 1], "kind": "constant",
                            "gl": g} for k, g in enumerate(gls)],
            "rad_couplings": {"entries": [{"i": "n2", "j": "sink", "gr": gr}]},
        })
        net = Network(m)
        opts = SolveOptions(method=method)
        r = solve_transient(net, None, (0.0, 20000.0), opts)
        D = np.flatnonzero(net.diffusion)
        assert np.all(np.diff(r.T[:, D], axis=0) <= 0.01 * opts.error_tol_abs)
        assert np.all(r.T[:, D] >= 20.0 - 0.01 * opts.error_tol_abs)


def _tolerance_sweep(method, tols, span=5000.0):
    m = single_radiator(C=50.0, T0=300.0, load=0.0)
    te = np.linspace(0.0, span, 11)
    ref = _fixed_step(m, span, 0.05, te)
    errs = []
    for tol in tols:
        r = solve_transient(m, None, (0.0, span),
                            SolveOptions(method=method, error_tol_abs=tol, error_tol_rel=tol / 100), t_eval=te)
        errs.append(np.max(np.abs(r.node("n") - ref)))
    return errs


def _fixed_step(model, t_end, dt, t_eval):
    r = solve_transient(model, None, (0.0, t_end),
                        SolveOptions(method="crank_nicolson", adaptive=False, dt_initial=dt), t_eval=t_eval)
    return r.node("n") if "n" in r.node_ids else r.T
