"""Linearization and frequency response."""
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thermnet.catalog import NAMES, STRUT_SECTIONS
from thermnet.linear import (
    cavity_instability, dc_gain, dc_gain_check, default_frequencies, frequency_response, linearize,
)
from thermnet.model import model_from_dict
from thermnet.network import Network
from thermnet.solvers import solve_steady_newton

from conftest import SIGMA


def low_pass(C=100.0, gl=1.0, T=100.0):
    return model_from_dict({
        "nodes": [{"id": "m", "kind": "diffusion", "capacity": C, "temperature": T},
                  {"id": "b", "kind": "boundary", "temperature": T}],
        "conductors": [{"id": "g", "node_a": "m", "node_b": "b", "kind": "constant", "gl": gl}],
    })


def radiator(T=100.0, gr=1.0):
    load = SIGMA * gr * (T**4 - 3.0**4)
    return model_from_dict({
        "nodes": [{"id": "n", "kind": "diffusion", "capacity": 1.0, "temperature": T},
                  {"id": "space", "kind": "boundary", "temperature": 3.0}],
        "loads": [{"id": "q", "node": "n", "kind": "constant", "power": load}],
        "rad_couplings": {"entries": [{"i": "n", "j": "space", "gr": gr}]},
    })


def steady(net):
    return solve_steady_newton(net).T


class TestLinearize:
    def test_radiative_stiffness(self):
        sys = linearize(radiator(), {"n": 100.0})
        assert sys.K[0, 0] == pytest.approx(4 * SIGMA * 1e6, rel=1e-12)
        assert sys.K[0, 0] == pytest.approx(0.2268, abs=5e-5)

    def test_conduction_laplacian(self, networks):
        net = networks["strut_chain"]
        sys = linearize(net, steady(net))
        assert np.allclose(sys.K, sys.K.T, rtol=0, atol=1e-15)
        gl, _ = net.conductances(steady(net))
        L = np.zeros((net.n, net.n))
        for g, a, b in zip(gl, net.ca, net.cb):
            L[a, a] += g
            L[b, b] += g
            L[a, b] -= g
            L[b, a] -= g
        U = [net.index[i] for i in sys.node_ids]
        assert np.allclose(sys.K, L[np.ix_(U, U)], rtol=1e-12, atol=0)

    @pytest.mark.parametrize("name", NAMES)
    def test_columns_match_central_differences(self, name, networks):
        net = networks[name]
        T = steady(net)
        sys = linearize(net, T)
        U = [net.index[i] for i in sys.node_ids]
        eps = 1e-3
        for c, k in enumerate(U):
            Tp, Tm = T.copy(), T.copy()
            Tp[k] += eps
            Tm[k] -= eps
            fd = ((net.residual(Tp) - net.residual(Tm)) / (2 * eps))[U]
            col = -sys.K[:, c]
            assert np.max(np.abs(fd - col)) / np.max(np.abs(col)) < 1e-6, (name, net.ids[k])

    def test_rejects_non_steady_state(self):
        with pytest.raises(ValueError, match="steady"):
            linearize(radiator(), {"n": 150.0})

    def test_arithmetic_rows_have_zero_capacity(self, maqro_net):
        sys = linearize(maqro_net, steady(maqro_net))
        assert sys.C[sys.node_ids.index("test_volume")] == 0.0


class TestFrequencyResponse:
    def test_low_pass_corner(self):
        sys = linearize(low_pass(), {"m": 100.0})
        f = 1.0 / (2 * math.pi * 100.0)
        g = frequency_response(sys, "boundary:b", [f]).node("m")[0]
        assert abs(g - 1 / math.sqrt(2)) < 1e-9
        assert g == pytest.approx(0.70711, abs=5e-6)

    def test_low_pass_grid(self):
        sys = linearize(low_pass(), {"m": 100.0})
        spec = frequency_response(sys, "boundary:b")
        exact = 1.0 / np.sqrt(1.0 + (2 * np.pi * spec.frequencies * 100.0) ** 2)
        assert np.max(np.abs(spec.node("m") - exact)) < 1e-9
        assert np.allclose(spec.phase[:, 0], -np.arctan(2 * np.pi * spec.frequencies * 100.0), atol=1e-12)

    def test_dc_follows_boundary(self):
        sys = linearize(low_pass(), {"m": 100.0})
        assert abs(frequency_response(sys, "boundary:b", [1e-12]).node("m")[0] - 1.0) < 1e-9

    def test_power_dc_gain(self):
        sys = linearize(low_pass(), {"m": 100.0})
        assert dc_gain(sys, "power:m")["m"] == pytest.approx(1.0, abs=1e-12)
        spec = frequency_response(sys, "power:m", [1e-12])
        assert spec.units == "K/W"
        assert spec.node("m")[0] == pytest.approx(1.0, abs=1e-9)

    @given(st.floats(1.0, 1e4), st.floats(1e-3, 10.0))
    def test_first_order_gain_decreasing(self, C, gl):
        sys = linearize(low_pass(C, gl), {"m": 100.0})
        g = frequency_response(sys, "boundary:b").node("m")
        assert np.all(np.diff(g) < 0)

    @pytest.mark.parametrize("name", NAMES)
    def test_low_frequency_plateau(self, name, networks):
        net = networks[name]
        sys = linearize(net, steady(net))
        for b in sys.boundary_ids:
            g = frequency_response(sys, f"boundary:{b}", [1e-6, 1e-1]).gain
            assert np.all(g[0] >= g[1] - 1e-15), (name, b)

    def test_descriptor_rows_algebraic(self, maqro_net):
        sys = linearize(maqro_net, steady(maqro_net))
        spec = frequency_response(sys, "boundary:spacecraft")
        b, _ = sys.input_vector("boundary:spacecraft")
        A = np.flatnonzero(sys.C == 0)
        assert len(A)
        for r, f in enumerate(spec.frequencies):
            x = spec.gain[r] * np.exp(1j * spec.phase[r])
            row = sys.K[A] @ x - b[A]
            assert np.max(np.abs(row)) < 1e-9, f

    def test_input_validation(self, maqro_net):
        sys = linearize(maqro_net, steady(maqro_net))
        with pytest.raises(KeyError):
            frequency_response(sys, "boundary:bench")
        with pytest.raises(ValueError):
            frequency_response(sys, "heat:bench")
        with pytest.raises(ValueError):
            frequency_response(sys, "boundary:spacecraft", [0.0, 1.0])

    def test_default_grid(self):
        f = default_frequencies()
        assert f[0] == pytest.approx(1e-6) and f[-1] == pytest.approx(1e-1)
        assert len(f) == 61

    def test_strut_gain_decreases_away_from_spacecraft(self, maqro_net):
        sys = linearize(maqro_net, steady(maqro_net))
        g = frequency_response(sys, "boundary:spacecraft", [1e-6])
        means = [np.mean([g.node(f"strut{s + 1}_{k + 1}")[0] for k in range(n)])
                 for s, n in enumerate(STRUT_SECTIONS)]
        assert all(b < a for a, b in zip(means, means[1:]))


class TestDcGainCheck:
    def test_linear_network_exact(self, networks):
        net = networks["strut_chain"]
        lin, nl = dc_gain_check(net, steady(net), "boundary:hot")
        for k in lin:
            assert lin[k] == pytest.approx(nl[k], rel=1e-9)

    def test_radiator_small_delta(self):
        lin, nl = dc_gain_check(radiator(), {"n": 100.0}, "boundary:space", delta=0.01)
        assert abs(lin["n"] - nl["n"]) / nl["n"] < 1e-3
        lin, nl = dc_gain_check(radiator(), {"n": 100.0}, "power:n", delta=1e-3)
        assert nl["n"] == pytest.approx(1 / (4 * SIGMA * 1e6), rel=1e-3)
        assert abs(lin["n"] - nl["n"]) / nl["n"] < 1e-3

    def test_large_delta_disagrees(self):
        lin, nl = dc_gain_check(radiator(), {"n": 100.0}, "boundary:space", delta=100.0)
        assert abs(lin["n"] - nl["n"]) / nl["n"] > 0.01

    @pytest.mark.parametrize("name", NAMES)
    def test_all_shipped_within_one_percent(self, name, networks):
        net = networks[name]
        T = steady(net)
        for k in np.flatnonzero(net.boundary):
            lin, nl = dc_gain_check(net, T, f"boundary:{net.ids[k]}", delta=0.1)
            for nid in lin:
                assert abs(lin[nid] - nl[nid]) <= 0.01 * abs(nl[nid]), (name, net.ids[k], nid)


class TestCavity:
    def test_product(self):
        assert cavity_instability(5e-10, 5.0, -0.63e-6) == pytest.approx(1.575e-15, rel=1e-12)

    def test_zero_amplitude(self):
        assert cavity_instability(5e-10, 0.0, -0.63e-6) == 0.0

    def test_unit(self):
        assert cavity_instability(1.0, 1.0, 1e-6) == pytest.approx(1e-6, rel=1e-15)
