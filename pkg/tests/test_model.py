"""Model files, material tables and conductive couplings."""
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thermnet.catalog import NAMES, model_path
from thermnet.errors import ModelError
from thermnet.model import (
    Conductor, MaterialTable, conductor_GL, eval_material, model_from_dict, parse_model,
    serialize_model, subdivide_chain,
)
from thermnet.network import Network
from thermnet.solvers import solve_steady_newton

TWO_NODE = {
    "nodes": [
        {"id": "space", "kind": "boundary", "temperature": 3.0},
        {"id": "n1", "kind": "diffusion", "capacity": 5.0, "temperature": 20.0},
    ],
    "conductors": [{"id": "c1", "node_a": "n1", "node_b": "space", "kind": "constant", "gl": 0.5}],
}


def _with(**changes):
    d = json.loads(json.dumps(TWO_NODE))
    d.update(changes)
    return d


class TestParse:
    def test_minimal_two_node(self):
        m = model_from_dict(TWO_NODE)
        assert len(m.nodes) == 2
        assert len(m.conductors) == 1

    @pytest.mark.parametrize("name", NAMES)
    def test_round_trip_shipped(self, name, shipped):
        m = shipped[name]
        assert parse_model(serialize_model(m)) == m

    def test_shipped_files_parse(self):
        for name in NAMES:
            assert model_path(name).is_file()

    def test_undefined_material_names_id_and_conductor(self):
        d = _with(conductors=[{"id": "strut_c", "node_a": "n1", "node_b": "space", "kind": "geometric",
                               "area": 1e-4, "length": 0.1, "material": "sic"}])
        with pytest.raises(ModelError) as exc:
            model_from_dict(d)
        assert "sic" in str(exc.value)
        assert "strut_c" in str(exc.value)

    def test_syntax_error_has_position(self):
        with pytest.raises(ModelError) as exc:
            parse_model('{"nodes": [\n  {"id": "a",, }]}')
        assert exc.value.line == 2
        assert exc.value.column is not None

    def test_unknown_key_rejected(self):
        with pytest.raises(ModelError) as exc:
            model_from_dict(_with(colour="red"))
        assert "colour" in str(exc.value)

    def test_duplicate_node_id(self):
        nodes = TWO_NODE["nodes"] + [{"id": "n1", "kind": "diffusion", "capacity": 1.0, "temperature": 10.0}]
        with pytest.raises(ModelError, match="duplicate"):
            model_from_dict(_with(nodes=nodes))

    def test_self_loop_conductor(self):
        with pytest.raises(ModelError):
            model_from_dict(_with(conductors=[{"id": "c", "node_a": "n1", "node_b": "n1", "kind": "constant",
                                               "gl": 1.0}]))

    def test_unresolved_conductor_node(self):
        with pytest.raises(ModelError, match="ghost"):
            model_from_dict(_with(conductors=[{"id": "c", "node_a": "n1", "node_b": "ghost", "kind": "constant",
                                               "gl": 1.0}]))

    @pytest.mark.parametrize("node, field", [
        ({"id": "d", "kind": "diffusion", "capacity": 0.0, "temperature": 10.0}, "capacity"),
        ({"id": "a", "kind": "arithmetic", "capacity": 2.0, "temperature": 10.0}, "capacity"),
        ({"id": "b", "kind": "boundary", "temperature": 0.0}, "temperature"),
    ])
    def test_node_invariants(self, node, field):
        d = _with(nodes=TWO_NODE["nodes"] + [node])
        with pytest.raises(ModelError) as exc:
            model_from_dict(d)
        assert field in str(exc.value)

    def test_negative_gl_rejected(self):
        with pytest.raises(ModelError):
            model_from_dict(_with(conductors=[{"id": "c", "node_a": "n1", "node_b": "space", "kind": "constant",
                                               "gl": -1.0}]))

    def test_timeseries_must_increase(self):
        loads = [{"id": "q", "node": "n1", "kind": "timeseries", "samples": [[0, 1.0], [10, 2.0], [5, 1.0]]}]
        with pytest.raises(ModelError):
            model_from_dict(_with(loads=loads))

    def test_emissivity_range(self):
        face = {"id": "f", "node": "n1", "side": "front", "alpha": 0.5, "epsilon": 1.5,
                "shape": {"type": "disc", "radius": 0.1}}
        with pytest.raises(ModelError):
            model_from_dict(_with(faces=[face]))

    def test_needs_a_sink(self):
        d = {"nodes": [{"id": "n1", "kind": "diffusion", "capacity": 5.0, "temperature": 20.0}]}
        with pytest.raises(ModelError, match="sink"):
            model_from_dict(d)


class TestMaterial:
    T2 = MaterialTable("m", conductivity=((20.0, 10.0), (40.0, 20.0)), specific_heat=((20.0, 1.0),))
    T3 = MaterialTable("m", conductivity=((20.0, 10.0), (40.0, 20.0), (80.0, 30.0)), specific_heat=((20.0, 1.0),))

    def test_midpoint(self):
        assert eval_material(self.T2, "conductivity", 30.0) == pytest.approx(15.0, abs=1e-12)

    def test_clamp_below(self):
        assert eval_material(self.T2, "conductivity", 10.0) == 10.0

    def test_second_segment(self):
        assert eval_material(self.T3, "conductivity", 60.0) == pytest.approx(25.0, abs=1e-12)

    def test_rejects_non_positive_temperature(self):
        with pytest.raises(ValueError):
            eval_material(self.T2, "conductivity", 0.0)

    def test_unsorted_table_rejected(self):
        d = _with(materials=[{"name": "bad", "conductivity": [[40, 1], [20, 2]], "specific_heat": [[4, 1]]}])
        with pytest.raises(ModelError):
            model_from_dict(d)

    @given(st.lists(st.floats(1.0, 400.0), min_size=2, max_size=8, unique=True),
           st.data())
    def test_knots_reproduced_and_continuous(self, ts, data):
        ts = sorted(ts)
        vs = data.draw(st.lists(st.floats(0.01, 1e3), min_size=len(ts), max_size=len(ts)))
        table = MaterialTable("x", conductivity=tuple(zip(ts, vs)), specific_heat=((1.0, 1.0),))
        for t, v in zip(ts, vs):
            assert eval_material(table, "conductivity", t) == pytest.approx(v, rel=1e-12)
        for t in ts:
            lo = eval_material(table, "conductivity", t * (1 - 1e-9))
            hi = eval_material(table, "conductivity", t * (1 + 1e-9))
            assert abs(hi - lo) <= 1e-5 * max(vs)


class TestConductance:
    def test_geometric_constant_k(self):
        mat = MaterialTable("k1", conductivity=((10.0, 1.0),), specific_heat=((10.0, 1.0),))
        c = Conductor("c", "a", "b", "geometric", area=0.01, length=0.1, material="k1")
        assert conductor_GL(c, 50.0, {"k1": mat}) == pytest.approx(0.1, rel=1e-12)

    def test_constant_independent_of_temperature(self):
        c = Conductor("c", "a", "b", "constant", gl=3.3e-5)
        assert conductor_GL(c, 10.0) == conductor_GL(c, 300.0) == 3.3e-5

    def test_geometric_table(self):
        mat = MaterialTable("t", conductivity=((20.0, 10.0), (40.0, 20.0)), specific_heat=((10.0, 1.0),))
        c = Conductor("c", "a", "b", "geometric", area=1e-4, length=0.5, material="t")
        assert conductor_GL(c, 30.0, {"t": mat}) == pytest.approx(15 * 1e-4 / 0.5, rel=1e-12)


CONST_K = MaterialTable("const_k", conductivity=((1.0, 2.0),), specific_heat=((1.0, 500.0),))


class TestSubdivide:
    def test_single_node(self):
        nodes, conds = subdivide_chain(1.0, 1e-4, CONST_K, 1, "a", "b", density=1000.0)
        assert len(nodes) == 1
        assert [c.length for c in conds] == [0.5, 0.5]

    def test_three_nodes_spans_and_resistance(self):
        nodes, conds = subdivide_chain(0.3, 1e-4, CONST_K, 3, "a", "b", density=1000.0)
        assert [c.length for c in conds] == pytest.approx([0.05, 0.1, 0.1, 0.05], abs=1e-15)
        r = sum(c.length / (2.0 * c.area) for c in conds)
        assert r == pytest.approx(0.3 / (2.0 * 1e-4), rel=1e-12)

    def test_mass_split(self):
        nodes, _ = subdivide_chain(2.0, 1e-3, CONST_K, 4, "a", "b", density=100.0)
        assert sum(n.capacity.mass for n in nodes) == pytest.approx(100.0 * 1e-3 * 2.0)

    def test_rejects_zero_nodes(self):
        with pytest.raises(ValueError):
            subdivide_chain(1.0, 1e-4, CONST_K, 0, "a", "b", density=1.0)

    def test_linear_profile(self, shipped):
        net = Network(shipped["strut_chain"])
        T = solve_steady_newton(net).T
        ids = [f"rod_{k}" for k in range(1, 11)]
        xs = (np.arange(10) + 0.5) / 10
        Ts = np.array([T[net.index[i]] for i in ids])
        expected = 293.15 + (30.0 - 293.15) * xs
        assert np.max(np.abs(Ts - expected)) < 1e-9


def _chain_flow(n):
    """End heat flow of a GFRP rod between 293.15 K and 30 K split into ``n`` nodes."""
    from thermnet.catalog import MATERIALS

    gfrp = MaterialTable("gfrp", tuple(map(tuple, MATERIALS["gfrp"]["conductivity"])),
                         tuple(map(tuple, MATERIALS["gfrp"]["specific_heat"])))
    nodes, conds = subdivide_chain(0.5, 1e-4, gfrp, n, "hot", "cold", density=1900.0)
    d = {
        "materials": [{"name": "gfrp", "conductivity": [list(p) for p in gfrp.conductivity],
                       "specific_heat": [list(p) for p in gfrp.specific_heat]}],
        "nodes": [{"id": "hot", "kind": "boundary", "temperature": 293.15},
                  {"id": "cold", "kind": "boundary", "temperature": 30.0}]
        + [{"id": x.id, "kind": "diffusion", "temperature": 150.0,
            "capacity": {"material": "gfrp", "mass": x.capacity.mass}} for x in nodes],
        "conductors": [{"id": c.id, "node_a": c.node_a, "node_b": c.node_b, "kind": "geometric",
                        "area": c.area, "length": c.length, "material": "gfrp"} for c in conds],
    }
    net = Network(model_from_dict(d))
    T = solve_steady_newton(net).T
    a, b = net.index["hot"], net.index[nodes[0].id]
    gl, _ = net.conductances(T)
    k = int(np.flatnonzero((net.ca == a) & (net.cb == b))[0])
    return gl[k] * (T[a] - T[b])


def test_refinement_converges():
    flows = {n: _chain_flow(n) for n in (4, 8, 16, 32, 64)}
    diffs = [abs(flows[2 * n] - flows[n]) for n in (4, 8, 16, 32)]
    assert all(b < a for a, b in zip(diffs, diffs[1:]))
    assert diffs[-1] < diffs[1]
    # steady flow of the continuous rod: S/L times the integral of k(T) dT
    from thermnet.catalog import MATERIALS

    ts, ks = np.array(MATERIALS["gfrp"]["conductivity"]).T
    x = np.linspace(30.0, 293.15, 200_001)
    exact = 1e-4 / 0.5 * np.trapezoid(np.interp(x, ts, ks), x)
    assert abs(flows[64] - exact) / exact < 1e-4
