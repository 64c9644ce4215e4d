"""Energy balance of the lumped network.

For every node the net incoming power is the sum of radiative flows
``GR sigma (T_j^4 - T_i^4)``, conductive flows ``GL (T_j - T_i)``,
dissipations and environmental loads.  At steady state it vanishes; in a
transient it equals ``m c dT/dt``.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import ModelError, SolverError
from .model import SPACE, MaterialCapacity, Model

KIND_CODES = {"diffusion": 0, "boundary": 1, "arithmetic": 2}


def radiative_flow(GR: float, T_i: float, T_j: float, sigma: float = 5.670374419e-8) -> float:
    """Net radiative power from node i to node j."""
    return GR * sigma * (T_i**4 - T_j**4)


def conductive_flow(GL: float, T_i: float, T_j: float) -> float:
    """Net conductive power from node i to node j."""
    return GL * (T_i - T_j)


def node_level_couplings(model: Model, rad=None) -> dict[tuple[str, str], float]:
    """Fold radiative entries onto node pairs.

    Face ids map to their owning node, self-couplings are dropped, and a
    pair listed in both orientations is averaged rather than double counted.
    """
    rad = model.rad_couplings if rad is None else rad
    if rad is None:
        return {}
    owner = {f.id: f.node for f in model.faces}
    by_pair: dict[tuple[str, str], dict[bool, float]] = defaultdict(lambda: defaultdict(float))
    for e in rad.entries:
        key = (e.i, e.j) if e.i <= e.j else (e.j, e.i)
        by_pair[key][e.i <= e.j] += e.gr
    out: dict[tuple[str, str], float] = defaultdict(float)
    for key, parts in by_pair.items():
        gr = sum(parts.values()) / len(parts)
        a, b = (owner.get(x, x) for x in key)
        if a == b or gr == 0.0:
            continue
        out[(a, b) if a <= b else (b, a)] += gr
    return dict(out)


class Network:
    """Compiled, array-based view of a model used by all solvers.

    Node order follows the model; an implicit ``space`` boundary node is
    appended when the model does not declare one.
    """

    def __init__(self, model: Model, rad=None):
        if rad is None and model.rad_couplings is None and any(f.active for f in model.faces):
            from .radiative import compute_exchange_factors, to_rad_couplings

            rad = to_rad_couplings(compute_exchange_factors(model))
        self.model = model
        self.sigma = model.constants.sigma
        nodes = list(model.nodes)
        self.ids = [n.id for n in nodes]
        if SPACE not in self.ids:
            self.ids.append(SPACE)
        self.index = {nid: k for k, nid in enumerate(self.ids)}
        n = self.n = len(self.ids)

        self.kind = np.ones(n, dtype=int)
        self.T_init = np.full(n, model.constants.space_temperature)
        self.groups = [SPACE] * n
        self._cap_const = np.zeros(n)
        cap_tables = defaultdict(list)
        for node in nodes:
            k = self.index[node.id]
            self.kind[k] = KIND_CODES[node.kind]
            self.T_init[k] = node.temperature
            self.groups[k] = node.group if node.group is not None else node.id
            if isinstance(node.capacity, MaterialCapacity):
                cap_tables[node.capacity.material].append((k, node.capacity.mass))
            else:
                self._cap_const[k] = node.capacity
        self._cap_tables = [
            (model.material(name), np.array([k for k, _ in rows]), np.array([m for _, m in rows]))
            for name, rows in cap_tables.items()
        ]
        self.boundary = self.kind == 1
        self.diffusion = self.kind == 0
        self.arithmetic = self.kind == 2
        self.unknown = ~self.boundary
        self.T_fixed = np.where(self.boundary, self.T_init, np.nan)

        cs = model.conductors
        self.c_ids = [c.id for c in cs]
        self.ca = np.array([self.index[c.node_a] for c in cs], dtype=int)
        self.cb = np.array([self.index[c.node_b] for c in cs], dtype=int)
        self.c_const = np.array([c.gl if c.kind == "constant" else 0.0 for c in cs])
        self.c_factor = np.array([c.area / c.length if c.kind == "geometric" else 0.0 for c in cs])
        by_mat = defaultdict(list)
        for k, c in enumerate(cs):
            if c.kind == "geometric":
                by_mat[c.material].append(k)
        self._c_mats = [(model.material(m), np.array(idx)) for m, idx in by_mat.items()]

        pairs = node_level_couplings(model, rad)
        self.r_pairs = sorted(pairs)
        self.ra = np.array([self.index[a] for a, _ in self.r_pairs], dtype=int)
        self.rb = np.array([self.index[b] for _, b in self.r_pairs], dtype=int)
        self.gr = np.array([pairs[p] for p in self.r_pairs])

        self.loads = list(model.loads)
        self._load_idx = np.array([self.index[ld.node] for ld in self.loads], dtype=int)
        self._check_isolated()
        self._setup_closure()

    # -- helpers -----------------------------------------------------------
    def _check_isolated(self):
        touched = np.zeros(self.n, dtype=bool)
        touched[self.ca] = touched[self.cb] = True
        touched[self.ra] = touched[self.rb] = True
        self.isolated = [self.ids[k] for k in np.flatnonzero(self.unknown & ~touched)]

    def vector(self, T) -> np.ndarray:
        """Accept an array in network order or a mapping node id -> K; fill boundaries."""
        if isinstance(T, Mapping):
            out = self.T_init.copy()
            for nid, v in T.items():
                out[self.index[nid]] = v
        else:
            out = np.array(T, dtype=float)
            if out.shape != (self.n,):
                raise ValueError(f"expected {self.n} temperatures, got shape {out.shape}")
        out[self.boundary] = self.T_fixed[self.boundary]
        return out

    def as_dict(self, T) -> dict[str, float]:
        return {nid: float(T[k]) for k, nid in enumerate(self.ids)}

    def check_finite(self, T):
        bad = ~np.isfinite(T) | (T < 0)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise ValueError(f"temperature of node {self.ids[k]!r} is not finite and >= 0: {T[k]}")

    def capacities(self, T) -> np.ndarray:
        C = self._cap_const.copy()
        for table, idx, mass in self._cap_tables:
            C[idx] = mass * table.value("specific_heat", T[idx])
        return C

    def conductances(self, T):
        """GL of every conductor at its mean endpoint temperature, and dGL/dT_mean."""
        Tm = 0.5 * (T[self.ca] + T[self.cb])
        gl = self.c_const.copy()
        dgl = np.zeros_like(gl)
        for table, idx in self._c_mats:
            gl[idx] = table.value("conductivity", Tm[idx]) * self.c_factor[idx]
            dgl[idx] = table.slope("conductivity", Tm[idx]) * self.c_factor[idx]
        return gl, dgl

    def load_vector(self, t: float = 0.0) -> np.ndarray:
        q = np.zeros(self.n)
        for k, ld in zip(self._load_idx, self.loads):
            q[k] += ld.at(t)
        return q

    def breakpoints(self) -> list[float]:
        return sorted({t for ld in self.loads for t in ld.knots()})

    # -- energy balance ----------------------------------------------------
    def coupling_flows(self, T):
        """(conductive a->b, radiative a->b) flow arrays."""
        gl, _ = self.conductances(T)
        qc = gl * (T[self.ca] - T[self.cb])
        qr = self.gr * self.sigma * (T[self.ra] ** 4 - T[self.rb] ** 4)
        return qc, qr

    def residual(self, T, t: float = 0.0, extra=None) -> np.ndarray:
        """Net incoming power per node in W (boundary rows included, not constrained)."""
        qc, qr = self.coupling_flows(T)
        R = self.load_vector(t)
        if extra is not None:
            R += extra(t) if callable(extra) else extra
        n = self.n
        R += np.bincount(self.cb, qc, n) - np.bincount(self.ca, qc, n)
        R += np.bincount(self.rb, qr, n) - np.bincount(self.ra, qr, n)
        return R

    def jacobian(self, T) -> np.ndarray:
        """Analytic dR/dT (n x n)."""
        n = self.n
        gl, dgl = self.conductances(T)
        half = 0.5 * dgl * (T[self.ca] - T[self.cb])
        dqa = gl + half  # dQ_ab / dT_a
        dqb = -gl + half  # dQ_ab / dT_b
        ga = 4.0 * self.sigma * self.gr * T[self.ra] ** 3
        gb = 4.0 * self.sigma * self.gr * T[self.rb] ** 3
        rows = np.concatenate([self.ca, self.ca, self.cb, self.cb, self.ra, self.ra, self.rb, self.rb])
        cols = np.concatenate([self.ca, self.cb, self.ca, self.cb, self.ra, self.rb, self.ra, self.rb])
        vals = np.concatenate([-dqa, -dqb, dqa, dqb, -ga, gb, ga, -gb])
        return np.bincount(rows * n + cols, vals, n * n).reshape(n, n)

    def _setup_closure(self):
        """Couplings touching arithmetic nodes, for the inner closure solve."""
        A = np.flatnonzero(self.arithmetic)
        self._A = A
        pos = np.full(self.n, -1)
        pos[A] = np.arange(len(A))
        self._pos = pos
        self._cmask = self.arithmetic[self.ca] | self.arithmetic[self.cb]
        self._rmask = self.arithmetic[self.ra] | self.arithmetic[self.rb]

    def _arith_balance(self, T, q_A):
        """Residual and Jacobian restricted to the arithmetic nodes."""
        A, pos, nA = self._A, self._pos, len(self._A)
        R = q_A.copy()
        J = np.zeros(nA * nA)
        cm, rm = self._cmask, self._rmask
        if cm.any():
            ca, cb = self.ca[cm], self.cb[cm]
            Tm = 0.5 * (T[ca] + T[cb])
            gl = self.c_const[cm].copy()
            dgl = np.zeros_like(gl)
            for table, idx in self._c_mats:
                sel = np.isin(np.flatnonzero(cm), idx)
                if sel.any():
                    f = self.c_factor[cm][sel]
                    gl[sel] = table.value("conductivity", Tm[sel]) * f
                    dgl[sel] = table.slope("conductivity", Tm[sel]) * f
            q = gl * (T[ca] - T[cb])
            half = 0.5 * dgl * (T[ca] - T[cb])
            self._accumulate(R, J, pos[ca], pos[cb], q, gl + half, -gl + half)
        if rm.any():
            ra, rb, g = self.ra[rm], self.rb[rm], self.gr[rm]
            q = g * self.sigma * (T[ra] ** 4 - T[rb] ** 4)
            ga = 4.0 * self.sigma * g * T[ra] ** 3
            gb = -4.0 * self.sigma * g * T[rb] ** 3
            self._accumulate(R, J, pos[ra], pos[rb], q, ga, gb)
        return R, J.reshape(nA, nA)

    @staticmethod
    def _accumulate(R, J, pa, pb, q, dqa, dqb):
        nA = len(R)
        ia, ib = pa >= 0, pb >= 0
        R -= np.bincount(pa[ia], q[ia], nA)
        R += np.bincount(pb[ib], q[ib], nA)
        both = ia & ib
        rows = np.concatenate([pa[ia], pa[both], pb[both], pb[ib]])
        cols = np.concatenate([pa[ia], pb[both], pa[both], pb[ib]])
        vals = np.concatenate([-dqa[ia], -dqb[both], dqa[both], dqb[ib]])
        J += np.bincount(rows * nA + cols, vals, nA * nA)

    def close_arithmetic(self, T, t: float = 0.0, extra=None, tol: float = 1e-12, max_iter: int = 60):
        """Solve the arithmetic-node balances with all other temperatures held fixed.

        Returns a copy of ``T`` with the arithmetic entries replaced.
        """
        A = np.flatnonzero(self.arithmetic)
        T = np.array(T, dtype=float)
        if len(A) == 0:
            return T
        if extra is not None and callable(extra):
            extra = extra(t)
        bad = ~np.isfinite(T[A]) | (T[A] <= 0)
        if bad.any():
            T[A[bad]] = _neighbour_guess(self, T, A[bad])
        q = self.load_vector(t)
        if extra is not None:
            q = q + extra
        q_A = q[A]
        for _ in range(max_iter):
            R, Jaa = self._arith_balance(T, q_A)
            try:
                dT = np.linalg.solve(Jaa, -R)
            except np.linalg.LinAlgError:
                raise SolverError(f"arithmetic nodes {[self.ids[k] for k in A]} have a singular balance",
                                  state=self.as_dict(T)) from None
            step = _positive_step(T[A], dT)
            T[A] += step * dT
            if np.max(np.abs(step * dT) / T[A]) < tol:
                return T
        R = self.residual(T, t, extra)[A]
        worst = A[int(np.argmax(np.abs(R)))]
        raise SolverError(f"arithmetic closure did not converge at node {self.ids[worst]!r}",
                          state=self.as_dict(T))


def _positive_step(T, dT, keep=0.5):
    """Largest factor <= 1 keeping every temperature above ``keep`` times its value."""
    neg = dT < 0
    if not neg.any():
        return 1.0
    limit = np.min((keep - 1.0) * T[neg] / dT[neg])
    return min(1.0, float(limit))


def _neighbour_guess(net: Network, T, nodes):
    """Coupling-weighted mean of known neighbour temperatures (150 K fallback)."""
    guess = []
    for k in nodes:
        w = 0.0
        s = 0.0
        for arr_a, arr_b, g in ((net.ca, net.cb, net.c_const + net.c_factor), (net.ra, net.rb, net.gr)):
            for a, b, gi in zip(arr_a, arr_b, g):
                other = b if a == k else a if b == k else None
                if other is not None and np.isfinite(T[other]) and T[other] > 0:
                    w += gi
                    s += gi * T[other]
        guess.append(s / w if w > 0 else 150.0)
    return np.array(guess)


def as_network(model_or_net) -> Network:
    return model_or_net if isinstance(model_or_net, Network) else Network(model_or_net)


def residual(model, T, t: float = 0.0, loads_at_t=None) -> dict[str, float]:
    """Net incoming power per node (W) at temperatures ``T``.

    ``loads_at_t`` adds environmental loads: an array in network order or a
    callable of time.
    """
    net = as_network(model)
    Tv = net.vector(T)
    net.check_finite(Tv)
    return net.as_dict(net.residual(Tv, t, loads_at_t))


# ---------------------------------------------------------------------------
# heat-flow reporting

@dataclass(frozen=True)
class Flow:
    source: str
    target: str
    kind: str
    watts: float


@dataclass
class FlowReport:
    flows: list[Flow]
    node_residual: dict[str, float]
    grouping: dict[str, str]
    group_flows: dict[tuple[str, str], float] = field(default_factory=dict)
    group_net: dict[str, float] = field(default_factory=dict)
    chain: list[tuple[str, str, float]] = field(default_factory=list)
    boundaries: tuple[str, ...] = ()

    def between(self, ga: str, gb: str) -> float:
        """Net power from group ``ga`` to group ``gb`` over direct couplings."""
        if ga not in self.group_net or gb not in self.group_net:
            missing = ga if ga not in self.group_net else gb
            raise KeyError(f"unknown group {missing!r}")
        return self.group_flows.get((ga, gb), 0.0) - self.group_flows.get((gb, ga), 0.0)

    def boundary_balance(self) -> float:
        """Power into boundaries/space minus power injected by loads; ~0 at steady state."""
        injected = sum(f.watts for f in self.flows if f.kind not in ("conductive", "radiative"))
        on_boundary = sum(f.watts for f in self.flows
                          if f.kind not in ("conductive", "radiative") and f.target in self.boundaries)
        inflow = sum(self.node_residual[b] for b in self.boundaries) - on_boundary
        return inflow - injected


def heat_flow_report(model, T, grouping: Mapping[str, str] | None = None, chain=None,
                     t: float = 0.0, extra=None, extra_kinds=None) -> FlowReport:
    """Per-coupling and per-group heat flows at temperatures ``T``.

    ``grouping`` maps node id -> group label (defaults to the node's
    ``group`` field, or its id).  ``chain`` is an ordered group list for
    which consecutive net group-to-group flows are extracted.
    ``extra``/``extra_kinds`` add environmental loads, with ``extra_kinds``
    a dict kind -> per-node array (e.g. ``{"solar": ..., "planetary": ...}``).
    """
    net = as_network(model)
    Tv = net.vector(T)
    net.check_finite(Tv)
    groups = dict(zip(net.ids, net.groups))
    if grouping:
        groups.update(grouping)
    flows: list[Flow] = []
    qc, qr = net.coupling_flows(Tv)
    for a, b, q in zip(net.ca, net.cb, qc):
        flows.append(_oriented(net.ids[a], net.ids[b], "conductive", q))
    for a, b, q in zip(net.ra, net.rb, qr):
        flows.append(_oriented(net.ids[a], net.ids[b], "radiative", q))
    for ld in net.loads:
        flows.append(Flow(f"load:{ld.id}", ld.node, "dissipation", ld.at(t)))
    env = np.zeros(net.n)
    for kind, arr in (extra_kinds or {}).items():
        for k in np.flatnonzero(arr):
            flows.append(Flow(kind, net.ids[k], kind, float(arr[k])))
        env = env + arr
    if extra is not None:
        env = env + (extra(t) if callable(extra) else extra)
    res = net.residual(Tv, t, env)

    group_flows: dict[tuple[str, str], float] = defaultdict(float)
    group_net = {g: 0.0 for g in groups.values()}
    for f in flows:
        if f.kind not in ("conductive", "radiative"):
            continue
        ga, gb = groups[f.source], groups[f.target]
        if ga != gb:
            group_flows[(ga, gb)] += f.watts
            group_net[ga] -= f.watts
            group_net[gb] += f.watts
    report = FlowReport(flows=flows, node_residual=net.as_dict(res), grouping=groups,
                        group_flows=dict(group_flows), group_net=group_net,
                        boundaries=tuple(net.ids[k] for k in np.flatnonzero(net.boundary)))
    if chain:
        for ga, gb in zip(chain, chain[1:]):
            for g in (ga, gb):
                if g not in group_net:
                    raise KeyError(f"unknown group {g!r}")
            report.chain.append((ga, gb, report.between(ga, gb)))
    return report


def _oriented(a, b, kind, q):
    return Flow(a, b, kind, float(q)) if q >= 0 else Flow(b, a, kind, float(-q))


_DOT_COLOURS = {"radiative": "purple", "conductive": "orange", "dissipation": "red",
                "solar": "gold", "planetary": "blue"}


def flows_to_dot(report: FlowReport, by_group: bool = True) -> str:
    """Graphviz digraph with edge widths proportional to |flow|."""
    agg: dict[tuple[str, str, str], float] = defaultdict(float)
    for f in report.flows:
        if by_group:
            a = report.grouping.get(f.source, f.source)
            b = report.grouping.get(f.target, f.target)
        else:
            a, b = f.source, f.target
        if a == b:
            continue
        agg[(a, b, f.kind)] += f.watts
    biggest = max((abs(v) for v in agg.values()), default=1.0) or 1.0
    lines = ["digraph heatflow {", "  rankdir=BT;"]
    for (a, b, kind), w in sorted(agg.items()):
        if w < 0:
            a, b, w = b, a, -w
        width = 0.5 + 6.0 * math.sqrt(w / biggest)
        lines.append(
            f'  "{a}" -> "{b}" [label="{w * 1e3:.4g} mW", color={_DOT_COLOURS.get(kind, "black")}, '
            f"penwidth={width:.3f}];"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


__all__ = [
    "radiative_flow", "conductive_flow", "residual", "heat_flow_report", "flows_to_dot",
    "Network", "Flow", "FlowReport", "node_level_couplings", "as_network",
]
