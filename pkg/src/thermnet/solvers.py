"""Steady-state and transient solution of the network energy balance.

Steady state: a damped Newton method with direct linear solves, and an
independent nonlinear Gauss-Seidel point iteration used to cross-check it.

Transient: ``C(T) dT/dt = R(T, t)`` for the diffusion nodes, integrated by
adaptive Crank-Nicolson (step-doubling error control) or variable-step
BDF2 (Gear).  Arithmetic nodes are closed algebraically inside every
right-hand-side evaluation; boundary nodes stay fixed.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError
from .network import Network, _positive_step, as_network

# Error-per-unit-step control: a step of length h may use the fraction
# h / span of the tolerance, but never less than 1 / EPUS_CAP of it.
EPUS_CAP = 100.0

METHODS = ("newton", "iterative", "crank_nicolson", "bdf")


@dataclass(frozen=True)
class SolveOptions:
    tol_residual: float = 1e-9
    tol_dT: float = 1e-6
    max_iter: int = 100
    max_sweeps: int = 200_000
    damping: float = 1.0
    dt_initial: float = 1.0
    dt_min: float = 1e-8
    dt_max: float = math.inf
    error_tol_abs: float = 1e-4
    error_tol_rel: float = 1e-6
    method: str = "newton"
    adaptive: bool = True
    error_per_unit_step: bool = True
    ringing_guard: bool = True

    def __post_init__(self):
        for name in ("tol_residual", "tol_dT", "error_tol_abs", "dt_initial", "dt_min"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.error_tol_rel < 0:
            raise ValueError("error_tol_rel must be >= 0")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must be in (0, 1]")
        if not self.dt_min <= self.dt_max:
            raise ValueError("dt_min must not exceed dt_max")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class SteadyState:
    node_ids: list[str]
    T: np.ndarray
    iterations: int
    residual_norm: float
    history: list[float] = field(default_factory=list)
    method: str = "newton"

    @property
    def temperatures(self) -> dict[str, float]:
        return {nid: float(v) for nid, v in zip(self.node_ids, self.T)}

    def __getitem__(self, node_id: str) -> float:
        return float(self.T[self.node_ids.index(node_id)])


@dataclass
class TransientResult:
    node_ids: list[str]
    times: np.ndarray
    T: np.ndarray  # (len(times), len(node_ids))
    diagnostics: dict

    def node(self, node_id: str) -> np.ndarray:
        return self.T[:, self.node_ids.index(node_id)]

    @property
    def final(self) -> dict[str, float]:
        return {nid: float(v) for nid, v in zip(self.node_ids, self.T[-1])}


# ---------------------------------------------------------------------------
# steady state

def initial_guess(net: Network, T_guess=None, t: float = 0.0, extra=None) -> np.ndarray:
    """Starting temperatures for a steady solve.

    Without a user guess, radiative couplings are replaced by conductances
    ``4 sigma GR (150 K)^3`` and the resulting linear network is solved; the
    answer is a coupling-weighted blend of the boundary temperatures shifted
    by the loads.  Falls back to a uniform 150 K.
    """
    if T_guess is not None:
        T = net.vector(T_guess)
        bad = net.unknown & ~(np.isfinite(T) & (T > 0))
        T[bad] = 150.0
        return T
    T = net.vector(net.T_init)
    U = np.flatnonzero(net.unknown)
    T[U] = 150.0
    Tref = np.full(net.n, 150.0)
    Tref[net.boundary] = T[net.boundary]
    try:
        g_c, _ = net.conductances(Tref)
        K = np.zeros((net.n, net.n))
        hr = 4.0 * net.sigma * net.gr * 150.0**3
        for a, b, g in [*zip(net.ca, net.cb, g_c), *zip(net.ra, net.rb, hr)]:
            K[a, a] += g
            K[b, b] += g
            K[a, b] -= g
            K[b, a] -= g
        q = net.load_vector(t)
        if extra is not None:
            q = q + (extra(t) if callable(extra) else extra)
        B = np.flatnonzero(net.boundary)
        rhs = q[U] - K[np.ix_(U, B)] @ T[B]
        sol = np.linalg.solve(K[np.ix_(U, U)], rhs)
        if np.all(np.isfinite(sol)):
            lo = max(np.min(T[B]) if len(B) else 1.0, 1.0)
            T[U] = np.maximum(sol, lo)
    except np.linalg.LinAlgError:
        pass
    return T


def _check_solvable(net: Network):
    if net.isolated:
        raise SolverError(f"node {net.isolated[0]!r} has no couplings; the steady problem is singular")


def solve_steady_newton(model, T_guess=None, options: SolveOptions | None = None,
                        t: float = 0.0, extra=None) -> SteadyState:
    """Newton iteration on all non-boundary nodes with backtracking on the residual norm."""
    net = as_network(model)
    opts = options or SolveOptions()
    _check_solvable(net)
    if extra is not None and callable(extra):
        extra = extra(t)
    T = initial_guess(net, T_guess, t, extra)
    U = np.flatnonzero(net.unknown)
    history = []
    best_norm, best_T = math.inf, T.copy()
    R = net.residual(T, t, extra)
    for it in range(1, opts.max_iter + 1):
        rnorm = float(np.max(np.abs(R[U]))) if len(U) else 0.0
        history.append(rnorm)
        if rnorm < best_norm:
            best_norm, best_T = rnorm, T.copy()
        J = net.jacobian(T)[np.ix_(U, U)]
        try:
            dT = np.linalg.solve(J, -R[U])
        except np.linalg.LinAlgError:
            zero = [net.ids[U[k]] for k in range(len(U)) if not np.any(J[k])]
            name = zero[0] if zero else "<network>"
            raise SolverError(f"singular Jacobian at node {name!r}", state=net.as_dict(best_T),
                              history=history) from None
        lam = _positive_step(T[U], dT) * (opts.damping if it == 1 else 1.0)
        f0 = float(np.dot(R[U], R[U]))
        while True:
            T_new = T.copy()
            T_new[U] += lam * dT
            R_new = net.residual(T_new, t, extra)
            f1 = float(np.dot(R_new[U], R_new[U]))
            if f1 <= (1.0 - 1e-4 * lam) * f0 or lam < 1e-6:
                break
            lam *= 0.5
        step = float(np.max(np.abs(lam * dT))) if len(U) else 0.0
        T, R = T_new, R_new
        rnorm = float(np.max(np.abs(R[U]))) if len(U) else 0.0
        if rnorm <= opts.tol_residual and step <= opts.tol_dT:
            history.append(rnorm)
            return SteadyState(list(net.ids), T, it, rnorm, history, "newton")
    raise SolverError(f"Newton did not converge in {opts.max_iter} iterations (residual {best_norm:.3e} W)",
                      state=net.as_dict(best_T), history=history)


class _PointSweeper:
    """Per-node data in plain Python lists for fast Gauss-Seidel sweeps."""

    def __init__(self, net: Network, q):
        self.net = net
        self.sigma = net.sigma
        self.q = [float(v) for v in q]
        self.rad = [[] for _ in range(net.n)]
        for a, b, g in zip(net.ra, net.rb, net.gr):
            self.rad[a].append((int(b), float(g)))
            self.rad[b].append((int(a), float(g)))
        self.cond = [[] for _ in range(net.n)]
        tables = {}
        for table, idx in net._c_mats:
            ts, ks = (list(map(float, x)) for x in table._arrays("conductivity"))
            for k in idx:
                tables[int(k)] = (ts, ks, float(net.c_factor[k]))
        for k, (a, b) in enumerate(zip(net.ca, net.cb)):
            spec = tables.get(k, float(net.c_const[k]))
            self.cond[a].append((int(b), spec))
            self.cond[b].append((int(a), spec))

    @staticmethod
    def _gl(spec, Tm):
        if isinstance(spec, float):
            return spec
        ts, ks, factor = spec
        if Tm <= ts[0]:
            return ks[0] * factor
        if Tm >= ts[-1]:
            return ks[-1] * factor
        j = bisect.bisect_right(ts, Tm) - 1
        w = (Tm - ts[j]) / (ts[j + 1] - ts[j])
        return (ks[j] + w * (ks[j + 1] - ks[j])) * factor

    def relax(self, T, i, inner=2):
        """Scalar Newton on node i's balance with neighbours frozen."""
        s = self.sigma
        Ti = T[i]
        for _ in range(inner):
            f = self.q[i]
            df = 0.0
            Ti3 = Ti * Ti * Ti
            for j, g in self.rad[i]:
                Tj = T[j]
                f += g * s * (Tj**4 - Ti3 * Ti)
                df -= 4.0 * g * s * Ti3
            for j, spec in self.cond[i]:
                Tj = T[j]
                gl = self._gl(spec, 0.5 * (Ti + Tj))
                f += gl * (Tj - Ti)
                df -= gl
            if df == 0.0:
                break
            new = Ti - f / df
            Ti = min(max(new, 0.5 * Ti), 2.0 * Ti)
        return Ti


def solve_steady_iterative(model, T_guess=None, options: SolveOptions | None = None,
                           t: float = 0.0, extra=None) -> SteadyState:
    """Damped nonlinear Gauss-Seidel: each node in turn is balanced against its current neighbours."""
    net = as_network(model)
    opts = options or SolveOptions(method="iterative")
    _check_solvable(net)
    if extra is not None and callable(extra):
        extra = extra(t)
    q = net.load_vector(t) + (extra if extra is not None else 0.0)
    T_arr = initial_guess(net, T_guess, t, extra)
    sweeper = _PointSweeper(net, q)
    T = [float(v) for v in T_arr]
    U = [int(k) for k in np.flatnonzero(net.unknown)]
    w = opts.damping
    history = []
    for sweep in range(1, opts.max_sweeps + 1):
        change = 0.0
        for i in U:
            new = sweeper.relax(T, i)
            new = T[i] + w * (new - T[i])
            change = max(change, abs(new - T[i]))
            T[i] = new
        if change <= opts.tol_dT or sweep % 50 == 0:
            arr = np.array(T)
            rnorm = float(np.max(np.abs(net.residual(arr, t, extra)[U]))) if U else 0.0
            history.append(rnorm)
            if not math.isfinite(rnorm):
                break
            if rnorm <= opts.tol_residual and change <= opts.tol_dT:
                return SteadyState(list(net.ids), arr, sweep, rnorm, history, "iterative")
    arr = np.array(T)
    raise SolverError(f"iterative solver did not converge in {opts.max_sweeps} sweeps",
                      state=net.as_dict(arr), history=history)


def solve_steady(model, T_guess=None, options: SolveOptions | None = None, t: float = 0.0, extra=None):
    opts = options or SolveOptions()
    if opts.method == "iterative":
        return solve_steady_iterative(model, T_guess, opts, t, extra)
    return solve_steady_newton(model, T_guess, opts, t, extra)


def close_arithmetic_nodes(model, T, t: float = 0.0, extra=None) -> dict[str, float]:
    """Temperatures of the arithmetic nodes in equilibrium with the given diffusion/boundary temperatures."""
    net = as_network(model)
    Tv = net.vector(T)
    Tv = net.close_arithmetic(Tv, t, extra)
    return {net.ids[k]: float(Tv[k]) for k in np.flatnonzero(net.arithmetic)}


# ---------------------------------------------------------------------------
# transient

class _Ode:
    """Diffusion-node ODE with arithmetic closure folded into every evaluation."""

    def __init__(self, net: Network, T0, extra):
        self.net = net
        self.extra = extra
        self.D = np.flatnonzero(net.diffusion)
        self.A = np.flatnonzero(net.arithmetic)
        self.T = np.array(T0, dtype=float)
        self.nfev = 0
        self.njev = 0

    def full(self, t, y):
        T = self.T.copy()
        T[self.D] = y
        if len(self.A):
            T = self.net.close_arithmetic(T, t, self.extra)
            self.T[self.A] = T[self.A]
        return T

    def f(self, t, y):
        if np.any(~np.isfinite(y)) or np.any(y <= 0):
            raise FloatingPointError("non-physical temperature")
        self.nfev += 1
        T = self.full(t, y)
        R = self.net.residual(T, t, self.extra)
        C = self.net.capacities(T)[self.D]
        return R[self.D] / C

    def jac(self, t, y):
        self.njev += 1
        T = self.full(t, y)
        J = self.net.jacobian(T)
        D, A = self.D, self.A
        S = J[np.ix_(D, D)]
        if len(A):
            S = S - J[np.ix_(D, A)] @ np.linalg.solve(J[np.ix_(A, A)], J[np.ix_(A, D)])
        C = self.net.capacities(T)[D]
        return S / C[:, None]


class _StepFailure(Exception):
    pass


def _implicit(ode: _Ode, t1, h_beta, base, z0, scale, jac_cache):
    """Solve z - base - h_beta f(t1, z) = 0 by modified Newton."""
    n = len(z0)
    z = z0.copy()
    for attempt in range(2):
        key = (h_beta, attempt)
        if jac_cache.get("key") != key:
            Jf = ode.jac(t1, z)
            jac_cache["key"] = key
            jac_cache["lu"] = np.linalg.inv(np.eye(n) - h_beta * Jf)
        M_inv = jac_cache["lu"]
        for _ in range(12):
            try:
                fz = ode.f(t1, z)
            except (FloatingPointError, SolverError):
                raise _StepFailure from None
            G = z - base - h_beta * fz
            dz = -M_inv @ G
            z = z + dz
            if np.any(z <= 0) or not np.all(np.isfinite(z)):
                raise _StepFailure
            if np.max(np.abs(dz) / scale(z)) < 1e-3:
                try:
                    return z, ode.f(t1, z)
                except (FloatingPointError, SolverError):
                    raise _StepFailure from None
        jac_cache["key"] = None
    raise _StepFailure


def solve_transient(model, T0=None, t_span=(0.0, 1.0), options: SolveOptions | None = None,
                    t_eval=None, extra=None, breakpoints=(), steady_rate: float | None = None,
                    discontinuities=()) -> TransientResult:
    """Integrate the network from ``T0`` over ``t_span``.

    ``options.method`` selects ``crank_nicolson`` or ``bdf``.  ``t_eval``
    requests output times (dense cubic Hermite interpolation); otherwise
    every accepted step is returned.  ``breakpoints`` are times the
    integrator must land on; ``discontinuities`` are breakpoints after
    which the load jumps (the next step is implicit Euler, and BDF
    history restarts).  With ``steady_rate`` the run stops once
    ``max |dT/dt|`` falls below it (K/s) and the stop time is appended to
    the requested output times.  ``extra`` adds environmental
    loads: a callable of time returning per-node powers.
    """
    net = as_network(model)
    opts = options or SolveOptions(method="crank_nicolson")
    method = opts.method if opts.method in ("crank_nicolson", "bdf") else "crank_nicolson"
    t0, t_end = float(t_span[0]), float(t_span[1])
    T = net.vector(net.T_init if T0 is None else T0)
    net.check_finite(T)
    D = np.flatnonzero(net.diffusion)
    ode = _Ode(net, T, extra)
    T = ode.full(t0, T[D])
    y = T[D].copy()
    atol, rtol = opts.error_tol_abs, opts.error_tol_rel
    span = t_end - t0

    def scale(z):
        return atol + rtol * np.abs(z)

    stops = sorted({float(b) for b in (*breakpoints, *discontinuities, *net.breakpoints()) if t0 < b < t_end})
    jumps = {float(b) for b in discontinuities}
    diag = {"method": method, "accepted": 0, "rejected": 0, "newton_failures": 0}

    times = [t0]
    ys = [y.copy()]
    fs = []
    if t_end <= t0 or len(D) == 0:
        out_t = np.array([t0]) if t_eval is None else np.asarray(t_eval, dtype=float)
        rows = np.array([T for _ in out_t])
        if len(D) == 0 and len(out_t):
            rows = np.array([net.close_arithmetic(T, tt, extra) for tt in out_t])
        diag.update(jacobian_evals=ode.njev, rhs_evals=ode.nfev)
        return TransientResult(list(net.ids), out_t, rows, diag)

    f = ode.f(t0, y)
    fs.append(f)
    t = t0
    h = min(opts.dt_initial, opts.dt_max)
    guard = opts.ringing_guard
    history = [(t, y)]  # for BDF
    jac_cache: dict = {}
    stopped_steady = False

    def one_step(kind, t_a, y_a, f_a, hh):
        if kind == "ie":
            z0 = y_a + hh * f_a
            return _implicit(ode, t_a + hh, hh, y_a, z0, scale, jac_cache)
        z0 = y_a + hh * f_a
        return _implicit(ode, t_a + hh, 0.5 * hh, y_a + 0.5 * hh * f_a, z0, scale, jac_cache)

    while t < t_end - 1e-12 * max(1.0, abs(t_end)):
        k = bisect.bisect_right(stops, t + 1e-12 * max(1.0, abs(t)))
        limit = stops[k] if k < len(stops) else t_end
        h = min(h, opts.dt_max)
        last_piece = limit - t
        if h >= last_piece * (1 - 1e-12):
            h = last_piece
        elif h > 0.5 * last_piece:
            h = 0.5 * last_piece
        if h < opts.dt_min and h < last_piece:
            raise SolverError(f"step size underflow at t={t:.6g} s (dt={h:.3g} s)",
                              state=net.as_dict(ode.full(t, y)), history=[diag])
        if not opts.adaptive:
            h = min(opts.dt_initial, last_piece)

        use_ie = guard or (method == "bdf" and len(history) < 3)
        try:
            if method == "crank_nicolson" or use_ie:
                kind = "ie" if use_ie else "cn"
                if opts.adaptive:
                    z_full, _ = one_step(kind, t, y, f, h)
                    z_half, f_half = one_step(kind, t, y, f, 0.5 * h)
                    z_new, f_new = one_step(kind, t + 0.5 * h, z_half, f_half, 0.5 * h)
                    err = (z_new - z_full) / (1.0 if kind == "ie" else 3.0)
                    order = 1 if kind == "ie" else 2
                else:
                    z_new, f_new = one_step(kind, t, y, f, h)
                    err, order = None, 2
            else:
                (t_m1, y_m1), (t_m2, y_m2) = history[-2], history[-3]
                h_prev = t - t_m1
                w = h / h_prev
                a1 = (1 + w) ** 2 / (1 + 2 * w)
                a2 = -(w**2) / (1 + 2 * w)
                beta = (1 + w) / (1 + 2 * w)
                t1 = t + h
                # quadratic extrapolation through the last three points
                l0 = (t1 - t_m1) * (t1 - t_m2) / ((t - t_m1) * (t - t_m2))
                l1 = (t1 - t) * (t1 - t_m2) / ((t_m1 - t) * (t_m1 - t_m2))
                l2 = (t1 - t) * (t1 - t_m1) / ((t_m2 - t) * (t_m2 - t_m1))
                y_pred = l0 * y + l1 * y_m1 + l2 * y_m2
                z0 = np.where(y_pred > 0, y_pred, y)
                z_new, f_new = _implicit(ode, t1, h * beta, a1 * y + a2 * y_m1, z0, scale, jac_cache)
                H = h + h_prev
                c_bdf = -(a1 * h**3 + a2 * H**3)
                c_pred = h * H * (t1 - t_m2)
                err = (z_new - y_pred) * c_bdf / (c_pred + c_bdf) if opts.adaptive else None
                order = 2
        except _StepFailure:
            diag["newton_failures"] += 1
            diag["rejected"] += 1
            if not opts.adaptive:
                raise SolverError(f"implicit solve failed at t={t:.6g} s with fixed dt={h:.3g} s",
                                  state=net.as_dict(ode.full(t, y))) from None
            h *= 0.25
            continue

        if err is not None:
            en = float(np.max(np.abs(err) / np.maximum(scale(y), scale(z_new))))
            if opts.error_per_unit_step:
                en *= min(span / h, EPUS_CAP)
            if en > 1.0:
                diag["rejected"] += 1
                h *= max(0.1, 0.9 * en ** (-1.0 / (order + 1)))
                continue
            grow = 5.0 if (method == "crank_nicolson" or use_ie) else 2.0
            factor = min(grow, max(0.2, 0.9 * (en if en > 0 else 1e-10) ** (-1.0 / (order + 1))))
        else:
            factor = 1.0

        t_new = t + h
        if abs(t_new - limit) <= 1e-9 * max(1.0, abs(limit)):
            t_new = limit
        diag["accepted"] += 1
        t, y, f = t_new, z_new, f_new
        times.append(t)
        ys.append(y.copy())
        fs.append(f)
        history.append((t, y))
        if len(history) > 3:
            history.pop(0)
        guard = False
        if any(abs(t - j) <= 1e-9 * max(1.0, abs(j)) for j in jumps):
            guard = opts.ringing_guard
            history = [(t, y)]
            if opts.adaptive:
                h = min(h, opts.dt_initial)
                factor = 1.0
        rate = float(np.max(np.abs(y - ys[-2]))) / (t - times[-2])
        h = h * factor
        if steady_rate is not None and rate < steady_rate:
            stopped_steady = True
            break

    diag.update(jacobian_evals=ode.njev, rhs_evals=ode.nfev, steady_reached=stopped_steady,
                t_final=t)
    times_a = np.array(times)
    ys_a = np.array(ys)
    fs_a = np.array(fs)
    if t_eval is None:
        out_t = times_a
        Y = ys_a
    else:
        out_t = np.asarray(t_eval, dtype=float)
        out_t = out_t[(out_t >= t0) & (out_t <= times_a[-1] + 1e-9 * max(1.0, abs(times_a[-1])))]
        if stopped_steady and (len(out_t) == 0 or out_t[-1] < times_a[-1]):
            # an early stop still reports the state it stopped at
            out_t = np.append(out_t, times_a[-1])
        Y = _hermite(times_a, ys_a, fs_a, out_t)
    rows = np.empty((len(out_t), net.n))
    for r, (tt, yy) in enumerate(zip(out_t, Y)):
        rows[r] = ode.full(tt, yy)
    return TransientResult(list(net.ids), out_t, rows, diag)


def _hermite(ts, ys, fs, out):
    """Cubic Hermite interpolation of the step history at ``out``."""
    res = np.empty((len(out), ys.shape[1]))
    for r, tq in enumerate(out):
        k = min(max(int(np.searchsorted(ts, tq, side="right")) - 1, 0), len(ts) - 2)
        if len(ts) == 1:
            res[r] = ys[0]
            continue
        h = ts[k + 1] - ts[k]
        s = (tq - ts[k]) / h
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        res[r] = h00 * ys[k] + h10 * h * fs[k] + h01 * ys[k + 1] + h11 * h * fs[k + 1]
    return res


__all__ = [
    "SolveOptions", "SteadyState", "TransientResult", "solve_steady_newton", "solve_steady_iterative",
    "solve_steady", "solve_transient", "close_arithmetic_nodes", "initial_guess",
]
