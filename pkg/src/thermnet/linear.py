"""Small-signal analysis about a steady state.

Linearising ``C dT/dt = R(T) + q`` about ``T_bar`` gives
``C dx/dt = -K x + B_temp u_T + B_power u_P`` on the non-boundary nodes,
with ``K = -dR/dT`` (not symmetric when radiating nodes differ in
temperature).  Arithmetic nodes keep a zero capacitance row, so the
frequency response is computed in descriptor form:
``x(f) = (i 2 pi f C + K)^-1 b``.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .network import as_network
from .solvers import SolveOptions, solve_steady_newton

F_MIN = 1e-6
F_MAX = 1e-1
N_POINTS = 61


@dataclass(frozen=True)
class LinearizedSystem:
    node_ids: list[str]
    boundary_ids: list[str]
    C: np.ndarray
    K: np.ndarray
    B_temp: np.ndarray
    T_bar: np.ndarray

    def B_power(self, node_id: str) -> np.ndarray:
        b = np.zeros(len(self.node_ids))
        b[self.node_ids.index(node_id)] = 1.0
        return b

    def input_vector(self, spec: str) -> tuple[np.ndarray, str]:
        """Input column and gain units for ``boundary:<id>`` or ``power:<id>``."""
        kind, _, node = spec.partition(":")
        if kind == "boundary":
            if node not in self.boundary_ids:
                raise KeyError(f"{node!r} is not a boundary node")
            return self.B_temp[:, self.boundary_ids.index(node)].copy(), "K/K"
        if kind == "power":
            if node not in self.node_ids:
                raise KeyError(f"{node!r} is not a diffusion or arithmetic node")
            return self.B_power(node), "K/W"
        raise ValueError(f"input must be 'boundary:<node>' or 'power:<node>', got {spec!r}")


@dataclass(frozen=True)
class GainSpectrum:
    input: str
    units: str
    frequencies: np.ndarray
    node_ids: list[str]
    gain: np.ndarray  # (n_freq, n_nodes)
    phase: np.ndarray

    def node(self, node_id: str) -> np.ndarray:
        return self.gain[:, self.node_ids.index(node_id)]


def linearize(model, T_bar, tol: float = 1e-6) -> LinearizedSystem:
    """Exact first-order expansion of the energy balance about ``T_bar``.

    ``tol`` bounds the residual (W) accepted as a steady state.
    """
    net = as_network(model)
    T = net.vector(T_bar)
    net.check_finite(T)
    U = np.flatnonzero(net.unknown)
    B = np.flatnonzero(net.boundary)
    R = net.residual(T)[U]
    if len(U) and np.max(np.abs(R)) > tol:
        k = U[int(np.argmax(np.abs(R)))]
        raise ValueError(f"T_bar is not a steady state: residual {np.max(np.abs(R)):.3e} W at node {net.ids[k]!r}")
    J = net.jacobian(T)
    C = net.capacities(T)[U]
    C[net.arithmetic[U]] = 0.0
    return LinearizedSystem(
        node_ids=[net.ids[k] for k in U],
        boundary_ids=[net.ids[k] for k in B],
        C=C,
        K=-J[np.ix_(U, U)],
        B_temp=J[np.ix_(U, B)],
        T_bar=T[U],
    )


def default_frequencies(fmin: float = F_MIN, fmax: float = F_MAX, points: int = N_POINTS) -> np.ndarray:
    return np.logspace(np.log10(fmin), np.log10(fmax), points)


def frequency_response(sys: LinearizedSystem, input: str, freqs=None) -> GainSpectrum:
    """Gain and phase of every node for one sinusoidal input."""
    freqs = default_frequencies() if freqs is None else np.asarray(freqs, dtype=float)
    if np.any(freqs <= 0) or np.any(np.diff(freqs) <= 0):
        raise ValueError("frequencies must be positive and strictly increasing")
    b, units = sys.input_vector(input)
    X = np.empty((len(freqs), len(sys.node_ids)), dtype=complex)
    Cd = np.diag(sys.C)
    for r, f in enumerate(freqs):
        A = 2j * np.pi * f * Cd + sys.K
        try:
            X[r] = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            raise np.linalg.LinAlgError(f"singular system matrix at {f:g} Hz") from None
    return GainSpectrum(input, units, freqs, list(sys.node_ids), np.abs(X), np.angle(X))


def dc_gain(sys: LinearizedSystem, input: str) -> dict[str, float]:
    b, _ = sys.input_vector(input)
    x = np.linalg.solve(sys.K, b)
    return dict(zip(sys.node_ids, x.tolist()))


def dc_gain_check(model, T_bar, input: str, delta: float | None = None):
    """Linear DC gain next to the central-difference sensitivity of the nonlinear model.

    ``delta`` is the input perturbation: K for boundary inputs (default
    0.1), W for power inputs (default 1e-4).  Returns two dicts keyed by
    node id.
    """
    net = as_network(model)
    sys = linearize(net, T_bar)
    linear = dc_gain(sys, input)
    kind, _, node = input.partition(":")
    if delta is None:
        delta = 0.1 if kind == "boundary" else 1e-4
    T0 = net.vector(T_bar)
    opts = SolveOptions(tol_residual=1e-12, tol_dT=1e-10)
    sols = []
    for sign in (1.0, -1.0):
        if kind == "boundary":
            k = net.index[node]
            pert = copy.copy(net)
            pert.T_fixed = net.T_fixed.copy()
            pert.T_fixed[k] += sign * delta
            s = solve_steady_newton(pert, T0, opts)
        else:
            extra = np.zeros(net.n)
            extra[net.index[node]] = sign * delta
            s = solve_steady_newton(net, T0, opts, extra=extra)
        sols.append(s.T)
    fd = (sols[0] - sols[1]) / (2.0 * delta)
    nonlinear = {nid: float(fd[net.index[nid]]) for nid in sys.node_ids}
    return linear, nonlinear


def cavity_instability(gain_at_f: float, input_amplitude: float, cte: float) -> float:
    """Fractional length (and frequency) instability of a cavity: |cte| * gain * amplitude."""
    return abs(cte) * gain_at_f * input_amplitude


__all__ = [
    "LinearizedSystem", "GainSpectrum", "linearize", "frequency_response", "dc_gain", "dc_gain_check",
    "cavity_instability", "default_frequencies",
]
