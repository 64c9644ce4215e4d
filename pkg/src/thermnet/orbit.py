"""Two-body orbit, eclipse and environmental heat loads.

Distances are in km, times in s, angles in degrees in the model file and
radians in code.  The inertial frame is equatorial; the sun direction is
either fixed or moves on a circular ecliptic.

Loads on faces flagged ``external`` are evaluated on a quadrature grid
over each face: direct solar (shadowed by the rest of the geometry),
albedo and planetary infrared.  The planet terms use an unobstructed
view factor per sample point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError
from .geometry import Primitive, quadrature
from .model import Model, OrbitSpec
from .network import as_network
from .solvers import SolveOptions, TransientResult, solve_steady_newton, solve_transient

YEAR = 365.25 * 86400.0
OBLIQUITY = math.radians(23.439)
QUAD_POINTS = 6


def semi_major_axis(spec: OrbitSpec) -> float:
    el = spec.elements
    return spec.body.radius + 0.5 * (el.apogee_altitude + el.perigee_altitude)


def eccentricity(spec: OrbitSpec) -> float:
    el = spec.elements
    ra = spec.body.radius + el.apogee_altitude
    rp = spec.body.radius + el.perigee_altitude
    return (ra - rp) / (ra + rp)


def orbital_period(spec: OrbitSpec) -> float:
    a = semi_major_axis(spec)
    return 2.0 * math.pi * math.sqrt(a**3 / spec.body.mu)


def solve_kepler(M: float, e: float) -> float:
    """Eccentric anomaly for mean anomaly ``M`` by Newton iteration."""
    M = math.remainder(M, 2.0 * math.pi)
    E = M if e < 0.8 else math.copysign(math.pi, M) if M else 0.0
    for _ in range(100):
        dE = (E - e * math.sin(E) - M) / (1.0 - e * math.cos(E))
        E -= dE
        if abs(dE) < 1e-12:
            break
    return E


def _mean_anomaly_epoch(spec: OrbitSpec) -> float:
    e = eccentricity(spec)
    nu = math.radians(spec.elements.true_anomaly_epoch)
    E = 2.0 * math.atan2(math.sqrt(1 - e) * math.sin(nu / 2), math.sqrt(1 + e) * math.cos(nu / 2))
    return E - e * math.sin(E)


def perifocal_to_inertial(spec: OrbitSpec) -> np.ndarray:
    el = spec.elements
    O, i, w = (math.radians(x) for x in (el.raan, el.inclination, el.argument_of_periapsis))
    cO, sO, ci, si, cw, sw = math.cos(O), math.sin(O), math.cos(i), math.sin(i), math.cos(w), math.sin(w)
    return np.array([
        [cO * cw - sO * sw * ci, -cO * sw - sO * cw * ci, sO * si],
        [sO * cw + cO * sw * ci, -sO * sw + cO * cw * ci, -cO * si],
        [sw * si, cw * si, ci],
    ])


def orbit_state(spec: OrbitSpec, t: float):
    """(position km, velocity km/s, true anomaly rad) at ``t`` seconds after epoch."""
    a = semi_major_axis(spec)
    e = eccentricity(spec)
    mu = spec.body.mu
    n = math.sqrt(mu / a**3)
    E = solve_kepler(_mean_anomaly_epoch(spec) + n * t, e)
    cE, sE = math.cos(E), math.sin(E)
    b = a * math.sqrt(1 - e * e)
    r = a * (1 - e * cE)
    pos = np.array([a * (cE - e), b * sE, 0.0])
    vel = np.array([-a * sE, b * cE, 0.0]) * (n * a / r)
    nu = math.atan2(math.sqrt(1 - e * e) * sE, cE - e)
    Q = perifocal_to_inertial(spec)
    return Q @ pos, Q @ vel, nu


def kepler_propagate(spec: OrbitSpec, t: float) -> np.ndarray:
    return orbit_state(spec, t)[0]


def time_of_true_anomaly(spec: OrbitSpec, nu) -> np.ndarray:
    """Time after periapsis (in [0, period)) at which the true anomaly equals ``nu`` (rad)."""
    e = eccentricity(spec)
    nu = np.mod(np.asarray(nu, dtype=float), 2.0 * math.pi)
    E = 2.0 * np.arctan2(np.sqrt(1 - e) * np.sin(nu / 2), np.sqrt(1 + e) * np.cos(nu / 2))
    M = np.mod(E - e * np.sin(E), 2.0 * math.pi)
    n = 2.0 * math.pi / orbital_period(spec)
    return M / n


def periapsis_time(spec: OrbitSpec) -> float:
    """First periapsis passage at or after the epoch (s)."""
    P = orbital_period(spec)
    M0 = math.remainder(_mean_anomaly_epoch(spec), 2.0 * math.pi)
    return (-M0 / (2.0 * math.pi) * P) % P


def sun_direction(spec: OrbitSpec, t: float) -> np.ndarray:
    sun = spec.sun
    if sun.model == "fixed":
        s = np.asarray(sun.direction, dtype=float)
        return s / np.linalg.norm(s)
    lam = math.radians(sun.longitude_epoch) + 2.0 * math.pi * t / YEAR
    return np.array([math.cos(lam), math.cos(OBLIQUITY) * math.sin(lam), math.sin(OBLIQUITY) * math.sin(lam)])


def eclipse_state(position, sun_dir, planet_radius: float) -> str:
    """``umbra`` behind the planet inside its cylindrical shadow, else ``sunlit``."""
    p = np.asarray(position, dtype=float)
    s = np.asarray(sun_dir, dtype=float)
    s = s / np.linalg.norm(s)
    along = float(p @ s)
    if along >= 0:
        return "sunlit"
    off_axis = np.linalg.norm(p - along * s)
    return "umbra" if off_axis < planet_radius else "sunlit"


def planet_view_factor(radial_distance: float, planet_radius: float, tilt: float):
    """View factor from a small plate to a sphere.

    ``tilt`` is the angle between the plate normal and the nadir direction.
    Full view gives ``cos(tilt) (R/r)^2``; the partial branch applies when
    the plate's plane cuts the sphere.
    """
    H = np.maximum(np.asarray(radial_distance, dtype=float) / planet_radius, 1.0)
    lam = np.abs(np.asarray(tilt, dtype=float))
    lam, H = np.broadcast_arrays(lam, H)
    F = np.zeros(lam.shape)
    full = H * np.cos(lam) >= 1.0
    F[full] = np.cos(lam[full]) / H[full] ** 2
    phi = np.arcsin(1.0 / H)
    part = ~full & (lam < 0.5 * np.pi + phi)
    if np.any(part):
        h, lm = H[part], lam[part]
        X = np.sqrt(h * h - 1.0)
        Y = np.clip(-X / np.tan(lm), -1.0, 1.0)
        root = np.sqrt(1.0 - Y * Y)
        F[part] = (np.cos(lm) * np.arccos(Y) - X * np.sin(lm) * root) / (np.pi * h * h) \
            + np.arctan2(np.sin(lm) * root, X) / np.pi
    F = np.clip(F, 0.0, 1.0)
    return float(F) if F.ndim == 0 else F


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _align(a_body, a_in, b_body, b_in) -> np.ndarray:
    """Rotation (body -> inertial) taking ``a_body`` onto ``a_in`` exactly and ``b_body`` towards ``b_in``."""

    def triad(a, b):
        a = _unit(a)
        c = np.cross(a, b)
        if np.linalg.norm(c) < 1e-9:
            trial = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
            c = np.cross(a, trial)
        c = _unit(c)
        return np.column_stack([a, np.cross(c, a), c])

    return triad(a_in, b_in) @ triad(a_body, b_body).T


def attitude_matrix(spec: OrbitSpec, position, sun_dir) -> np.ndarray:
    """Body-to-inertial rotation for the configured attitude mode."""
    att = spec.attitude
    nadir = -_unit(position)
    if att.mode == "sun_oriented":
        return _align(att.sun_axis, sun_dir, att.nadir_axis, nadir)
    if att.mode == "nadir":
        return _align(att.nadir_axis, nadir, att.sun_axis, sun_dir)
    return np.eye(3)


@dataclass(frozen=True)
class FaceLoads:
    solar: float
    albedo: float
    planetary_ir: float

    @property
    def total(self) -> float:
        return self.solar + self.albedo + self.planetary_ir


@dataclass
class EnvLoadsAtTime:
    t: float
    faces: dict[str, FaceLoads]
    face_nodes: dict[str, str]
    eclipsed: bool
    radius_km: float
    sun_angle: float  # angle between sun and the zenith of the sub-satellite point, rad

    def node_loads(self, kind: str | None = None) -> dict[str, float]:
        out: dict[str, float] = {}
        for fid, fl in self.faces.items():
            v = fl.total if kind is None else getattr(fl, kind)
            out[self.face_nodes[fid]] = out.get(self.face_nodes[fid], 0.0) + v
        return out


@dataclass
class _FaceSamples:
    face_id: str
    node: str
    prim: int
    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    alpha_s: float
    epsilon: float


def _external_samples(model: Model, m: int = QUAD_POINTS):
    from .radiative import Scene

    scene = Scene(model.faces)
    out = []
    for f in model.faces:
        if not f.external:
            continue
        pts, nrm, w = quadrature(Primitive(f.shape), m)
        if f.side == "back":
            nrm = -nrm
        prim = scene.face_prim[scene.face_index[f.id]] if f.id in scene.face_index else -1
        out.append(_FaceSamples(f.id, f.node, int(prim), pts, nrm, w, f.solar_absorptance, f.epsilon))
    return scene, out


def environmental_loads(model: Model, spec: OrbitSpec | None = None, t: float = 0.0, _cache=None) -> EnvLoadsAtTime:
    """Solar, albedo and planetary-IR power on every external face at ``t`` s after epoch."""
    spec = spec or model.orbit
    if spec is None:
        raise ValueError("model has no orbit section and no OrbitSpec was given")
    scene, samples = _cache if _cache is not None else _external_samples(model)
    body = spec.body
    pos, _, _ = orbit_state(spec, t)
    s_in = sun_direction(spec, t)
    r = float(np.linalg.norm(pos))
    eclipsed = eclipse_state(pos, s_in, body.radius) == "umbra"
    Rb = attitude_matrix(spec, pos, s_in)
    s_body = Rb.T @ s_in
    nadir_body = Rb.T @ (-pos / r)
    cos_zenith = max(0.0, float(pos @ s_in) / r)
    flux = spec.sun.flux
    ir_flux = model.constants.sigma * body.ir_temperature**4
    faces = {}
    for fs in samples:
        cos_s = fs.normals @ s_body
        solar = 0.0
        lit = cos_s > 0
        if not eclipsed and lit.any():
            P = fs.points[lit]
            D = np.broadcast_to(s_body, P.shape).copy()
            last = np.full(len(P), fs.prim, dtype=int)
            blocked = scene.first_face(P, D, last) >= 0 if scene.prims else np.zeros(len(P), bool)
            solar = flux * fs.alpha_s * float(np.sum(fs.weights[lit] * cos_s[lit] * ~blocked))
        tilt = np.arccos(np.clip(fs.normals @ nadir_body, -1.0, 1.0))
        Fp = planet_view_factor(r, body.radius, tilt)
        AF = float(np.sum(fs.weights * Fp))
        faces[fs.face_id] = FaceLoads(
            solar=solar,
            albedo=flux * body.albedo * fs.alpha_s * AF * cos_zenith,
            planetary_ir=ir_flux * fs.epsilon * AF,
        )
    return EnvLoadsAtTime(t, faces, {fs.face_id: fs.node for fs in samples}, eclipsed, r,
                          math.acos(min(1.0, max(-1.0, float(pos @ s_in) / r))))


class OrbitLoadTable:
    """Environmental node loads sampled uniformly in true anomaly over one orbit.

    Times are measured from periapsis; the table is periodic and linearly
    interpolated, so it can be handed to the transient solver as ``extra``.
    """

    def __init__(self, model: Model, spec: OrbitSpec | None = None, samples: int = 360, net=None):
        self.spec = spec or model.orbit
        self.net = net or as_network(model)
        self.period = orbital_period(self.spec)
        nu = np.linspace(0.0, 2.0 * math.pi, samples, endpoint=False)
        self.times = np.append(time_of_true_anomaly(self.spec, nu), self.period)
        t_peri = periapsis_time(self.spec)
        cache = _external_samples(model)
        self.kinds = {k: np.zeros((samples + 1, self.net.n)) for k in ("solar", "albedo", "planetary_ir")}
        self.eclipsed = np.zeros(samples + 1, dtype=bool)
        for r, tt in enumerate(self.times[:-1]):
            env = environmental_loads(model, self.spec, t_peri + tt, cache)
            self.eclipsed[r] = env.eclipsed
            for kind, arr in self.kinds.items():
                for node, w in env.node_loads(kind).items():
                    arr[r, self.net.index[node]] += w
        for arr in self.kinds.values():
            arr[-1] = arr[0]
        self.eclipsed[-1] = self.eclipsed[0]
        self.total = sum(self.kinds.values())

    def _interp(self, table, t):
        tau = t % self.period
        k = min(int(np.searchsorted(self.times, tau, side="right")) - 1, len(self.times) - 2)
        w = (tau - self.times[k]) / (self.times[k + 1] - self.times[k])
        return (1.0 - w) * table[k] + w * table[k + 1]

    def __call__(self, t: float) -> np.ndarray:
        return self._interp(self.total, t)

    def by_kind(self, t: float) -> dict[str, np.ndarray]:
        return {k: self._interp(v, t) for k, v in self.kinds.items()}

    def mean(self) -> np.ndarray:
        """Time average over the orbit (trapezoidal)."""
        dt = np.diff(self.times)
        return np.sum(0.5 * (self.total[1:] + self.total[:-1]) * dt[:, None], axis=0) / self.period

    def knots(self, t0: float = 0.0) -> np.ndarray:
        return t0 + self.times


@dataclass
class CycleSummary:
    cycle: int
    T_reference: dict[str, float]
    T_max: dict[str, float]
    T_min: dict[str, float]
    delta: float


@dataclass
class QuasiStationaryResult:
    result: TransientResult
    cycles: list[CycleSummary]
    converged: bool
    period: float
    table: OrbitLoadTable | None = field(default=None, repr=False)

    @property
    def n_cycles(self) -> int:
        return len(self.cycles)


def quasi_stationary_run(model: Model, spec: OrbitSpec | None = None, cycles_max: int = 20, tol: float = 0.1,
                         options: SolveOptions | None = None, T0=None, samples: int = 360,
                         start: str = "initial", outputs_per_cycle: int | None = None) -> QuasiStationaryResult:
    """Integrate whole orbits from periapsis until temperatures there repeat within ``tol`` K.

    ``start='initial'`` uses the node temperatures in the model (or ``T0``);
    ``start='mean'`` starts from the steady state under orbit-averaged loads.
    Returns the last cycle with times measured from its periapsis.
    """
    spec = spec or model.orbit
    if spec is None:
        raise ValueError("model has no orbit section and no OrbitSpec was given")
    if not tol > 0:
        raise ValueError("tol must be > 0")
    net = as_network(model)
    table = OrbitLoadTable(model, spec, samples, net)
    P = table.period
    opts = options or SolveOptions(method="crank_nicolson", dt_initial=min(60.0, P / 1000), dt_max=P / 50)
    if T0 is not None:
        T = net.vector(T0)
    elif start == "mean":
        T = solve_steady_newton(net, extra=table.mean()).T
    else:
        T = net.T_init.copy()
    if outputs_per_cycle is None:
        t_eval = table.times
    else:
        t_eval = np.linspace(0.0, P, outputs_per_cycle + 1)
    cycles = []
    res = None
    for c in range(1, cycles_max + 1):
        res = solve_transient(net, T, (0.0, P), opts, t_eval=t_eval, extra=table, breakpoints=table.times[1:-1])
        T_end = res.T[-1]
        delta = float(np.max(np.abs(T_end - T)[net.unknown])) if net.unknown.any() else 0.0
        cycles.append(CycleSummary(
            c,
            net.as_dict(T_end),
            net.as_dict(res.T.max(axis=0)),
            net.as_dict(res.T.min(axis=0)),
            delta,
        ))
        T = T_end
        if delta < tol:
            return QuasiStationaryResult(res, cycles, True, P, table)
    raise SolverError(f"no periodic state within {cycles_max} cycles (last change {cycles[-1].delta:.3g} K)",
                      state=net.as_dict(T), history=cycles)


__all__ = [
    "orbital_period", "kepler_propagate", "orbit_state", "eclipse_state", "planet_view_factor",
    "environmental_loads", "EnvLoadsAtTime", "FaceLoads", "OrbitLoadTable", "quasi_stationary_run",
    "QuasiStationaryResult", "CycleSummary", "sun_direction", "attitude_matrix", "time_of_true_anomaly",
    "periapsis_time", "semi_major_axis", "eccentricity", "solve_kepler",
]
