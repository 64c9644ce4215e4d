"""Monte Carlo ray tracing of radiative exchange factors.

Rays leave each emitting face-side from uniformly sampled points in
cosine-weighted directions.  At every hit the ray is absorbed with the
absorptance of the struck face-side, otherwise it is reflected diffusely
or specularly.  The exchange factor is

    GR(i, j) = A_i * eps_i * (fraction of rays from i finally absorbed at j)

with a ``space`` column for rays that leave the scene.

Random numbers come from counter-based Philox streams keyed by
(master seed, face id, chunk index), so results do not depend on how the
chunks are scheduled over worker threads.
"""
from __future__ import annotations

import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ModelError
from .geometry import Primitive, cosine_hemisphere
from .model import SPACE, Model, RadCouplings, RadEntry, SurfaceFace

DEFAULT_SEED = 12345
DEFAULT_RAYS = 10_000
HIGH_ACCURACY_RAYS = 100_000
MAX_BOUNCES = 64
CHUNK = 10_000


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    emitting_face: str
    weight: float = 1.0


@dataclass(frozen=True)
class Termination:
    kind: str  # "absorbed" or "escaped"
    face: str | None
    bounces: int
    capped: bool = False


class Scene:
    """Primitives plus the mapping of their sides to active faces.

    Sides without an active face are transparent to rays.
    """

    def __init__(self, faces):
        self.faces: list[SurfaceFace] = [f for f in faces if f.active]
        self.face_ids = [f.id for f in self.faces]
        self.face_index = {fid: k for k, fid in enumerate(self.face_ids)}
        self.prims: list[Primitive] = []
        side_map: dict[tuple[int, int], int] = {}
        shape_index = {}
        self.face_prim = np.zeros(len(self.faces), dtype=int)
        for k, f in enumerate(self.faces):
            if f.shape not in shape_index:
                shape_index[f.shape] = len(self.prims)
                self.prims.append(Primitive(f.shape))
            p = shape_index[f.shape]
            s = 0 if f.side == "front" else 1
            if (p, s) in side_map:
                other = self.face_ids[side_map[(p, s)]]
                raise ModelError(f"faces {other!r} and {f.id!r} occupy the same primitive side")
            side_map[(p, s)] = k
            self.face_prim[k] = p
        self.side_face = np.full((max(len(self.prims), 1), 2), -1, dtype=int)
        for (p, s), k in side_map.items():
            self.side_face[p, s] = k
        self.alpha = np.array([f.alpha for f in self.faces])
        self.epsilon = np.array([f.epsilon for f in self.faces])
        self.area = np.array([f.area for f in self.faces])
        self.specular = np.array([f.reflection == "specular" for f in self.faces])
        extent = max((float(np.max(np.abs(p.origin))) + math.sqrt(p.area) for p in self.prims), default=1.0)
        self.t_min = 1e-9 * max(extent, 1e-3)

    @classmethod
    def from_model(cls, model: Model) -> "Scene":
        return cls(model.faces)

    def nearest(self, P, D, last):
        """Closest primitive hit per ray: (t, primitive index or -1)."""
        t_best = np.full(len(P), np.inf)
        hit = np.full(len(P), -1, dtype=int)
        for k, prim in enumerate(self.prims):
            t = prim.intersect(P, D, self.t_min)
            if prim.planar:
                t[last == k] = np.inf
            better = t < t_best
            t_best[better] = t[better]
            hit[better] = k
        return t_best, hit

    def front_normals(self, X, hit):
        n = np.zeros_like(X)
        for k in np.unique(hit):
            sel = hit == k
            n[sel] = self.prims[k].normal_at(X[sel])
        return n

    def first_face(self, P, D, last):
        """Follow rays through transparent sides; face index hit (or -1) and hit points."""
        P = P.copy()
        last = last.copy()
        out = np.full(len(P), -1, dtype=int)
        idx = np.arange(len(P))
        while idx.size:
            t, hit = self.nearest(P[idx], D[idx], last[idx])
            go = hit >= 0
            idx, t, hit = idx[go], t[go], hit[go]
            if not idx.size:
                break
            X = P[idx] + t[:, None] * D[idx]
            nf = self.front_normals(X, hit)
            side = (np.einsum("ij,ij->i", D[idx], nf) > 0).astype(int)
            face = self.side_face[hit, side]
            done = face >= 0
            out[idx[done]] = face[done]
            P[idx] = X
            last[idx] = hit
            idx = idx[~done]
        return out


def sample_emission(face: SurfaceFace, rng, n: int | None = None):
    """Emission samples on ``face``: a Ray, or (origins, directions) arrays when ``n`` is given.

    Origins are uniform over the face area; directions are cosine-weighted
    about the normal of the emitting side.
    """
    prim = Primitive(face.shape)
    m = 1 if n is None else n
    P, N = prim.sample(rng.random(m), rng.random(m))
    if face.side == "back":
        N = -N
    D = cosine_hemisphere(N, rng.random(m), rng.random(m))
    if n is None:
        return Ray(origin=P[0], direction=D[0], emitting_face=face.id)
    return P, D


def _trace(scene: Scene, P, D, last, rng, max_bounces=MAX_BOUNCES):
    """Trace a batch; returns (face index absorbed at or -1 for space, capped mask, bounces)."""
    n = len(P)
    P = P.copy()
    D = D.copy()
    last = last.copy()
    result = np.full(n, -1, dtype=int)
    capped = np.zeros(n, dtype=bool)
    bounces = np.zeros(n, dtype=int)
    idx = np.arange(n)
    while idx.size:
        t, hit = scene.nearest(P[idx], D[idx], last[idx])
        go = hit >= 0
        idx, t, hit = idx[go], t[go], hit[go]
        if not idx.size:
            break
        d = D[idx]
        X = P[idx] + t[:, None] * d
        nf = scene.front_normals(X, hit)
        back = np.einsum("ij,ij->i", d, nf) > 0
        face = scene.side_face[hit, back.astype(int)]
        P[idx] = X
        last[idx] = hit

        surface = face >= 0
        u = rng.random(int(surface.sum()))
        f_s = face[surface]
        absorbed = np.zeros(len(idx), dtype=bool)
        absorbed[surface] = u < scene.alpha[f_s]
        bounces[idx[surface]] += 1
        over = surface & ~absorbed & (bounces[idx] > max_bounces)
        capped[idx[over]] = True
        stop = absorbed | over
        result[idx[stop]] = face[stop]

        refl = surface & ~stop
        if refl.any():
            r_idx = idx[refl]
            n_side = np.where(back[refl][:, None], -nf[refl], nf[refl])
            spec = scene.specular[face[refl]]
            new_d = np.empty_like(n_side)
            if spec.any():
                dd = d[refl][spec]
                ns = n_side[spec]
                new_d[spec] = dd - 2.0 * np.einsum("ij,ij->i", dd, ns)[:, None] * ns
            diff = ~spec
            if diff.any():
                m = int(diff.sum())
                new_d[diff] = cosine_hemisphere(n_side[diff], rng.random(m), rng.random(m))
            D[r_idx] = new_d
        idx = idx[~stop]
    return result, capped, bounces


def trace_ray(scene: Scene, ray: Ray, rng) -> Termination:
    """Follow one ray to absorption or escape."""
    last = np.array([-1])
    if ray.emitting_face in scene.face_index:
        last[0] = scene.face_prim[scene.face_index[ray.emitting_face]]
    res, capped, bounces = _trace(scene, ray.origin[None, :], ray.direction[None, :], last, rng)
    if res[0] < 0:
        return Termination("escaped", None, int(bounces[0]))
    return Termination("absorbed", scene.face_ids[res[0]], int(bounces[0]), bool(capped[0]))


def substream(master_seed: int, face_id: str, chunk: int) -> np.random.Generator:
    key = np.random.SeedSequence([int(master_seed), zlib.crc32(face_id.encode("utf-8")), int(chunk)])
    return np.random.Generator(np.random.Philox(key))


@dataclass
class RadCouplingMatrix:
    """Face-level exchange factors with Monte Carlo bookkeeping.

    ``gr[i, j]`` in m^2, ``gr_space[i]`` for rays escaping to space,
    ``stderr`` from binomial variance of the absorbed fractions.
    """

    face_ids: list[str]
    area: np.ndarray
    epsilon: np.ndarray
    counts: np.ndarray
    space_counts: np.ndarray
    rays: np.ndarray
    capped: np.ndarray
    seed: int
    gr: np.ndarray
    gr_space: np.ndarray
    stderr: np.ndarray
    stderr_space: np.ndarray
    symmetrized: bool = False

    @property
    def emitted(self) -> np.ndarray:
        return self.area * self.epsilon

    def fractions(self) -> np.ndarray:
        """Absorbed fraction per emitter row (equals the view factor for black scenes)."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.rays[:, None] > 0, self.counts / self.rays[:, None], 0.0)

    def get(self, i: str, j: str) -> float:
        a = self.face_ids.index(i)
        if j == SPACE:
            return float(self.gr_space[a])
        return float(self.gr[a, self.face_ids.index(j)])


def _budgets(scene: Scene, rays_per_face) -> np.ndarray:
    out = np.zeros(len(scene.faces), dtype=int)
    for k, f in enumerate(scene.faces):
        if isinstance(rays_per_face, dict) and f.id in rays_per_face:
            n = rays_per_face[f.id]
        elif isinstance(rays_per_face, int):
            n = rays_per_face
        else:
            n = HIGH_ACCURACY_RAYS if f.high_accuracy else DEFAULT_RAYS
        out[k] = n if f.epsilon > 0 else 0
    return out


def compute_exchange_factors(model_or_scene, rays_per_face=None, master_seed: int = DEFAULT_SEED,
                             threads: int | None = 1, symmetric: bool = True) -> RadCouplingMatrix:
    """Trace every active face and build the exchange-factor matrix.

    ``rays_per_face`` is an int (all faces), a dict face id -> count, or
    None for the default budgets (100 000 rays for ``high_accuracy``
    faces, 10 000 otherwise).  The result is symmetrized unless
    ``symmetric`` is False.
    """
    scene = model_or_scene if isinstance(model_or_scene, Scene) else Scene.from_model(model_or_scene)
    nf = len(scene.faces)
    rays = _budgets(scene, rays_per_face)
    tasks = []
    for k in range(nf):
        for c, start in enumerate(range(0, int(rays[k]), CHUNK)):
            tasks.append((k, c, min(CHUNK, int(rays[k]) - start)))

    def run(task):
        k, c, size = task
        rng = substream(master_seed, scene.face_ids[k], c)
        P, D = sample_emission(scene.faces[k], rng, size)
        last = np.full(size, scene.face_prim[k])
        res, capped, _ = _trace(scene, P, D, last, rng)
        row = np.bincount(res + 1, minlength=nf + 1)
        return k, row, int(capped.sum())

    threads = threads or os.cpu_count() or 1
    counts = np.zeros((nf, nf), dtype=np.int64)
    space = np.zeros(nf, dtype=np.int64)
    capped = np.zeros(nf, dtype=np.int64)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]
    for k, row, cap in results:
        space[k] += row[0]
        counts[k] += row[1:]
        capped[k] += cap

    emitted = scene.area * scene.epsilon
    with np.errstate(invalid="ignore", divide="ignore"):
        n = np.where(rays > 0, rays, 1)[:, None]
        p = counts / n
        p_space = space / n[:, 0]
    gr = emitted[:, None] * p
    gr_space = emitted * p_space
    se = emitted[:, None] * np.sqrt(p * (1 - p) / n)
    se_space = emitted * np.sqrt(p_space * (1 - p_space) / n[:, 0])
    m = RadCouplingMatrix(
        face_ids=list(scene.face_ids), area=scene.area, epsilon=scene.epsilon, counts=counts,
        space_counts=space, rays=rays, capped=capped, seed=master_seed, gr=gr, gr_space=gr_space,
        stderr=se, stderr_space=se_space,
    )
    return symmetrize(m) if symmetric else m


def symmetrize(m: RadCouplingMatrix) -> RadCouplingMatrix:
    """Average GR(i,j) and GR(j,i); the space column absorbs the change so each row still sums to A eps.

    A space entry that would turn negative (closed enclosures with noisy
    rows) is clamped to zero.
    """
    gr = 0.5 * (m.gr + m.gr.T)
    space = m.emitted - gr.sum(axis=1)
    space = np.where(space > 0, space, 0.0)
    se = 0.5 * np.sqrt(m.stderr**2 + m.stderr.T**2)
    return replace(m, gr=gr, gr_space=space, stderr=se, symmetrized=True)


def to_rad_couplings(m: RadCouplingMatrix, tol: float = 0.0) -> RadCouplings:
    """Model-file block: upper-triangle face pairs plus space entries (zeros dropped)."""
    entries = []
    n = len(m.face_ids)
    for i in range(n):
        for j in range(i + 1, n):
            g = float(m.gr[i, j]) if m.symmetrized else float(m.gr[i, j] + m.gr[j, i]) / 2
            if g > tol:
                se = float(m.stderr[i, j]) if m.symmetrized else float(0.5 * math.hypot(m.stderr[i, j], m.stderr[j, i]))
                entries.append(RadEntry(m.face_ids[i], m.face_ids[j], g, se))
        if m.gr_space[i] > tol:
            entries.append(RadEntry(m.face_ids[i], SPACE, float(m.gr_space[i]), float(m.stderr_space[i])))
    return RadCouplings(
        entries=tuple(entries), seed=m.seed,
        rays=tuple(sorted((fid, int(r)) for fid, r in zip(m.face_ids, m.rays))),
        capped=int(m.capped.sum()), symmetrized=True,
    )


def diagnostics_rows(m: RadCouplingMatrix):
    """(entry, GR, stderr, rays) rows for every non-zero entry."""
    rows = []
    for i, fi in enumerate(m.face_ids):
        for j, fj in enumerate(m.face_ids):
            if m.gr[i, j] > 0:
                rows.append((f"{fi}->{fj}", float(m.gr[i, j]), float(m.stderr[i, j]), int(m.rays[i])))
        if m.gr_space[i] > 0:
            rows.append((f"{fi}->{SPACE}", float(m.gr_space[i]), float(m.stderr_space[i]), int(m.rays[i])))
    return rows


def analytic_view_factor_coaxial_discs(r1: float, r2: float, h: float) -> float:
    """View factor from disc 1 to a parallel coaxial disc 2 at separation ``h``."""
    if not (r1 > 0 and r2 > 0 and h > 0):
        raise ValueError("r1, r2 and h must be > 0")
    R1 = r1 / h
    R2 = r2 / h
    X = 1.0 + (1.0 + R2 * R2) / (R1 * R1)
    return 0.5 * (X - math.sqrt(X * X - 4.0 * (R2 / R1) ** 2))


__all__ = [
    "Ray", "Termination", "Scene", "RadCouplingMatrix", "sample_emission", "trace_ray",
    "compute_exchange_factors", "symmetrize", "to_rad_couplings", "diagnostics_rows",
    "analytic_view_factor_coaxial_discs", "substream", "DEFAULT_SEED", "MAX_BOUNCES",
]
