"""Surface primitives used by the geometric model.

Every primitive is defined in a local frame and placed by a rigid-body
pose (``origin`` plus local ``z_axis``/``x_axis`` in model coordinates).

Local definitions:

* rectangle -- centred on the origin, ``width`` along x, ``length`` along y,
  front normal +z.
* disc -- ``radius`` about the origin, front normal +z.
* annulus -- ``inner_radius`` < r < ``radius``, front normal +z.
* cylinder -- ``radius``, z in [0, ``height``], front normal points outward.
* cone -- frustum with ``radius`` at z=0 and ``top_radius`` at z=``height``,
  front normal points outward.

All batch routines take ``(N, 3)`` arrays and work on every ray at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ModelError

PLANAR = ("rectangle", "disc", "annulus")

_DIMENSIONS = {
    "rectangle": ("width", "length"),
    "disc": ("radius",),
    "annulus": ("inner_radius", "radius"),
    "cylinder": ("radius", "height"),
    "cone": ("radius", "top_radius", "height"),
}


@dataclass(frozen=True)
class Shape:
    type: str
    width: float | None = None
    length: float | None = None
    radius: float | None = None
    inner_radius: float | None = None
    top_radius: float | None = None
    height: float | None = None
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    z_axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    x_axis: tuple[float, float, float] | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "Shape":
        kw = dict(d)
        for key in ("origin", "z_axis", "x_axis"):
            if key in kw and kw[key] is not None:
                kw[key] = tuple(float(v) for v in kw[key])
        return cls(**kw)

    def to_dict(self) -> dict:
        out = {"type": self.type}
        for name in _DIMENSIONS[self.type]:
            out[name] = getattr(self, name)
        out["origin"] = list(self.origin)
        out["z_axis"] = list(self.z_axis)
        if self.x_axis is not None:
            out["x_axis"] = list(self.x_axis)
        return out

    def validate(self, path: str = "shape") -> None:
        if self.type not in _DIMENSIONS:
            raise ModelError(f"unknown primitive {self.type!r}", path=f"{path}.type")
        for name in _DIMENSIONS[self.type]:
            value = getattr(self, name)
            if value is None:
                raise ModelError(f"{self.type} requires {name!r}", path=f"{path}.{name}")
            if not math.isfinite(value) or value < 0:
                raise ModelError(f"{name} must be finite and >= 0", path=f"{path}.{name}")
        for name, value in self._unused():
            raise ModelError(f"{name!r} is not a parameter of {self.type}", path=f"{path}.{name}")
        if self.type == "annulus" and not self.inner_radius < self.radius:
            raise ModelError("inner_radius must be < radius", path=f"{path}.inner_radius")
        if self.type == "cone" and self.radius == 0 and self.top_radius == 0:
            raise ModelError("cone needs a non-zero radius", path=f"{path}.radius")
        if np.linalg.norm(self.z_axis) == 0:
            raise ModelError("z_axis must be non-zero", path=f"{path}.z_axis")
        try:
            frame(self)
        except ValueError as exc:
            raise ModelError(str(exc), path=f"{path}.x_axis") from None
        if not area(self) > 0:
            raise ModelError("area must be > 0", path=path)

    def _unused(self):
        wanted = _DIMENSIONS[self.type]
        for name in ("width", "length", "radius", "inner_radius", "top_radius", "height"):
            if name not in wanted and getattr(self, name) is not None:
                yield name, getattr(self, name)


def frame(shape: Shape) -> np.ndarray:
    """Rotation matrix whose columns are the local x, y, z axes in model coordinates."""
    ez = np.asarray(shape.z_axis, dtype=float)
    ez = ez / np.linalg.norm(ez)
    if shape.x_axis is None:
        trial = np.array([1.0, 0.0, 0.0]) if abs(ez[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    else:
        trial = np.asarray(shape.x_axis, dtype=float)
    ex = trial - np.dot(trial, ez) * ez
    nx = np.linalg.norm(ex)
    if nx < 1e-12:
        raise ValueError("x_axis is parallel to z_axis")
    ex = ex / nx
    ey = np.cross(ez, ex)
    return np.column_stack([ex, ey, ez])


def area(shape: Shape) -> float:
    t = shape.type
    if t == "rectangle":
        return shape.width * shape.length
    if t == "disc":
        return math.pi * shape.radius**2
    if t == "annulus":
        return math.pi * (shape.radius**2 - shape.inner_radius**2)
    if t == "cylinder":
        return 2.0 * math.pi * shape.radius * shape.height
    if t == "cone":
        r0, r1, h = shape.radius, shape.top_radius, shape.height
        return math.pi * (r0 + r1) * math.hypot(h, r1 - r0)
    raise ValueError(t)


class Primitive:
    """Compiled shape: cached frame and dimensions for batch queries."""

    def __init__(self, shape: Shape):
        self.shape = shape
        self.type = shape.type
        self.planar = shape.type in PLANAR
        self.R = frame(shape)
        self.origin = np.asarray(shape.origin, dtype=float)
        self.area = area(shape)
        if self.type == "cone":
            self.slope = (shape.top_radius - shape.radius) / shape.height
        elif self.type == "cylinder":
            self.slope = 0.0

    def to_local(self, P, D=None):
        p = (P - self.origin) @ self.R
        return p if D is None else (p, D @ self.R)

    def sample(self, u, v):
        """Map unit-square samples to points uniformly distributed by area.

        Returns (points, front_normals) in model coordinates.
        """
        s = self.shape
        n = len(u)
        local = np.zeros((n, 3))
        normal = np.zeros((n, 3))
        if self.type == "rectangle":
            local[:, 0] = (u - 0.5) * s.width
            local[:, 1] = (v - 0.5) * s.length
            normal[:, 2] = 1.0
        elif self.type in ("disc", "annulus"):
            r_in = s.inner_radius if self.type == "annulus" else 0.0
            r = np.sqrt(r_in**2 + u * (s.radius**2 - r_in**2))
            phi = 2.0 * np.pi * v
            local[:, 0] = r * np.cos(phi)
            local[:, 1] = r * np.sin(phi)
            normal[:, 2] = 1.0
        else:
            phi = 2.0 * np.pi * u
            if self.type == "cylinder" or s.radius == s.top_radius:
                r = np.full(n, s.radius)
                z = v * s.height
            else:
                r = np.sqrt(s.radius**2 + v * (s.top_radius**2 - s.radius**2))
                z = (r - s.radius) / self.slope
            local[:, 0] = r * np.cos(phi)
            local[:, 1] = r * np.sin(phi)
            local[:, 2] = z
            normal = self._curved_normal(local)
        return local @ self.R.T + self.origin, normal @ self.R.T

    def _curved_normal(self, local):
        rho = np.hypot(local[:, 0], local[:, 1])
        rho = np.where(rho > 0, rho, 1.0)
        n = np.column_stack([local[:, 0] / rho, local[:, 1] / rho, np.full(len(local), -self.slope)])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def normal_at(self, P):
        """Front normals at points lying on the surface."""
        if self.planar:
            return np.broadcast_to(self.R[:, 2], P.shape).copy()
        return self._curved_normal(self.to_local(P)) @ self.R.T

    def intersect(self, P, D, t_min):
        """Distance along each ray to the first hit beyond ``t_min``; inf if none."""
        p, d = self.to_local(P, D)
        s = self.shape
        if self.planar:
            with np.errstate(divide="ignore", invalid="ignore"):
                t = -p[:, 2] / d[:, 2]
            x = p[:, 0] + t * d[:, 0]
            y = p[:, 1] + t * d[:, 1]
            if self.type == "rectangle":
                inside = (np.abs(x) <= 0.5 * s.width) & (np.abs(y) <= 0.5 * s.length)
            else:
                r2 = x * x + y * y
                inside = r2 <= s.radius**2
                if self.type == "annulus":
                    inside &= r2 >= s.inner_radius**2
            ok = inside & (t > t_min) & np.isfinite(t)
            return np.where(ok, t, np.inf)

        k = self.slope
        rho0 = s.radius + k * p[:, 2]
        a = d[:, 0] ** 2 + d[:, 1] ** 2 - k * k * d[:, 2] ** 2
        b = 2.0 * (p[:, 0] * d[:, 0] + p[:, 1] * d[:, 1] - k * d[:, 2] * rho0)
        c = p[:, 0] ** 2 + p[:, 1] ** 2 - rho0**2
        disc = b * b - 4.0 * a * c
        with np.errstate(divide="ignore", invalid="ignore"):
            sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
            q = -0.5 * (b + np.copysign(sq, b))
            t1 = q / a
            t2 = c / q
            lin = np.abs(a) < 1e-14
            t_lin = -c / b
            t1 = np.where(lin, t_lin, t1)
            t2 = np.where(lin, np.inf, t2)
        best = np.full(len(p), np.inf)
        for t in (t1, t2):
            z = p[:, 2] + t * d[:, 2]
            ok = np.isfinite(t) & (t > t_min) & (z >= 0.0) & (z <= s.height)
            if self.type == "cone":
                ok &= (s.radius + k * z) >= 0.0
            best = np.where(ok & (t < best), t, best)
        return best


def quadrature(prim: Primitive, m: int = 8):
    """Deterministic midpoint quadrature: (points, normals, weights) with weights summing to the area."""
    g = (np.arange(m) + 0.5) / m
    u, v = np.meshgrid(g, g, indexing="ij")
    pts, nrm = prim.sample(u.ravel(), v.ravel())
    w = np.full(m * m, prim.area / (m * m))
    return pts, nrm, w


def cosine_hemisphere(normals, u, v):
    """Cosine-weighted directions about the given unit normals."""
    sin_t = np.sqrt(u)
    cos_t = np.sqrt(1.0 - u)
    phi = 2.0 * np.pi * v
    t1, t2 = tangent_basis(normals)
    return (
        (sin_t * np.cos(phi))[:, None] * t1
        + (sin_t * np.sin(phi))[:, None] * t2
        + cos_t[:, None] * normals
    )


def tangent_basis(n):
    """Two unit tangents orthogonal to each row of ``n`` (branchless frisvad-style)."""
    sign = np.where(n[:, 2] >= 0.0, 1.0, -1.0)
    a = -1.0 / (sign + n[:, 2])
    b = n[:, 0] * n[:, 1] * a
    t1 = np.column_stack([1.0 + sign * n[:, 0] ** 2 * a, sign * b, -sign * n[:, 0]])
    t2 = np.column_stack([b, sign + n[:, 1] ** 2 * a, -n[:, 1]])
    return t1, t2
