"""Thermal model schema, model-file I/O and conductive couplings.

A model is a set of lumped nodes (every property concentrated at the node
barycentre) tied together by conductors and radiative exchange factors.
Model files are JSON documents described by ``model.schema.json``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable

import jsonschema
import numpy as np

from .errors import ModelError
from .geometry import Shape, area

SIGMA = 5.670374419e-8
SPACE = "space"

NODE_KINDS = ("diffusion", "boundary", "arithmetic")
PROPERTIES = ("conductivity", "specific_heat")


@dataclass(frozen=True)
class MaterialTable:
    name: str
    conductivity: tuple[tuple[float, float], ...]
    specific_heat: tuple[tuple[float, float], ...]

    def _arrays(self, prop):
        if prop not in PROPERTIES:
            raise ValueError(f"unknown material property {prop!r}")
        key = "_cache_" + prop
        cached = self.__dict__.get(key)
        if cached is None:
            cached = self.__dict__[key] = np.array(getattr(self, prop), dtype=float).T
        return cached

    def value(self, prop: str, T):
        ts, vs = self._arrays(prop)
        return np.interp(T, ts, vs)

    def slope(self, prop: str, T):
        """d(prop)/dT of the interpolant; zero outside the table (clamped)."""
        ts, vs = self._arrays(prop)
        if len(ts) == 1:
            return np.zeros_like(np.asarray(T, dtype=float))
        seg = np.clip(np.searchsorted(ts, T, side="right") - 1, 0, len(ts) - 2)
        m = (vs[seg + 1] - vs[seg]) / (ts[seg + 1] - ts[seg])
        inside = (np.asarray(T) >= ts[0]) & (np.asarray(T) < ts[-1])
        return np.where(inside, m, 0.0)


def eval_material(table: MaterialTable, prop: str, T: float) -> float:
    """Piecewise-linear lookup of ``prop`` at temperature ``T``, clamped at the table ends."""
    if not T > 0:
        raise ValueError("temperature must be > 0 K")
    return float(table.value(prop, T))


@dataclass(frozen=True)
class MaterialCapacity:
    """Heat capacity given as mass times a tabulated specific heat."""

    material: str
    mass: float


@dataclass(frozen=True)
class ThermalNode:
    id: str
    kind: str
    temperature: float
    capacity: float | MaterialCapacity = 0.0
    group: str | None = None


@dataclass(frozen=True)
class Conductor:
    id: str
    node_a: str
    node_b: str
    kind: str
    gl: float | None = None
    area: float | None = None
    length: float | None = None
    material: str | None = None


@dataclass(frozen=True)
class SurfaceFace:
    id: str
    node: str
    shape: Shape
    side: str
    alpha: float
    epsilon: float
    reflection: str = "diffuse"
    active: bool = True
    high_accuracy: bool = False
    external: bool = False
    alpha_solar: float | None = None

    @property
    def area(self) -> float:
        return area(self.shape)

    @property
    def solar_absorptance(self) -> float:
        return self.alpha if self.alpha_solar is None else self.alpha_solar


@dataclass(frozen=True)
class HeatLoad:
    id: str
    node: str
    kind: str
    power: float | None = None
    mean: float | None = None
    amplitude: float | None = None
    frequency: float | None = None
    samples: tuple[tuple[float, float], ...] | None = None

    def at(self, t: float) -> float:
        if self.kind == "constant":
            return self.power
        if self.kind == "sinusoid":
            return self.mean + self.amplitude * math.sin(2.0 * math.pi * self.frequency * t)
        ts = [s[0] for s in self.samples]
        ws = [s[1] for s in self.samples]
        return float(np.interp(t, ts, ws))

    def knots(self) -> tuple[float, ...]:
        return tuple(s[0] for s in self.samples) if self.kind == "timeseries" else ()


@dataclass(frozen=True)
class RadEntry:
    i: str
    j: str
    gr: float
    stderr: float | None = None


@dataclass(frozen=True)
class RadCouplings:
    """Radiative exchange factors as stored in a model file.

    Entry ids may name faces, nodes or ``space``; faces are folded into
    their owning node when the network is assembled.
    """

    entries: tuple[RadEntry, ...]
    seed: int | None = None
    rays: tuple[tuple[str, int], ...] = ()
    capped: int = 0
    symmetrized: bool = True


@dataclass(frozen=True)
class Constants:
    sigma: float = SIGMA
    space_temperature: float = 3.0


@dataclass(frozen=True)
class CentralBody:
    mu: float = 398600.4418
    radius: float = 6371.0
    ir_temperature: float = 257.0
    albedo: float = 0.3


@dataclass(frozen=True)
class Elements:
    apogee_altitude: float
    perigee_altitude: float
    inclination: float = 0.0
    argument_of_periapsis: float = 0.0
    raan: float = 0.0
    true_anomaly_epoch: float = 0.0


@dataclass(frozen=True)
class Sun:
    flux: float = 1369.0
    model: str = "fixed"
    direction: tuple[float, float, float] = (1.0, 0.0, 0.0)
    longitude_epoch: float = 0.0


@dataclass(frozen=True)
class Attitude:
    mode: str = "sun_oriented"
    sun_axis: tuple[float, float, float] = (0.0, 0.0, -1.0)
    nadir_axis: tuple[float, float, float] = (0.0, 0.0, -1.0)


@dataclass(frozen=True)
class OrbitSpec:
    elements: Elements
    body: CentralBody = field(default_factory=CentralBody)
    sun: Sun = field(default_factory=Sun)
    attitude: Attitude = field(default_factory=Attitude)


@dataclass(frozen=True)
class Model:
    nodes: tuple[ThermalNode, ...]
    materials: tuple[MaterialTable, ...] = ()
    conductors: tuple[Conductor, ...] = ()
    faces: tuple[SurfaceFace, ...] = ()
    loads: tuple[HeatLoad, ...] = ()
    constants: Constants = field(default_factory=Constants)
    orbit: OrbitSpec | None = None
    rad_couplings: RadCouplings | None = None

    @cached_property
    def node_map(self) -> dict[str, ThermalNode]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def material_map(self) -> dict[str, MaterialTable]:
        return {m.name: m for m in self.materials}

    @cached_property
    def face_map(self) -> dict[str, SurfaceFace]:
        return {f.id: f for f in self.faces}

    def node(self, node_id: str) -> ThermalNode:
        return self.node_map[node_id]

    def material(self, name: str) -> MaterialTable:
        return self.material_map[name]

    def capacity(self, node: ThermalNode, T: float) -> float:
        if isinstance(node.capacity, MaterialCapacity):
            mat = self.material(node.capacity.material)
            return node.capacity.mass * float(mat.value("specific_heat", T))
        return float(node.capacity)

    def to_dict(self) -> dict:
        return _model_to_dict(self)


def conductor_GL(c: Conductor, T_mean: float, materials=None) -> float:
    """Conductance of ``c`` in W/K at the mean temperature of its endpoints.

    ``materials`` maps material names to tables (a Model works too) and is
    only needed for geometric conductors.
    """
    if c.kind == "constant":
        return c.gl
    table = _lookup_material(materials, c.material)
    return float(table.value("conductivity", T_mean)) * c.area / c.length


def _lookup_material(materials, name):
    if isinstance(materials, Model):
        return materials.material(name)
    if isinstance(materials, MaterialTable):
        return materials
    return materials[name]


def subdivide_chain(
    length: float,
    S: float,
    material: MaterialTable,
    n: int,
    end_a: str,
    end_b: str,
    *,
    density: float,
    prefix: str = "chain",
    temperature: float = 293.15,
    group: str | None = None,
) -> tuple[list[ThermalNode], list[Conductor]]:
    """Split a uniform rod into ``n`` equal diffusion nodes.

    The rod between ``end_a`` and ``end_b`` becomes ``n`` nodes joined by
    ``n + 1`` geometric conductors: interior spans are ``length / n`` and
    the two end spans ``length / (2 n)``, so the series resistance at a
    uniform temperature equals that of the undivided rod.  Each node
    carries mass ``density * S * length / n`` with the material's
    specific heat.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (length > 0 and S > 0):
        raise ValueError("length and S must be > 0")
    mass = density * S * length / n
    ids = [f"{prefix}_{k + 1}" for k in range(n)]
    nodes = [
        ThermalNode(id=i, kind="diffusion", temperature=temperature,
                    capacity=MaterialCapacity(material.name, mass), group=group)
        for i in ids
    ]
    chain = [end_a, *ids, end_b]
    conductors = []
    for k in range(n + 1):
        span = length / (2 * n) if k in (0, n) else length / n
        conductors.append(Conductor(
            id=f"{prefix}_c{k}", node_a=chain[k], node_b=chain[k + 1], kind="geometric",
            area=S, length=span, material=material.name,
        ))
    return nodes, conductors


# ---------------------------------------------------------------------------
# file format

_SCHEMA = None


def schema() -> dict:
    global _SCHEMA
    if _SCHEMA is None:
        text = resources.files("thermnet").joinpath("model.schema.json").read_text("utf-8")
        _SCHEMA = json.loads(text)
    return _SCHEMA


def parse_model(text: str) -> Model:
    """Parse and validate model-file text."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(exc.msg, line=exc.lineno, column=exc.colno) from None
    return model_from_dict(data)


def load_model(path) -> Model:
    return parse_model(Path(path).read_text(encoding="utf-8"))


def serialize_model(model: Model) -> str:
    return json.dumps(model.to_dict(), indent=2) + "\n"


def _json_path(parts: Iterable) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def model_from_dict(data: dict) -> Model:
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ModelError(err.message, path=_json_path(err.absolute_path))

    consts = Constants(**data.get("constants", {}))
    materials = tuple(
        MaterialTable(
            name=m["name"],
            conductivity=tuple((float(t), float(v)) for t, v in m["conductivity"]),
            specific_heat=tuple((float(t), float(v)) for t, v in m["specific_heat"]),
        )
        for m in data.get("materials", [])
    )
    nodes = []
    for n in data["nodes"]:
        cap = n.get("capacity", 0.0)
        if isinstance(cap, dict):
            cap = MaterialCapacity(cap["material"], float(cap["mass"]))
        else:
            cap = float(cap)
        nodes.append(ThermalNode(id=n["id"], kind=n["kind"], temperature=float(n["temperature"]),
                                 capacity=cap, group=n.get("group")))
    faces = []
    for f in data.get("faces", []):
        kw = dict(f)
        kw["shape"] = Shape.from_dict(f["shape"])
        faces.append(SurfaceFace(**kw))
    conductors = [Conductor(**c) for c in data.get("conductors", [])]
    loads = []
    for k, ld in enumerate(data.get("loads", [])):
        kw = dict(ld)
        kw.setdefault("id", f"load{k}")
        if "samples" in kw:
            kw["samples"] = tuple((float(t), float(w)) for t, w in kw["samples"])
        loads.append(HeatLoad(**kw))
    orbit = _orbit_from_dict(data["orbit"]) if data.get("orbit") else None
    rad = _rad_from_dict(data["rad_couplings"]) if data.get("rad_couplings") else None

    model = Model(
        nodes=tuple(nodes), materials=materials, conductors=tuple(conductors),
        faces=tuple(faces), loads=tuple(loads), constants=consts, orbit=orbit,
        rad_couplings=rad,
    )
    validate(model)
    return model


def _orbit_from_dict(d: dict) -> OrbitSpec:
    def vec(sub, key):
        if key in sub:
            sub[key] = tuple(float(x) for x in sub[key])
        return sub

    return OrbitSpec(
        elements=Elements(**d["elements"]),
        body=CentralBody(**d.get("body", {})),
        sun=Sun(**vec(dict(d.get("sun", {})), "direction")),
        attitude=Attitude(**vec(vec(dict(d.get("attitude", {})), "sun_axis"), "nadir_axis")),
    )


def _rad_from_dict(d: dict) -> RadCouplings:
    return RadCouplings(
        entries=tuple(RadEntry(**e) for e in d["entries"]),
        seed=d.get("seed"),
        rays=tuple(sorted(d.get("rays", {}).items())),
        capped=d.get("capped", 0),
        symmetrized=d.get("symmetrized", True),
    )


def rad_couplings_to_dict(rad: RadCouplings) -> dict:
    entries = []
    for e in rad.entries:
        item = {"i": e.i, "j": e.j, "gr": e.gr}
        if e.stderr is not None:
            item["stderr"] = e.stderr
        entries.append(item)
    return {
        "seed": rad.seed,
        "rays": dict(rad.rays),
        "capped": rad.capped,
        "symmetrized": rad.symmetrized,
        "entries": entries,
    }


def _drop_none(d: dict) -> dict:
    return {k: v for k, v in d.items() if v is not None}


def _model_to_dict(m: Model) -> dict:
    out = {
        "constants": {"sigma": m.constants.sigma, "space_temperature": m.constants.space_temperature},
        "materials": [
            {"name": t.name, "conductivity": [list(p) for p in t.conductivity],
             "specific_heat": [list(p) for p in t.specific_heat]}
            for t in m.materials
        ],
        "nodes": [],
        "faces": [],
        "conductors": [_drop_none(c.__dict__) for c in m.conductors],
        "loads": [],
    }
    for n in m.nodes:
        cap = n.capacity
        if isinstance(cap, MaterialCapacity):
            cap = {"material": cap.material, "mass": cap.mass}
        out["nodes"].append(_drop_none({"id": n.id, "kind": n.kind, "temperature": n.temperature,
                                        "capacity": cap, "group": n.group}))
    for f in m.faces:
        d = {k: v for k, v in f.__dict__.items() if k != "shape"}
        d["shape"] = f.shape.to_dict()
        out["faces"].append(_drop_none(d))
    for ld in m.loads:
        d = _drop_none(ld.__dict__)
        if ld.samples is not None:
            d["samples"] = [list(s) for s in ld.samples]
        out["loads"].append(d)
    if m.orbit is not None:
        o = m.orbit
        out["orbit"] = {
            "body": dict(o.body.__dict__),
            "elements": dict(o.elements.__dict__),
            "sun": {**o.sun.__dict__, "direction": list(o.sun.direction)},
            "attitude": {"mode": o.attitude.mode, "sun_axis": list(o.attitude.sun_axis),
                         "nadir_axis": list(o.attitude.nadir_axis)},
        }
    if m.rad_couplings is not None:
        out["rad_couplings"] = rad_couplings_to_dict(m.rad_couplings)
    return out


def validate(model: Model) -> None:
    """Check cross-references and field invariants; raise ModelError on the first problem."""
    node_ids = set()
    for k, n in enumerate(model.nodes):
        path = f"$.nodes[{k}]"
        if n.id in node_ids:
            raise ModelError(f"duplicate node id {n.id!r}", path=f"{path}.id")
        node_ids.add(n.id)
        if not math.isfinite(n.temperature):
            raise ModelError("temperature must be finite", path=f"{path}.temperature")
        cap = n.capacity
        if n.kind == "diffusion":
            if isinstance(cap, MaterialCapacity):
                if cap.material not in model.material_map:
                    raise ModelError(f"node {n.id!r} references undefined material {cap.material!r}",
                                     path=f"{path}.capacity.material")
            elif not cap > 0:
                raise ModelError(f"diffusion node {n.id!r} needs capacity > 0", path=f"{path}.capacity")
            if not n.temperature > 0:
                raise ModelError("initial temperature must be > 0 K", path=f"{path}.temperature")
        elif n.kind == "arithmetic":
            if isinstance(cap, MaterialCapacity) or cap != 0:
                raise ModelError(f"arithmetic node {n.id!r} must have zero capacity", path=f"{path}.capacity")
        else:
            if not n.temperature > 0:
                raise ModelError(f"boundary node {n.id!r} needs a temperature > 0 K",
                                 path=f"{path}.temperature")
    if SPACE in node_ids and model.node(SPACE).kind != "boundary":
        raise ModelError("node 'space' is reserved for the deep-space sink and must be a boundary node")

    names = set()
    for k, mat in enumerate(model.materials):
        path = f"$.materials[{k}]"
        if mat.name in names:
            raise ModelError(f"duplicate material {mat.name!r}", path=f"{path}.name")
        names.add(mat.name)
        for prop in PROPERTIES:
            table = getattr(mat, prop)
            ts = [p[0] for p in table]
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ModelError("temperatures must be strictly increasing", path=f"{path}.{prop}")
            if any(not (p[0] > 0 and p[1] > 0) for p in table):
                raise ModelError("table entries must be > 0", path=f"{path}.{prop}")

    ids = set()
    for k, c in enumerate(model.conductors):
        path = f"$.conductors[{k}]"
        if c.id in ids:
            raise ModelError(f"duplicate conductor id {c.id!r}", path=f"{path}.id")
        ids.add(c.id)
        for end in ("node_a", "node_b"):
            ref = getattr(c, end)
            if ref not in node_ids and ref != SPACE:
                raise ModelError(f"conductor {c.id!r} references undefined node {ref!r}", path=f"{path}.{end}")
        if c.node_a == c.node_b:
            raise ModelError(f"conductor {c.id!r} connects node {c.node_a!r} to itself", path=path)
        if c.kind == "constant":
            if c.gl is None or not c.gl > 0:
                raise ModelError(f"constant conductor {c.id!r} needs gl > 0", path=f"{path}.gl")
            for extra in ("area", "length", "material"):
                if getattr(c, extra) is not None:
                    raise ModelError(f"{extra!r} not allowed on a constant conductor", path=f"{path}.{extra}")
        else:
            if c.gl is not None:
                raise ModelError("'gl' not allowed on a geometric conductor", path=f"{path}.gl")
            for dim in ("area", "length"):
                v = getattr(c, dim)
                if v is None or not v > 0:
                    raise ModelError(f"geometric conductor {c.id!r} needs {dim} > 0", path=f"{path}.{dim}")
            if c.material not in model.material_map:
                raise ModelError(f"conductor {c.id!r} references undefined material {c.material!r}",
                                 path=f"{path}.material")

    ids = set()
    for k, f in enumerate(model.faces):
        path = f"$.faces[{k}]"
        if f.id in ids or f.id in node_ids or f.id == SPACE:
            raise ModelError(f"face id {f.id!r} clashes with another face or node id", path=f"{path}.id")
        ids.add(f.id)
        if f.node not in node_ids:
            raise ModelError(f"face {f.id!r} references undefined node {f.node!r}", path=f"{path}.node")
        f.shape.validate(f"{path}.shape")

    ids = set()
    for k, ld in enumerate(model.loads):
        path = f"$.loads[{k}]"
        if ld.id in ids:
            raise ModelError(f"duplicate load id {ld.id!r}", path=f"{path}.id")
        ids.add(ld.id)
        if ld.node not in node_ids:
            raise ModelError(f"load {ld.id!r} references undefined node {ld.node!r}", path=f"{path}.node")
        required = {"constant": ("power",), "sinusoid": ("mean", "amplitude", "frequency"),
                    "timeseries": ("samples",)}[ld.kind]
        for name in ("power", "mean", "amplitude", "frequency", "samples"):
            present = getattr(ld, name) is not None
            if name in required and not present:
                raise ModelError(f"{ld.kind} load needs {name!r}", path=f"{path}.{name}")
            if name not in required and present:
                raise ModelError(f"{name!r} not allowed on a {ld.kind} load", path=f"{path}.{name}")
        if ld.kind == "constant" and ld.power < 0:
            raise ModelError("power must be >= 0", path=f"{path}.power")
        if ld.kind == "sinusoid" and (ld.mean < 0 or ld.frequency <= 0):
            raise ModelError("sinusoid needs mean >= 0 and frequency > 0", path=path)
        if ld.kind == "timeseries":
            ts = [s[0] for s in ld.samples]
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ModelError("sample times must be strictly increasing", path=f"{path}.samples")

    if model.orbit is not None:
        e = model.orbit.elements
        if e.apogee_altitude < e.perigee_altitude:
            raise ModelError("apogee altitude must be >= perigee altitude", path="$.orbit.elements")

    if model.rad_couplings is not None:
        known = node_ids | set(model.face_map) | {SPACE}
        for k, e in enumerate(model.rad_couplings.entries):
            for end in ("i", "j"):
                ref = getattr(e, end)
                if ref not in known:
                    raise ModelError(f"radiative coupling references unknown id {ref!r}",
                                     path=f"$.rad_couplings.entries[{k}].{end}")

    has_sink = any(n.kind == "boundary" for n in model.nodes)
    has_sink |= any(SPACE in (c.node_a, c.node_b) for c in model.conductors)
    if model.rad_couplings is not None:
        has_sink |= any(SPACE in (e.i, e.j) for e in model.rad_couplings.entries)
    else:
        has_sink |= any(f.active and f.epsilon > 0 for f in model.faces)
    if not has_sink:
        raise ModelError("model needs at least one boundary node or a radiative sink to space")


def with_rad_couplings(model: Model, rad: RadCouplings | None) -> Model:
    from dataclasses import replace

    return replace(model, rad_couplings=rad)


__all__ = [
    "SIGMA", "SPACE", "MaterialTable", "MaterialCapacity", "ThermalNode", "Conductor",
    "SurfaceFace", "HeatLoad", "RadEntry", "RadCouplings", "Constants", "OrbitSpec",
    "CentralBody", "Elements", "Sun", "Attitude", "Model", "eval_material", "conductor_GL",
    "subdivide_chain", "parse_model", "load_model", "serialize_model", "model_from_dict",
    "validate", "schema", "with_rad_couplings", "rad_couplings_to_dict",
]
