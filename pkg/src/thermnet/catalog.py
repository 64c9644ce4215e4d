"""Shipped example models.

Each builder returns a model-file dictionary.  The JSON copies under
``thermnet/models`` are produced by ``python -m thermnet.catalog``, which
also runs the ray tracer so the files carry their radiative couplings.

Models:

* ``two_node`` -- a loaded plate radiating to space.
* ``single_capacitor`` -- one capacitor tied to a boundary by 1 W/K.
* ``cube`` -- closed unit cube with black inner walls.
* ``coaxial_discs`` -- two facing black discs.
* ``strut_chain`` -- a constant-conductivity rod between two boundaries.
* ``toy_orbit`` -- one node with a load at the orbital frequency.
* ``maqro_l2`` / ``maqro_heo`` -- a passively cooled instrument: spacecraft
  MLI, three shields, struts, an optical bench and a black test volume.
"""
from __future__ import annotations

import json
import math
import sys
from collections import defaultdict
from importlib import resources
from pathlib import Path

from .model import SPACE, RadCouplings, RadEntry, load_model, model_from_dict, subdivide_chain

NAMES = ("two_node", "single_capacitor", "cube", "coaxial_discs", "strut_chain", "toy_orbit",
         "maqro_l2", "maqro_heo")

SPACECRAFT_T = 293.15

# Representative cryogenic property tables: (T [K], k [W/m/K]) and (T [K], c [J/kg/K]).
MATERIALS = {
    "gfrp": {
        "conductivity": [[4, 0.07], [10, 0.12], [20, 0.17], [50, 0.26], [100, 0.37], [150, 0.46],
                         [200, 0.53], [300, 0.60]],
        "specific_heat": [[4, 2.0], [10, 10.0], [20, 40.0], [50, 150.0], [100, 320.0], [150, 460.0],
                          [200, 590.0], [300, 850.0]],
    },
    "aluminium": {
        "conductivity": [[4, 5.0], [10, 13.0], [20, 27.0], [50, 70.0], [100, 100.0], [150, 125.0],
                         [200, 140.0], [300, 155.0]],
        "specific_heat": [[4, 0.3], [10, 1.4], [20, 9.0], [50, 140.0], [100, 480.0], [150, 680.0],
                          [200, 800.0], [300, 900.0]],
    },
    "zerodur": {
        "conductivity": [[4, 0.08], [10, 0.12], [20, 0.17], [50, 0.35], [100, 0.8], [150, 1.05],
                         [200, 1.2], [300, 1.46]],
        "specific_heat": [[4, 0.5], [10, 3.0], [20, 15.0], [50, 100.0], [100, 280.0], [150, 430.0],
                          [200, 560.0], [300, 800.0]],
    },
    "steel": {
        "conductivity": [[4, 0.3], [10, 0.8], [20, 2.0], [50, 6.0], [100, 9.0], [150, 11.0],
                         [200, 13.0], [300, 15.0]],
        "specific_heat": [[4, 2.0], [10, 5.0], [20, 12.0], [50, 100.0], [100, 260.0], [150, 350.0],
                          [200, 400.0], [300, 480.0]],
    },
    "quartz": {
        "conductivity": [[4, 0.1], [10, 0.12], [20, 0.15], [50, 0.4], [100, 0.65], [200, 1.1], [300, 1.38]],
        "specific_heat": [[4, 0.5], [10, 3.0], [20, 15.0], [50, 90.0], [100, 250.0], [200, 520.0],
                          [300, 740.0]],
    },
}

DENSITY = {"gfrp": 1900.0, "aluminium": 2700.0, "zerodur": 2530.0, "quartz": 2200.0}


def _materials(*names):
    return [{"name": n, **MATERIALS[n]} for n in names]


def _disc(radius, z, down=False, x=0.0, y=0.0):
    return {"type": "disc", "radius": radius, "origin": [x, y, z], "z_axis": [0.0, 0.0, -1.0 if down else 1.0]}


def two_node() -> dict:
    return {
        "nodes": [
            {"id": "plate", "kind": "diffusion", "capacity": 10.0, "temperature": 293.15},
            {"id": "space", "kind": "boundary", "temperature": 3.0},
        ],
        "loads": [{"id": "heater", "node": "plate", "kind": "constant", "power": 1.0}],
        "rad_couplings": {"entries": [{"i": "plate", "j": "space", "gr": 0.01}]},
    }


def single_capacitor() -> dict:
    return {
        "nodes": [
            {"id": "mass", "kind": "diffusion", "capacity": 100.0, "temperature": 110.0},
            {"id": "spacecraft", "kind": "boundary", "temperature": 100.0},
        ],
        "conductors": [{"id": "link", "node_a": "mass", "node_b": "spacecraft", "kind": "constant", "gl": 1.0}],
        "loads": [{"id": "q", "node": "mass", "kind": "constant", "power": 0.0}],
    }


CUBE_WALLS = {
    "xm": ([-0.5, 0, 0], [1, 0, 0]), "xp": ([0.5, 0, 0], [-1, 0, 0]),
    "ym": ([0, -0.5, 0], [0, 1, 0]), "yp": ([0, 0.5, 0], [0, -1, 0]),
    "zm": ([0, 0, -0.5], [0, 0, 1]), "zp": ([0, 0, 0.5], [0, 0, -1]),
}


def cube() -> dict:
    nodes, faces = [], []
    for name, (origin, normal) in CUBE_WALLS.items():
        kind = "boundary" if name == "zm" else "diffusion"
        nodes.append({"id": name, "kind": kind, "capacity": 0.0 if kind == "boundary" else 50.0,
                      "temperature": 100.0 if kind == "boundary" else 150.0})
        faces.append({"id": f"{name}_f", "node": name, "side": "front", "alpha": 1.0, "epsilon": 1.0,
                      "shape": {"type": "rectangle", "width": 1.0, "length": 1.0, "origin": origin,
                                "z_axis": normal}})
    for n in nodes:
        if n["kind"] == "boundary":
            del n["capacity"]
    return {
        "nodes": nodes,
        "faces": faces,
        "loads": [{"id": "heater", "node": "zp", "kind": "constant", "power": 20.0}],
    }


def coaxial_discs() -> dict:
    return {
        "nodes": [
            {"id": "hot", "kind": "boundary", "temperature": 300.0},
            {"id": "cold", "kind": "diffusion", "capacity": 20.0, "temperature": 200.0},
        ],
        "faces": [
            {"id": "hot_f", "node": "hot", "side": "front", "alpha": 1.0, "epsilon": 1.0, "shape": _disc(0.5, 0.0)},
            {"id": "cold_f", "node": "cold", "side": "front", "alpha": 1.0, "epsilon": 1.0,
             "shape": _disc(0.5, 1.0, down=True)},
            {"id": "cold_back", "node": "cold", "side": "back", "alpha": 0.5, "epsilon": 0.5,
             "shape": _disc(0.5, 1.0, down=True)},
        ],
    }


def strut_chain(n: int = 10) -> dict:
    const = {"name": "const_k", "conductivity": [[1.0, 1.0]], "specific_heat": [[1.0, 500.0]]}
    data = {"materials": [const]}
    from .model import MaterialTable

    table = MaterialTable("const_k", ((1.0, 1.0),), ((1.0, 500.0),))
    nodes, conds = subdivide_chain(1.0, 1e-4, table, n, "hot", "cold", density=1000.0, prefix="rod",
                                   temperature=150.0)
    data["nodes"] = [
        {"id": "hot", "kind": "boundary", "temperature": 293.15},
        {"id": "cold", "kind": "boundary", "temperature": 30.0},
        *[{"id": nd.id, "kind": "diffusion", "temperature": nd.temperature,
           "capacity": {"material": nd.capacity.material, "mass": nd.capacity.mass}} for nd in nodes],
    ]
    data["conductors"] = [
        {"id": c.id, "node_a": c.node_a, "node_b": c.node_b, "kind": "geometric", "area": c.area,
         "length": c.length, "material": c.material} for c in conds
    ]
    return data


def toy_orbit() -> dict:
    from .model import Elements, OrbitSpec
    from .orbit import orbital_period

    elements = {"apogee_altitude": 400.0, "perigee_altitude": 400.0, "inclination": 51.6}
    period = orbital_period(OrbitSpec(Elements(**elements)))
    return {
        "nodes": [
            {"id": "box", "kind": "diffusion", "capacity": 1000.0, "temperature": 110.0},
            {"id": "sink", "kind": "boundary", "temperature": 100.0},
        ],
        "conductors": [{"id": "link", "node_a": "box", "node_b": "sink", "kind": "constant", "gl": 1.0}],
        "loads": [{"id": "orbital", "node": "box", "kind": "sinusoid", "mean": 10.0, "amplitude": 5.0,
                   "frequency": 1.0 / period}],
        "orbit": {"elements": elements, "attitude": {"mode": "nadir"}},
    }


# ---------------------------------------------------------------------------
# instrument example

# The instrument-side spacecraft disc is no wider than the first shield, so
# every stage above the first shield is hidden from it.
SC_RADIUS = 0.45
SC_BLANKET_GL = 0.035
SHIELDS = [  # (radius m, height m, plate thickness m)
    (0.45, 0.15, 0.002),
    (0.42, 0.35, 0.002),
    (0.38, 0.55, 0.002),
]
BENCH_Z = 0.75
BENCH_R = 0.12
BENCH_THICKNESS = 0.03
STRUT_SECTIONS = (13, 7, 3, 3)
STRUT_RADIUS = 0.01
STRUT_WALL = 0.001
STRUT_ANGLES = (90.0, 210.0, 330.0)
STRUT_LABELS = ("a", "b", "c")
MLI_EFFECTIVE_EMITTANCE = 0.01
TV_CENTRE = 0.79


def _face(fid, node, shape, side="front", alpha=0.9, epsilon=0.9, **extra):
    return {"id": fid, "node": node, "shape": shape, "side": side, "alpha": alpha, "epsilon": epsilon, **extra}


def maqro(orbit: bool = False) -> dict:
    """Shielded cryogenic optical bench on struts above a spacecraft."""
    ext = {"external": True} if orbit else {}
    nodes = [
        {"id": "spacecraft", "kind": "boundary", "temperature": SPACECRAFT_T, "group": "spacecraft"},
        {"id": "space", "kind": "boundary", "temperature": 3.0, "group": "space"},
        {"id": "sc_mli", "kind": "diffusion", "capacity": 400.0, "temperature": SPACECRAFT_T,
         "group": "spacecraft"},
    ]
    faces = [_face("sc_mli_top", "sc_mli", _disc(SC_RADIUS, 0.0), alpha=0.85, epsilon=0.85, **ext)]
    conductors = [{"id": "sc_blanket", "node_a": "spacecraft", "node_b": "sc_mli", "kind": "constant",
                   "gl": SC_BLANKET_GL}]
    extra_rad = []
    for k, (r, z, thick) in enumerate(SHIELDS, start=1):
        plate, mli = f"shield{k}", f"shield{k}_mli"
        mass = DENSITY["aluminium"] * math.pi * r * r * thick
        nodes.append({"id": plate, "kind": "diffusion", "temperature": SPACECRAFT_T, "group": plate,
                      "capacity": {"material": "aluminium", "mass": round(mass, 4)}})
        nodes.append({"id": mli, "kind": "diffusion", "capacity": 5.0, "temperature": SPACECRAFT_T, "group": plate})
        faces.append(_face(f"{plate}_top", plate, _disc(r, z), **ext))
        faces.append(_face(f"{mli}_bottom", mli, _disc(r, z), side="back", alpha=0.03, epsilon=0.03))
        extra_rad.append({"i": mli, "j": plate, "gr": round(math.pi * r * r * MLI_EFFECTIVE_EMITTANCE, 6)})

    bench_mass = DENSITY["zerodur"] * math.pi * BENCH_R**2 * BENCH_THICKNESS
    nodes.append({"id": "bench", "kind": "diffusion", "temperature": SPACECRAFT_T, "group": "bench",
                  "capacity": {"material": "zerodur", "mass": round(bench_mass, 4)}})
    faces.append(_face("bench_top", "bench", _disc(BENCH_R, BENCH_Z), alpha=0.03, epsilon=0.03, **ext))
    faces.append(_face("bench_bottom", "bench", _disc(BENCH_R, BENCH_Z), side="back", alpha=0.9, epsilon=0.9))

    # cavity mirrors flanking the test volume
    for name, x in (("mirror1", -0.0485), ("mirror2", 0.0485)):
        nodes.append({"id": name, "kind": "diffusion", "temperature": SPACECRAFT_T, "group": "bench",
                      "capacity": {"material": "quartz", "mass": 0.01}})
        shape = {"type": "disc", "radius": 0.0125, "origin": [x, 0.0, TV_CENTRE],
                 "z_axis": [1.0 if x < 0 else -1.0, 0.0, 0.0]}
        faces.append(_face(f"{name}_face", name, shape, alpha=0.8, epsilon=0.8))
        faces.append(_face(f"{name}_rear", name, shape, side="back", alpha=0.8, epsilon=0.8))
        conductors.append({"id": f"{name}_mount", "node_a": name, "node_b": "bench", "kind": "constant",
                           "gl": 0.01})

    # black test volume: a small closed cylinder with zero heat capacity
    nodes.append({"id": "test_volume", "kind": "arithmetic", "temperature": 20.0, "group": "bench"})
    tv = {"alpha": 1.0, "epsilon": 1.0, "high_accuracy": True}
    faces.append(_face("tv_side", "test_volume", {"type": "cylinder", "radius": 0.005, "height": 0.01,
                                                  "origin": [0.0, 0.0, TV_CENTRE - 0.005]}, **tv))
    faces.append(_face("tv_top", "test_volume", _disc(0.005, TV_CENTRE + 0.005), **tv))
    faces.append(_face("tv_bottom", "test_volume", _disc(0.005, TV_CENTRE - 0.005, down=True), **tv))

    # chips and harness
    nodes += [
        {"id": "preproc_chip", "kind": "diffusion", "temperature": SPACECRAFT_T, "group": "shield1",
         "capacity": {"material": "quartz", "mass": 0.005}},
        {"id": "detector_chip", "kind": "diffusion", "temperature": SPACECRAFT_T, "group": "bench",
         "capacity": {"material": "quartz", "mass": 0.005}},
        {"id": "harness1", "kind": "diffusion", "temperature": SPACECRAFT_T, "group": "harness", "capacity": 1.0},
        {"id": "harness2", "kind": "diffusion", "temperature": SPACECRAFT_T, "group": "harness", "capacity": 1.0},
    ]
    conductors += [
        {"id": "preproc_mount", "node_a": "preproc_chip", "node_b": "shield1", "kind": "constant", "gl": 2.8},
        {"id": "harness_sc", "node_a": "spacecraft", "node_b": "harness1", "kind": "constant", "gl": 6.6e-5},
        {"id": "harness_pre_a", "node_a": "harness1", "node_b": "preproc_chip", "kind": "constant", "gl": 3.3e-5},
        {"id": "harness_pre_b", "node_a": "preproc_chip", "node_b": "harness2", "kind": "constant", "gl": 3.3e-5},
        {"id": "harness_det", "node_a": "harness2", "node_b": "detector_chip", "kind": "constant", "gl": 1.5e-5},
        {"id": "detector_mount", "node_a": "detector_chip", "node_b": "bench", "kind": "constant", "gl": 0.05},
    ]
    loads = [
        {"id": "preproc_dissipation", "node": "preproc_chip", "kind": "constant", "power": 0.010},
        {"id": "detector_dissipation", "node": "detector_chip", "kind": "constant", "power": 0.001},
        {"id": "mirror1_dissipation", "node": "mirror1", "kind": "constant", "power": 0.0001},
        {"id": "mirror2_dissipation", "node": "mirror2", "kind": "constant", "power": 0.0001},
    ]

    # three GFRP struts from the spacecraft to the bench, one chain per section
    from .model import MaterialTable

    gfrp = MaterialTable("gfrp", tuple(map(tuple, MATERIALS["gfrp"]["conductivity"])),
                         tuple(map(tuple, MATERIALS["gfrp"]["specific_heat"])))
    area = 3 * math.pi * (STRUT_RADIUS**2 - (STRUT_RADIUS - STRUT_WALL) ** 2)
    levels = [0.0, *(z for _, z, _ in SHIELDS), BENCH_Z]
    ends = ["spacecraft", "shield1", "shield2", "shield3", "bench"]
    groups = ["spacecraft", "shield1", "shield2", "shield3"]
    for s, n in enumerate(STRUT_SECTIONS):
        z0, z1 = levels[s], levels[s + 1]
        prefix = f"strut{s + 1}"
        chain_nodes, chain_conds = subdivide_chain(z1 - z0, area, gfrp, n, ends[s], ends[s + 1],
                                                   density=DENSITY["gfrp"], prefix=prefix,
                                                   temperature=SPACECRAFT_T, group=groups[s])
        for k, nd in enumerate(chain_nodes):
            nodes.append({"id": nd.id, "kind": "diffusion", "temperature": nd.temperature, "group": nd.group,
                          "capacity": {"material": "gfrp", "mass": round(nd.capacity.mass, 8)}})
            dz = (z1 - z0) / n
            for label, ang in zip(STRUT_LABELS, STRUT_ANGLES):
                a = math.radians(ang)
                shape = {"type": "cylinder", "radius": STRUT_RADIUS, "height": round(dz, 10),
                         "origin": [round(BENCH_R * math.cos(a), 10), round(BENCH_R * math.sin(a), 10),
                                    round(z0 + k * dz, 10)]}
                faces.append(_face(f"{nd.id}_{label}", nd.id, shape, **ext))
        for c in chain_conds:
            conductors.append({"id": c.id, "node_a": c.node_a, "node_b": c.node_b, "kind": "geometric",
                               "area": round(c.area, 12), "length": round(c.length, 10), "material": "gfrp"})

    data = {
        "materials": _materials("gfrp", "aluminium", "zerodur", "quartz"),
        "nodes": nodes,
        "faces": faces,
        "conductors": conductors,
        "loads": loads,
        "_extra_rad": extra_rad,
    }
    if orbit:
        data["orbit"] = {
            "elements": {"apogee_altitude": 600000.0, "perigee_altitude": 600.0, "inclination": 63.4,
                         "argument_of_periapsis": 0.0, "raan": 0.0, "true_anomaly_epoch": 0.0},
            "body": {"mu": 398600.4418, "radius": 6371.0, "ir_temperature": 257.0, "albedo": 0.3},
            "sun": {"flux": 1369.0, "model": "fixed", "direction": [1.0, 0.0, 0.0]},
            "attitude": {"mode": "sun_oriented", "sun_axis": [0.0, 0.0, -1.0], "nadir_axis": [0.0, 0.0, 1.0]},
        }
    return data


def maqro_l2() -> dict:
    return maqro(orbit=False)


def maqro_heo() -> dict:
    return maqro(orbit=True)


BUILDERS = {
    "two_node": two_node, "single_capacitor": single_capacitor, "cube": cube, "coaxial_discs": coaxial_discs,
    "strut_chain": strut_chain, "toy_orbit": toy_orbit, "maqro_l2": maqro_l2, "maqro_heo": maqro_heo,
}


def node_level(rad: RadCouplings, owner: dict[str, str]) -> RadCouplings:
    """Sum face-level couplings into node pairs (stderr combined in quadrature)."""
    gr = defaultdict(float)
    var = defaultdict(float)
    for e in rad.entries:
        a, b = owner.get(e.i, e.i), owner.get(e.j, e.j)
        if a == b:
            continue
        key = (a, b) if (b == SPACE or (a != SPACE and a < b)) else (b, a)
        gr[key] += e.gr
        var[key] += (e.stderr or 0.0) ** 2
    entries = tuple(RadEntry(a, b, round(g, 12), round(math.sqrt(var[(a, b)]), 12))
                    for (a, b), g in sorted(gr.items()))
    return RadCouplings(entries, rad.seed, rad.rays, rad.capped, rad.symmetrized)


def build(name: str, threads: int | None = None) -> dict:
    """Model dictionary with radiative couplings filled in where the model has faces."""
    from .model import rad_couplings_to_dict
    from .radiative import compute_exchange_factors, to_rad_couplings

    data = BUILDERS[name]()
    extra = data.pop("_extra_rad", [])
    if data.get("faces") and "rad_couplings" not in data:
        model = model_from_dict(dict(data, rad_couplings={"entries": []}))
        rad = to_rad_couplings(compute_exchange_factors(model, threads=threads))
        if name.startswith("maqro"):
            rad = node_level(rad, {f.id: f.node for f in model.faces})
        block = rad_couplings_to_dict(rad)
        block["entries"] += extra
        data["rad_couplings"] = block
    return data


def model_path(name: str):
    return resources.files("thermnet").joinpath("models").joinpath(f"{name}.json")


def load_shipped(name: str):
    """Load one of the shipped example models by name."""
    if name not in NAMES:
        raise KeyError(f"unknown example model {name!r}; choose from {', '.join(NAMES)}")
    with resources.as_file(model_path(name)) as p:
        return load_model(p)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    out = Path(argv[0]) if argv else Path(__file__).with_name("models")
    out.mkdir(parents=True, exist_ok=True)
    cache = {}
    for name in NAMES:
        if name == "maqro_heo" and "maqro_l2" in cache:
            data = maqro_heo()
            data.pop("_extra_rad")
            data["rad_couplings"] = cache["maqro_l2"]["rad_couplings"]
        else:
            data = build(name)
        cache[name] = data
        model_from_dict(data)  # validate before writing
        (out / f"{name}.json").write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")
        print(f"wrote {out / (name + '.json')}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
