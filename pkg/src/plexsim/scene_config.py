"""Scene configuration: YAML documents describing materials, shapes,
substrate, source, grid, monitors and outputs.

Every physical key carries its unit in the name (length_nm, hwhm_mev,
band_nm) to keep unit bugs loud.  Configurations are schema-validated
before any allocation; load -> save -> load round-trips to an identical
document.
"""

from __future__ import annotations

import copy
import importlib.resources
from pathlib import Path

import jsonschema
import yaml

from .geometry import Scene, Sphere, build_bipyramid, place_qd_at_tip
from .materials import (MaterialModel, Pole, fit_pole_model, gold_fit,
                        load_tabulated, qd_material, vacuum)


class ConfigError(ValueError):
    pass


_NUM = {"type": "number"}
_VEC3 = {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "materials", "shapes", "source", "grid", "monitors"],
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "materials": {
            "type": "object",
            "minProperties": 1,
            "additionalProperties": {
                "type": "object",
                "required": ["kind"],
                "properties": {"kind": {"enum": ["constant", "gold_jc", "qd_lorentz",
                                                 "fitted_table", "poles"]}},
            },
        },
        "background": {"type": "string"},
        "substrate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"enabled": {"type": "boolean"},
                           "material": {"type": "string"}},
        },
        "shapes": {
            "type": "array",
            "minItems": 0,
            "items": {
                "type": "object",
                "required": ["type", "material"],
                "properties": {
                    "type": {"enum": ["bipyramid", "sphere", "qd_at_tip"]},
                    "material": {"type": "string"},
                    "length_nm": _NUM, "width_nm": _NUM, "tip_radius_nm": _NUM,
                    "radius_nm": _NUM, "center_nm": _VEC3, "axis": _VEC3,
                    "gap_nm": _NUM, "count": {"type": "integer"},
                },
            },
        },
        "source": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "polarization": _VEC3, "propagation": _VEC3,
                "center_nm": _NUM,
                "band_nm": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"cell_nm": _NUM, "courant": _NUM,
                           "cpml_cells": {"type": "integer"},
                           "dft_stride": {"type": "integer"}},
        },
        "monitors": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "wavelengths": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["min_nm", "max_nm", "count"],
                    "properties": {"min_nm": _NUM, "max_nm": _NUM,
                                   "count": {"type": "integer", "minimum": 2}},
                },
                "monitor_margin_nm": _NUM,
                "source_gap_nm": _NUM,
                "maps": {"type": "array",
                         "items": {"type": "object", "additionalProperties": False,
                                   "required": ["plane", "offset_nm"],
                                   "properties": {"plane": {"enum": ["z", "y"]},
                                                  "offset_nm": _NUM}}},
                "map_wavelengths_nm": {"type": "array", "items": _NUM},
                "mode_volume": {"type": "boolean"},
            },
        },
        "stop": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"max_steps": {"type": "integer"},
                           "decay_threshold": _NUM},
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}},
        },
    },
}

_SHAPE_REQUIRED = {
    "bipyramid": ("length_nm", "width_nm", "tip_radius_nm"),
    "sphere": ("radius_nm",),
    "qd_at_tip": ("radius_nm",),
}


def validate_config(cfg):
    """Schema plus cross-field checks; errors carry the offending path."""
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {exc.message}") from exc
    names = set(cfg["materials"])
    names.add("vacuum")
    bg = cfg.get("background", "vacuum")
    if bg not in names:
        raise ConfigError(f"background: unknown material {bg!r}")
    sub = cfg.get("substrate", {})
    if sub.get("enabled") and sub.get("material", "") not in names:
        raise ConfigError(f"substrate/material: unknown material "
                          f"{sub.get('material')!r}")
    for i, sh in enumerate(cfg["shapes"]):
        if sh["material"] not in names:
            raise ConfigError(
                f"shapes/{i}: shape {sh['type']!r} references unknown material "
                f"{sh['material']!r}")
        for key in _SHAPE_REQUIRED[sh["type"]]:
            if key not in sh:
                raise ConfigError(f"shapes/{i}: {sh['type']} requires {key}")
    if any(sh["type"] == "qd_at_tip" for sh in cfg["shapes"]) and not any(
            sh["type"] == "bipyramid" for sh in cfg["shapes"]):
        raise ConfigError("shapes: qd_at_tip requires a bipyramid in the scene")
    return cfg


def load_config(path):
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: not a mapping document")
    return validate_config(cfg)


def save_config(cfg, path):
    with open(path, "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)


def bundled_scene_path(name):
    ref = importlib.resources.files("plexsim.assets") / "scenes" / f"{name}.yaml"
    with importlib.resources.as_file(ref) as p:
        return Path(p)


def _build_material(name, spec, base_dir):
    kind = spec["kind"]
    if kind == "constant":
        return MaterialModel(eps_inf=float(spec["eps"]), name=name)
    if kind == "gold_jc":
        band = tuple(spec.get("band_nm", (450.0, 900.0)))
        model = gold_fit(band).model
        return MaterialModel(eps_inf=model.eps_inf, poles=model.poles, name=name)
    if kind == "qd_lorentz":
        return qd_material(eps_inf=float(spec["eps_inf"]),
                           lambda_ex_nm=float(spec["lambda_ex_nm"]),
                           hwhm_mev=float(spec["hwhm_mev"]),
                           delta_eps=float(spec["delta_eps"]), name=name)
    if kind == "fitted_table":
        table = load_tabulated(Path(base_dir) / spec["path"], name=name)
        fit = fit_pole_model(table, n_lorentz=int(spec.get("n_lorentz", 2)),
                             n_drude=int(spec.get("n_drude", 1)),
                             band_nm=tuple(spec.get("band_nm", (450.0, 900.0))),
                             name=name)
        return fit.model
    if kind == "poles":
        poles = tuple(Pole(delta_eps=float(p["delta_eps"]),
                           omega0=float(p["omega0_rad_fs"]),
                           gamma=float(p["gamma_rad_fs"]),
                           kind=p.get("kind", "lorentz"))
                      for p in spec.get("poles", ()))
        return MaterialModel(eps_inf=float(spec["eps_inf"]), poles=poles, name=name)
    raise ConfigError(f"materials/{name}: unknown kind {kind!r}")


def build_scene(cfg, base_dir=".") -> Scene:
    """Instantiate the Scene described by a validated configuration."""
    materials = {"vacuum": vacuum()}
    for name, spec in cfg["materials"].items():
        materials[name] = _build_material(name, spec, base_dir)
    substrate = None
    sub = cfg.get("substrate", {})
    if sub.get("enabled"):
        substrate = materials[sub["material"]]
    scene = Scene(background=materials[cfg.get("background", "vacuum")],
                  substrate=substrate)
    bp = None
    for i, sh in enumerate(cfg["shapes"]):
        mat = materials[sh["material"]]
        if sh["type"] == "bipyramid":
            center = sh.get("center_nm")
            if center is None:
                # Rest on the substrate when present, else center at origin.
                z = sh["width_nm"] / 2.0 if substrate is not None else 0.0
                center = (0.0, 0.0, z)
            bp = build_bipyramid(sh["length_nm"], sh["width_nm"],
                                 sh["tip_radius_nm"], center_nm=tuple(center),
                                 axis=tuple(sh.get("axis", (1.0, 0.0, 0.0))))
            scene.add(bp, mat)
        elif sh["type"] == "sphere":
            scene.add(Sphere(sh["radius_nm"], tuple(sh["center_nm"])), mat)
        elif sh["type"] == "qd_at_tip":
            if bp is None:
                raise ConfigError(f"shapes/{i}: qd_at_tip before any bipyramid")
            for sphere in place_qd_at_tip(bp, sh["radius_nm"],
                                          gap_nm=sh.get("gap_nm", 0.0),
                                          count=sh.get("count", 1)):
                scene.add(sphere, mat)
    return scene


def monitor_wavelengths(cfg):
    import numpy as np
    w = cfg["monitors"].get("wavelengths",
                            {"min_nm": 500.0, "max_nm": 800.0, "count": 151})
    return np.linspace(w["min_nm"], w["max_nm"], int(w["count"]))


def set_by_path(cfg, dotted_path, value):
    """Assign into a nested config by dotted path, list indices allowed
    (e.g. shapes.0.length_nm)."""
    cfg = copy.deepcopy(cfg)
    parts = dotted_path.split(".")
    node = cfg
    for p in parts[:-1]:
        node = node[int(p)] if isinstance(node, list) else node[p]
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        if last not in node:
            raise ConfigError(f"parameter path {dotted_path!r} not present")
        node[last] = value
    return cfg
