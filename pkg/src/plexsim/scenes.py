"""Canonical scenes: bare bipyramid, QD-only, and QD-at-tip hybrids.

Geometry follows the reference configuration throughout: the bipyramid
lies on the substrate with its long axis along x (axis height w/2), the
plane wave comes down along -z polarized along x, and quantum dots attach
at the +x tip.
"""

from __future__ import annotations

from .geometry import Scene, Sphere, build_bipyramid, place_qd_at_tip
from .materials import MaterialModel, gold_fit, qd_material, silica, vacuum

QD_DEFAULTS = dict(eps_inf=6.1, lambda_ex_nm=640.0, hwhm_mev=106.34,
                   delta_eps=0.25)


def default_qd_material(**overrides) -> MaterialModel:
    kw = dict(QD_DEFAULTS)
    kw.update(overrides)
    return qd_material(**kw)


def bare_bp_scene(length_nm=86.0, width_nm=40.0, tip_radius_nm=4.0,
                  substrate=True, gold=None) -> Scene:
    gold = gold or gold_fit().model
    bp = build_bipyramid(length_nm, width_nm, tip_radius_nm,
                         center_nm=(0.0, 0.0, width_nm / 2.0 if substrate else 0.0))
    scene = Scene(background=vacuum(),
                  substrate=silica() if substrate else None)
    scene.add(bp, gold)
    return scene


def qd_only_scene(radius_nm=4.0, substrate=True, qd=None) -> Scene:
    qd = qd or default_qd_material()
    scene = Scene(background=vacuum(),
                  substrate=silica() if substrate else None)
    scene.add(Sphere(radius_nm, (0.0, 0.0, radius_nm if substrate else 0.0)), qd)
    return scene


def qd_bp_scene(length_nm=86.0, width_nm=40.0, tip_radius_nm=4.0,
                qd_radius_nm=4.0, gap_nm=0.0, count=1, substrate=True,
                gold=None, qd=None) -> Scene:
    scene = bare_bp_scene(length_nm, width_nm, tip_radius_nm,
                          substrate=substrate, gold=gold)
    bp = scene.shapes[0][0]
    qd = qd or default_qd_material()
    for sphere in place_qd_at_tip(bp, qd_radius_nm, gap_nm=gap_nm, count=count):
        scene.add(sphere, qd)
    return scene
