"""JSON (de)serialisation of model files.

Three document shapes are accepted, discriminated by "type":

  {"type": "levy", "dim": d, "b": [...], "c": [[...]],
   "truncation": ["unit_clip", ...],
   "jumps": [{"kind": "atoms", "atoms": [{"x": [...], "intensity": ...}]},
             {"kind": "gaussian_push", "lambda": ..., "mean": [...],
              "cov": [[...]]}]}

  {"type": "discrete", "support": [{"x": [...], "p": ...}]}

  {"type": "margrabe", "spot1": ..., "spot2": ..., "maturity": ...,
   "diffusion": {"sigma1_sq": ..., "sigma12": ..., "sigma2_sq": ...},
   "jump": {"lambda": ..., "mean": [m1, m2], "cov": [[...], [...]]},
   "defaults": [{"x": [x1, x2], "intensity": ...}]}

Complex numbers appear as "a+bi" strings; serialisation is full-precision so
round trips are exact.
"""

from __future__ import annotations

import json
from typing import Union

import numpy as np

from .models import (
    DiscreteModel,
    FiniteAtoms,
    GaussianPush,
    JumpMeasure,
    LevyTriplet,
    SumMeasure,
    TruncationSpec,
    empty_measure,
)
from .pricing import MargrabeModel

AnyModel = Union[LevyTriplet, DiscreteModel, MargrabeModel]


class ModelFormatError(ValueError):
    """The model document does not match the schema."""


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ModelFormatError(f"missing key {key!r} in {where}")
    return doc[key]


def _parse_measure(entries, dim: int) -> JumpMeasure:
    parts = []
    for k, entry in enumerate(entries or []):
        kind = _require(entry, "kind", f"jumps[{k}]")
        if kind == "atoms":
            atoms = _require(entry, "atoms", f"jumps[{k}]")
            pts = np.array([a["x"] for a in atoms], dtype=float).reshape(-1, dim)
            lam = np.array([a["intensity"] for a in atoms], dtype=float)
            parts.append(FiniteAtoms(pts, lam))
        elif kind == "gaussian_push":
            parts.append(
                GaussianPush(
                    float(_require(entry, "lambda", f"jumps[{k}]")),
                    np.asarray(_require(entry, "mean", f"jumps[{k}]"), dtype=float),
                    np.asarray(_require(entry, "cov", f"jumps[{k}]"), dtype=float),
                )
            )
        else:
            raise ModelFormatError(f"unknown jump measure kind {kind!r}")
    if not parts:
        return empty_measure(dim)
    if len(parts) == 1:
        return parts[0]
    return SumMeasure(tuple(parts))


def parse_model(doc: dict) -> AnyModel:
    """Build a model object from a parsed JSON document."""
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    kind = _require(doc, "type", "model")
    try:
        if kind == "levy":
            dim = int(_require(doc, "dim", "levy model"))
            trunc = TruncationSpec.from_names(_require(doc, "truncation", "levy model"))
            return LevyTriplet(
                dim,
                np.asarray(_require(doc, "b", "levy model"), dtype=float),
                np.asarray(_require(doc, "c", "levy model"), dtype=float),
                _parse_measure(doc.get("jumps"), dim),
                trunc,
            )
        if kind == "discrete":
            support = _require(doc, "support", "discrete model")
            pts = np.array([s["x"] for s in support], dtype=float)
            p = np.array([s["p"] for s in support], dtype=float)
            return DiscreteModel(pts, p)
        if kind == "margrabe":
            diff = _require(doc, "diffusion", "margrabe model")
            jump = doc.get("jump") or {}
            defaults = tuple(
                (tuple(a["x"]), float(a["intensity"])) for a in doc.get("defaults", [])
            )
            return MargrabeModel(
                spot1=float(_require(doc, "spot1", "margrabe model")),
                spot2=float(_require(doc, "spot2", "margrabe model")),
                maturity=float(_require(doc, "maturity", "margrabe model")),
                sigma1_sq=float(_require(diff, "sigma1_sq", "diffusion")),
                sigma12=float(_require(diff, "sigma12", "diffusion")),
                sigma2_sq=float(_require(diff, "sigma2_sq", "diffusion")),
                jump_intensity=float(jump.get("lambda", 0.0)),
                jump_mean=tuple(jump.get("mean", (0.0, 0.0))),
                jump_cov=tuple(map(tuple, jump.get("cov", ((0.0, 0.0), (0.0, 0.0))))),
                default_atoms=defaults,
            )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed {kind} model: {exc}") from exc
    raise ModelFormatError(f"unknown model type {kind!r}")


def _serialise_measure(measure: JumpMeasure) -> list:
    if isinstance(measure, FiniteAtoms):
        if measure.points.shape[0] == 0:
            return []
        return [
            {
                "kind": "atoms",
                "atoms": [
                    {"x": measure.points[k].tolist(), "intensity": float(measure.intensities[k])}
                    for k in range(measure.points.shape[0])
                ],
            }
        ]
    if isinstance(measure, GaussianPush):
        return [
            {
                "kind": "gaussian_push",
                "lambda": measure.intensity,
                "mean": measure.mean.tolist(),
                "cov": measure.cov.tolist(),
            }
        ]
    if isinstance(measure, SumMeasure):
        out = []
        for p in measure.parts:
            out.extend(_serialise_measure(p))
        return out
    raise ModelFormatError(f"cannot serialise measure of type {type(measure).__name__}")


def serialize_model(model: AnyModel) -> dict:
    """Render a model object back to its JSON document."""
    if isinstance(model, LevyTriplet):
        return {
            "type": "levy",
            "dim": model.dim,
            "b": model.b.tolist(),
            "c": model.c.tolist(),
            "truncation": model.truncation.names(),
            "jumps": _serialise_measure(model.jumps),
        }
    if isinstance(model, DiscreteModel):
        return {
            "type": "discrete",
            "support": [
                {"x": model.points[k].tolist(), "p": float(model.probabilities[k])}
                for k in range(model.size)
            ],
        }
    if isinstance(model, MargrabeModel):
        return {
            "type": "margrabe",
            "spot1": model.spot1,
            "spot2": model.spot2,
            "maturity": model.maturity,
            "diffusion": {
                "sigma1_sq": model.sigma1_sq,
                "sigma12": model.sigma12,
                "sigma2_sq": model.sigma2_sq,
            },
            "jump": {
                "lambda": model.jump_intensity,
                "mean": list(model.jump_mean),
                "cov": [list(row) for row in model.jump_cov],
            },
            "defaults": [
                {"x": list(x), "intensity": lam} for x, lam in model.default_atoms
            ],
        }
    raise ModelFormatError(f"cannot serialise model of type {type(model).__name__}")


def load_model(path: str) -> AnyModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ModelFormatError(f"model file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"invalid JSON in {path} at line {exc.lineno}: {exc.msg}")
    return parse_model(doc)


def parse_grid(doc: dict) -> np.ndarray:
    """Build a complex grid from {"re": {...}, "im": {...}} axis specs.

    Each axis is {"start": a, "stop": b, "count": n} or a bare number for a
    constant axis; the grid is the cross product, flattened row-major.
    """
    if not isinstance(doc, dict):
        raise ModelFormatError("grid must be a JSON object with 're' and/or 'im' axes")

    def axis(spec, name):
        if spec is None:
            return np.array([0.0])
        if isinstance(spec, (int, float)):
            return np.array([float(spec)])
        if isinstance(spec, dict):
            start = float(_require(spec, "start", f"{name} axis"))
            stop = float(_require(spec, "stop", f"{name} axis"))
            count = int(_require(spec, "count", f"{name} axis"))
            if count < 1:
                raise ModelFormatError("axis count must be at least 1")
            return np.linspace(start, stop, count)
        raise ModelFormatError(f"malformed {name} axis {spec!r}")

    re = axis(doc.get("re"), "re")
    im = axis(doc.get("im"), "im")
    return (re[:, None] + 1j * im[None, :]).ravel()
