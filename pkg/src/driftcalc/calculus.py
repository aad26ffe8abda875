"""Standard library of increment representations and the pushforward map.

Each builder turns a modelling intent (log return, ratio of two compounding
quantities, exponential of a scaled process, exchange-ratio payoff with
default handling, measure-change adjustment) into a validated expression
tree.  Smooth transformations are exposed only through these homogeneous
forms; path-state-dependent transformations are out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .models import (
    FiniteAtoms,
    GaussianPush,
    JumpMeasure,
    LevyTriplet,
    MappedMeasure,
    QuadratureConfig,
    SumMeasure,
    TruncationSpec,
    jump_drift_correction,
)
from .repfn import (
    Const,
    Coord,
    Div,
    Exp,
    Indicator,
    Log,
    Mul,
    Neg,
    PowConst,
    RepFn,
    parse_complex,
)

_ONE = Const(1.0)


def rep_identity(dim: int) -> RepFn:
    """The identity map x -> x."""
    return RepFn(dim, tuple(Coord(i) for i in range(dim)))


def rep_coord(dim: int, index: int) -> RepFn:
    """Projection x -> x_i."""
    return RepFn(dim, (Coord(index),))


def rep_zero(dim: int) -> RepFn:
    """The zero function (no measure change, null integrand)."""
    return RepFn(dim, (Const(0.0),))


def rep_ratio() -> RepFn:
    """Relative change of a ratio: (1+x1)/(1+x2) - 1.

    If the numerator quantity jumps by 50% and the denominator by 20%, their
    ratio jumps by exactly (1.5/1.2) - 1 = 25%.
    """
    return RepFn(2, (Div(_ONE + Coord(0), _ONE + Coord(1)) - _ONE,))


def rep_log_return() -> RepFn:
    """Log of the compounding factor: log(1+x), undefined for x <= -1."""
    return RepFn(1, (Log(_ONE + Coord(0)),))


def rep_exp_affine(v) -> RepFn:
    """Relative change of e^{v X}: e^{v x} - 1."""
    return RepFn(1, (Exp(Const(v) * Coord(0)) - _ONE,))


def rep_power(v) -> RepFn:
    """Relative change of Y^v for positive Y: (1+x)^v - 1, principal branch."""
    return RepFn(1, (PowConst(v, _ONE + Coord(0)) - _ONE,))


def rep_exp_utility(lam: float) -> RepFn:
    """Relative change of exp(-lam * cumulative yield): e^{-lam(e^x - 1)} - 1."""
    inner = Neg(Const(lam) * (Exp(Coord(0)) - _ONE))
    return RepFn(1, (Exp(inner) - _ONE,))


def rep_memm_integrand(v, lam_star: float) -> RepFn:
    """(e^{v x} - 1) e^{-lam*(e^x - 1)}: the measure-changed exponential kernel."""
    left = Exp(Const(v) * Coord(0)) - _ONE
    right = Exp(Neg(Const(lam_star) * (Exp(Coord(0)) - _ONE)))
    return RepFn(1, (Mul(left, right),))


def rep_margrabe(v) -> RepFn:
    """Exchange-ratio transformation with default handling.

    psi(x1, x2) = (1+x1) * (1{x2 != -1} * ((1 + 1{x2 != -1} x2)
                  / (1 + 1{x1 != -1} x1))^v - 1).

    Indicator factors route the power around the default atoms at -1, so the
    function stays finite when either asset is wiped out.
    """
    alive1 = Indicator("ne", -1.0, Coord(0))
    alive2 = Indicator("ne", -1.0, Coord(1))
    base = Div(_ONE + Mul(alive2, Coord(1)), _ONE + Mul(alive1, Coord(0)))
    body = Mul(alive2, PowConst(v, base)) - _ONE
    return RepFn(2, (Mul(_ONE + Coord(0), body),))


def girsanov_adjust(xi: RepFn, eta: RepFn) -> RepFn:
    """Return (1 + eta(x)) * xi(x) componentwise.

    Converting a drift under the measure generated by eta into a drift under
    the original measure amounts to computing the drift of this adjusted
    function.  The caller is responsible for eta >= -1 on the support.
    """
    if eta.output_dim != 1:
        raise ValueError("the measure-change representation must be scalar-valued")
    if eta.input_dim != xi.input_dim:
        raise ValueError(
            f"dimension mismatch: xi takes {xi.input_dim} inputs, eta takes {eta.input_dim}"
        )
    weight = _ONE + eta.outputs[0]
    return RepFn(xi.input_dim, tuple(Mul(weight, root) for root in xi.outputs))


def _is_identity(f: RepFn) -> bool:
    return all(isinstance(root, Coord) and root.index == k for k, root in enumerate(f.outputs))


def _map_measure(measure: JumpMeasure, f: RepFn) -> JumpMeasure:
    if isinstance(measure, FiniteAtoms):
        if measure.points.shape[0] == 0:
            return FiniteAtoms(np.zeros((0, f.output_dim)), np.zeros(0))
        vals = f.eval_batch(measure.points.astype(np.complex128))
        if np.any(np.abs(vals.imag) > 1e-9 * (1.0 + np.abs(vals.real))):
            raise ValueError("representation is not real-valued on the atom support")
        if np.any(~np.isfinite(vals.real)):
            raise ValueError("representation is undefined at an atom of the jump measure")
        pts = vals.real
        # Coinciding images are merged: the image measure genuinely carries
        # their summed intensity.
        merged_pts, merged_lam = [], []
        for k in range(pts.shape[0]):
            for i, q in enumerate(merged_pts):
                if np.max(np.abs(pts[k] - q)) < 1e-12:
                    merged_lam[i] += measure.intensities[k]
                    break
            else:
                merged_pts.append(pts[k])
                merged_lam.append(float(measure.intensities[k]))
        return FiniteAtoms(np.asarray(merged_pts), np.asarray(merged_lam))
    if isinstance(measure, SumMeasure):
        return SumMeasure(tuple(_map_measure(p, f) for p in measure.parts))
    if isinstance(measure, (GaussianPush, MappedMeasure)):
        return MappedMeasure(measure, f)
    raise TypeError(f"cannot map measure of type {type(measure).__name__}")


def pushforward_characteristics(
    xi: RepFn,
    t: LevyTriplet,
    g: TruncationSpec,
    quad: Optional[QuadratureConfig] = None,
) -> LevyTriplet:
    """Characteristics of the represented process Y with increments xi(dX).

    The diffusion matrix transforms by congruence with the Jacobian at zero,
    the jump measure is the image of the input measure under xi, and the
    drift (relative to the requested truncation ``g`` for Y) adds the jump
    correction integral.
    """
    if xi.input_dim != t.dim:
        raise ValueError(f"representation expects dimension {xi.input_dim}, triplet has {t.dim}")
    if g.dim != xi.output_dim:
        raise ValueError(f"output truncation has dimension {g.dim}, expected {xi.output_dim}")
    if _is_identity(xi) and g == t.truncation:
        return t

    jet = xi.jet_at_zero()
    J, H = jet.jacobian, jet.hessian
    c_y = np.real(J) @ t.c @ np.real(J).T

    def truncated_values(X):
        vals = xi.eval_batch(X)
        if np.any(np.abs(vals.imag) > 1e-9 * (1.0 + np.abs(vals.real))):
            raise ValueError("representation is not real-valued on the jump support")
        return g.apply(vals.real).astype(np.complex128)

    correction, _err = jump_drift_correction(t.jumps, truncated_values, J, t.truncation, quad)
    b_y = np.real(J) @ t.b + 0.5 * np.real(np.einsum("nij,ij->n", H, t.c)) + correction.real
    return LevyTriplet(xi.output_dim, b_y, c_y, _map_measure(t.jumps, xi), g)


def atom_mass_in_boxes(measure: FiniteAtoms, boxes) -> float:
    """Total intensity of atoms inside a finite union of closed axis boxes.

    ``boxes`` is an iterable of (lo, hi) vector pairs; used for counting
    queries against image measures.
    """
    total = 0.0
    for k in range(measure.points.shape[0]):
        x = measure.points[k]
        for lo, hi in boxes:
            lo = np.asarray(lo, dtype=float)
            hi = np.asarray(hi, dtype=float)
            if np.all(x >= lo) and np.all(x <= hi):
                total += float(measure.intensities[k])
                break
    return total


# ---------------------------------------------------------------------------
# the named catalog, addressable from model files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StdRep:
    """A catalog entry: name, parameters, the resulting function, and a
    short derivation note."""

    name: str
    params: dict
    fn: RepFn
    note: str


def _param(params: dict, key: str, kind: str):
    if key not in params:
        raise ValueError(f"missing parameter {key!r}")
    value = params[key]
    if kind == "complex":
        return parse_complex(value) if isinstance(value, str) else complex(value)
    if kind == "real":
        return float(value)
    if kind == "int":
        return int(value)
    raise ValueError(kind)


def build_catalog_fn(name: str, params: Optional[dict] = None) -> StdRep:
    """Instantiate a catalog representation by string key.

    Known names: identity, coord, zero, ratio, log_return, exp_affine,
    power, exp_utility, memm_integrand, margrabe.
    """
    params = dict(params or {})
    if name == "identity":
        dim = _param(params, "dim", "int")
        return StdRep(name, params, rep_identity(dim), "componentwise identity")
    if name == "coord":
        dim = _param(params, "dim", "int")
        idx = _param(params, "index", "int")
        return StdRep(name, params, rep_coord(dim, idx), "coordinate projection")
    if name == "zero":
        dim = _param(params, "dim", "int")
        return StdRep(name, params, rep_zero(dim), "null transformation")
    if name == "ratio":
        return StdRep(name, params, rep_ratio(), "relative change of a ratio of two compounding quantities")
    if name == "log_return":
        return StdRep(name, params, rep_log_return(), "log of the compounding factor")
    if name == "exp_affine":
        v = _param(params, "v", "complex")
        return StdRep(name, params, rep_exp_affine(v), "relative change of a scaled exponential")
    if name == "power":
        v = _param(params, "v", "complex")
        return StdRep(name, params, rep_power(v), "relative change of a power transform")
    if name == "exp_utility":
        lam = _param(params, "lambda", "real")
        return StdRep(name, params, rep_exp_utility(lam), "relative change of exponential utility of yield")
    if name == "memm_integrand":
        v = _param(params, "v", "complex")
        lam = _param(params, "lambda_star", "real")
        return StdRep(name, params, rep_memm_integrand(v, lam), "measure-changed exponential kernel")
    if name == "margrabe":
        v = _param(params, "v", "complex")
        return StdRep(name, params, rep_margrabe(v), "exchange-ratio transform with default handling")
    raise ValueError(f"unknown catalog function {name!r}")


CATALOG_NAMES = (
    "identity",
    "coord",
    "zero",
    "ratio",
    "log_return",
    "exp_affine",
    "power",
    "exp_utility",
    "memm_integrand",
    "margrabe",
)
