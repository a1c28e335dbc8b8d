"""Entanglement measures of Werner states and their log-derivatives.

Every measure maps a Werner parameter ``omega`` in [0, 1] to a non-negative
quality score. The optimiser works with ``F = ln f`` so each measure also
exposes ``F'`` and ``F''`` on the branch where ``f > 0``. The measures use
base-2 logarithms internally, while ``F`` always uses the natural log.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import xlogy

from qnum.network import DomainError, ValidationError

LN2 = np.log(2.0)
LOG2E = 1.0 / LN2

# largest omega fed to derivative closed forms (f'_sk diverges at 1)
OMEGA_CLAMP = 1.0 - 1e-12

ZERO_TOL = 1e-10
INFLECTION_TOL = 1e-10
INFLECTION_DELTA = 1e-9
INFLECTION_GRID = 100_000

ScalarFn = Callable[[np.ndarray], np.ndarray]


class DegenerateMeasureError(ValueError):
    pass


class NonUniqueInflectionError(ValueError):
    def __init__(self, measure_id: str, locations: np.ndarray):
        self.locations = np.asarray(locations)
        shown = ", ".join(f"{u:.6g}" for u in self.locations[:5])
        super().__init__(f"measure {measure_id!r}: ln f changes curvature {len(self.locations)} times (near {shown})")


@dataclass(frozen=True, eq=False)
class MeasureModel:
    """An entanglement measure with closed-form first and second derivatives.

    ``value`` must already include the ``max(0, .)`` clipping. ``d1`` and
    ``d2`` are the derivatives of the positive branch and may be evaluated
    anywhere in ``[0, 1)``.
    """

    id: str
    value: ScalarFn
    d1: ScalarFn
    d2: ScalarFn
    upper_bound: float = 1.0
    satisfies_f0_zero: bool = True
    builtin: bool = False
    description: str = ""

    @cached_property
    def zero_threshold(self) -> float:
        return zero_threshold(self)

    @cached_property
    def inflection(self) -> float | None:
        return inflection_point(self)

    def __repr__(self):
        return f"MeasureModel({self.id!r})"


def _check_omega(omega):
    arr = np.asarray(omega, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError(f"Werner parameter must lie in [0, 1], got {omega}")
    return arr


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


# ---------------------------------------------------------------------------
# closed forms


def _sk_value(w):
    w = np.asarray(w, dtype=float)
    raw = 1.0 + (xlogy(1.0 + w, (1.0 + w) / 2.0) + xlogy(1.0 - w, (1.0 - w) / 2.0)) / LN2
    return np.maximum(0.0, raw)


def _sk_d1(w):
    w = np.minimum(np.asarray(w, dtype=float), OMEGA_CLAMP)
    return np.log2((1.0 + w) / (1.0 - w))


def _sk_d2(w):
    w = np.minimum(np.asarray(w, dtype=float), OMEGA_CLAMP)
    return 2.0 * LOG2E / (1.0 - w * w)


def _de_value(w):
    w = np.asarray(w, dtype=float)
    p = (1.0 + 3.0 * w) / 4.0
    q = 3.0 * (1.0 - w) / 4.0
    raw = 1.0 + (xlogy(p, p) + xlogy(q, (1.0 - w) / 4.0)) / LN2
    return np.maximum(0.0, raw)


def _de_d1(w):
    w = np.minimum(np.asarray(w, dtype=float), OMEGA_CLAMP)
    return 0.75 * np.log2((1.0 + 3.0 * w) / (1.0 - w))


def _de_d2(w):
    w = np.minimum(np.asarray(w, dtype=float), OMEGA_CLAMP)
    return 3.0 * LOG2E / (-3.0 * w * w + 2.0 * w + 1.0)


def _neg_value(w):
    return np.maximum(0.0, (3.0 * np.asarray(w, dtype=float) - 1.0) / 4.0)


def _succ_value(w):
    return (1.0 + np.asarray(w, dtype=float)) / 2.0


def _const(c):
    return lambda w: np.full(np.shape(w), c, dtype=float)


SECRET_KEY = MeasureModel(
    "sk", _sk_value, _sk_d1, _sk_d2, builtin=True,
    description="secret key fraction",
)
DISTILLABLE = MeasureModel(
    "de", _de_value, _de_d1, _de_d2, builtin=True,
    description="hashing lower bound on distillable entanglement",
)
NEGATIVITY = MeasureModel(
    "neg", _neg_value, _const(0.75), _const(0.0), upper_bound=0.5, builtin=True,
    description="negativity",
)
TELEPORTATION = MeasureModel(
    "succ", _succ_value, _const(0.5), _const(0.0), satisfies_f0_zero=False, builtin=True,
    description="teleportation success probability",
)

BUILTIN_MEASURES = {m.id: m for m in (SECRET_KEY, DISTILLABLE, NEGATIVITY, TELEPORTATION)}
_registry: dict[str, MeasureModel] = dict(BUILTIN_MEASURES)


def register_measure(measure: MeasureModel, *, replace: bool = False) -> MeasureModel:
    if measure.id in BUILTIN_MEASURES:
        raise ValidationError(f"cannot replace builtin measure {measure.id!r}", [measure.id])
    if measure.id in _registry and not replace:
        raise ValidationError(f"measure {measure.id!r} is already registered", [measure.id])
    _registry[measure.id] = measure
    return measure


def unregister_measure(measure_id: str) -> None:
    if measure_id not in BUILTIN_MEASURES:
        _registry.pop(measure_id, None)


def get_measure(measure_id: str) -> MeasureModel:
    try:
        return _registry[measure_id]
    except KeyError:
        known = ", ".join(sorted(_registry))
        raise ValidationError(f"unknown measure {measure_id!r} (known: {known})", [measure_id]) from None


def available_measures() -> list[str]:
    return sorted(_registry)


def tabulated_measure(measure_id: str, omega, values, *, satisfies_f0_zero: bool = True) -> MeasureModel:
    """Custom measure interpolated from samples by a monotone cubic (PCHIP).

    Samples must span [0, 1]; the spline is clipped at zero.
    """
    omega = np.asarray(omega, dtype=float)
    values = np.asarray(values, dtype=float)
    if omega.ndim != 1 or omega.shape != values.shape or len(omega) < 4:
        raise ValidationError(f"measure {measure_id!r}: need >= 4 matching (omega, f) samples", [measure_id])
    if np.any(np.diff(omega) <= 0) or omega[0] > 0 or omega[-1] < 1:
        raise ValidationError(f"measure {measure_id!r}: omega samples must increase strictly over [0, 1]", [measure_id])
    spline = PchipInterpolator(omega, values)
    d1 = spline.derivative(1)
    d2 = spline.derivative(2)
    return MeasureModel(
        measure_id,
        value=lambda w: np.maximum(0.0, spline(np.asarray(w, dtype=float))),
        d1=lambda w: d1(np.asarray(w, dtype=float)),
        d2=lambda w: d2(np.asarray(w, dtype=float)),
        upper_bound=float(max(values[-1], 0.0)),
        satisfies_f0_zero=satisfies_f0_zero,
        description="tabulated",
    )


# ---------------------------------------------------------------------------
# evaluation


def measure_value(m: MeasureModel, omega):
    return _scalar(m.value(_check_omega(omega)))


def _check_branch(m: MeasureModel, w):
    if np.any(w >= 1.0):
        raise DomainError(f"{m.id}: derivatives are not defined at omega = 1")
    c = m.zero_threshold
    if m.satisfies_f0_zero and np.any(w <= c):
        raise DomainError(f"{m.id}: derivatives taken on the positive branch need omega > {c:.6g}")


def measure_d1(m: MeasureModel, omega, *, check_branch: bool = True):
    """First derivative of the positive branch.

    With ``check_branch=False`` the closed form is evaluated anywhere in [0, 1).
    """
    w = _check_omega(omega)
    if check_branch:
        _check_branch(m, w)
    return _scalar(m.d1(w))


def measure_d2(m: MeasureModel, omega, *, check_branch: bool = True):
    w = _check_omega(omega)
    if check_branch:
        _check_branch(m, w)
    return _scalar(m.d2(w))


def _log_parts(m: MeasureModel, omega):
    w = _check_omega(omega)
    f = m.value(w)
    if np.any(f <= 0.0):
        raise DomainError(f"{m.id}: ln f undefined where f = 0 (omega = {omega})")
    wc = np.minimum(w, OMEGA_CLAMP)
    return f, m.d1(wc), m.d2(wc)


def log_measure(m: MeasureModel, omega):
    f, _, _ = _log_parts(m, omega)
    return _scalar(np.log(f))


def log_measure_d1(m: MeasureModel, omega):
    f, f1, _ = _log_parts(m, omega)
    return _scalar(f1 / f)


def log_measure_d2(m: MeasureModel, omega):
    f, f1, f2 = _log_parts(m, omega)
    return _scalar((f2 * f - f1 * f1) / (f * f))


def log_derivatives(m: MeasureModel, omega):
    """``(F, F', F'')`` in one pass; ``omega`` must have ``f(omega) > 0``."""
    f, f1, f2 = _log_parts(m, omega)
    return _scalar(np.log(f)), _scalar(f1 / f), _scalar((f2 * f - f1 * f1) / (f * f))


# ---------------------------------------------------------------------------
# thresholds


def _bisect(fn: Callable[[float], bool], lo: float, hi: float, tol: float) -> float:
    """Shrink ``[lo, hi]`` keeping ``fn(lo)`` false and ``fn(hi)`` true."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fn(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def zero_threshold(m: MeasureModel) -> float:
    """``sup{z : f(z) = 0}`` located by bisection."""
    f = lambda z: float(m.value(np.float64(z)))
    if f(1.0 - 1e-12) <= 0.0:
        raise DegenerateMeasureError(f"measure {m.id!r} vanishes up to omega = 1")
    if f(1e-12) > 0.0:
        return 0.0
    return _bisect(lambda z: f(z) > 0.0, 0.0, 1.0, ZERO_TOL)


def _log_d2_grid(m: MeasureModel, grid: np.ndarray) -> np.ndarray:
    f = m.value(grid)
    f1 = m.d1(grid)
    f2 = m.d2(grid)
    return (f2 * f - f1 * f1) / (f * f)


def inflection_point(m: MeasureModel, grid: int = INFLECTION_GRID) -> float | None:
    """Unique zero crossing of ``F''`` on ``(c, 1)``, or ``None`` if it keeps its sign."""
    c = m.zero_threshold
    lo, hi = c + INFLECTION_DELTA, 1.0 - INFLECTION_DELTA
    u = np.linspace(lo, hi, grid)
    s = np.sign(_log_d2_grid(m, u))
    nz = s != 0
    u, s = u[nz], s[nz]
    flips = np.flatnonzero(s[1:] != s[:-1])
    if len(flips) == 0:
        return None
    if len(flips) > 1:
        raise NonUniqueInflectionError(m.id, u[flips])
    k = flips[0]
    left_sign = s[k]
    d2 = lambda z: float(_log_d2_grid(m, np.float64(z)))
    return _bisect(lambda z: np.sign(d2(z)) != left_sign, float(u[k]), float(u[k + 1]), INFLECTION_TOL)


# ---------------------------------------------------------------------------
# Werner parameter conversions


def fidelity_from_werner(w):
    return _scalar((1.0 + 3.0 * _check_omega(w)) / 4.0)


def werner_from_fidelity(fidelity):
    fid = np.asarray(fidelity, dtype=float)
    if np.any(fid < 0.25) or np.any(fid > 1.0):
        raise DomainError(f"Werner-state fidelity must lie in [1/4, 1], got {fidelity}")
    return _scalar((4.0 * fid - 1.0) / 3.0)


def bright_state_population(w):
    return _scalar(3.0 * (1.0 - _check_omega(w)) / 4.0)
