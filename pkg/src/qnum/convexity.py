"""Convexity certificates for per-route objective terms.

A route's term ``-y_i - ln f_i(u_i(y))`` is certified convex in one of three
ways:

* ``Cond12``: the zero threshold of ``f`` is at least 1/2 (so ``u_i(y)`` is
  concave) and ``v(u) = u F''/(u F'' + F') + 1/u <= 2`` beyond the inflection
  point of ``F = ln f``.
* ``PreservedConvex``: the term is already convex in the rates ``x`` and the
  exponential change of variable keeps it so (negativity).
* ``RestrictedDomain``: convex once the end-to-end Werner parameter is kept
  above a cutoff (teleportation success, cutoff 1/2).

Everything else is ``Uncertified``; those scenarios are still solved, with
multistart.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from qnum.measures import (
    INFLECTION_DELTA,
    MeasureModel,
    NonUniqueInflectionError,
)
from qnum.network import DomainError

COND1_MIN_THRESHOLD = 0.5
COND2_PASS = -1e-9
COND2_GRID = 100_000
SUCC_CUTOFF = 0.5


class CertificateClass(str, enum.Enum):
    COND12 = "Cond12"
    PRESERVED_CONVEX = "PreservedConvex"
    RESTRICTED_DOMAIN = "RestrictedDomain"
    UNCERTIFIED = "Uncertified"

    def __str__(self):
        return self.value

    @property
    def certified(self) -> bool:
        return self is not CertificateClass.UNCERTIFIED


# strongest first; a scenario reports its weakest route
_STRENGTH = [
    CertificateClass.COND12,
    CertificateClass.PRESERVED_CONVEX,
    CertificateClass.RESTRICTED_DOMAIN,
    CertificateClass.UNCERTIFIED,
]


@dataclass(frozen=True)
class Cond2Report:
    min_g: float
    argmin_u: float
    grid_points: int
    failure_u: float | None = None
    vacuous: bool = False

    @property
    def passed(self) -> bool:
        return self.failure_u is None and self.min_g >= COND2_PASS

    def to_dict(self) -> dict:
        return {
            "min_g": self.min_g,
            "argmin": self.argmin_u,
            "grid_points": self.grid_points,
            "passed": self.passed,
            "vacuous": self.vacuous,
            "failure_u": self.failure_u,
        }


@dataclass(frozen=True)
class ConvexityCertificate:
    cls: CertificateClass
    cond1_pass: bool
    cond2_report: Cond2Report | None = None
    restricted_cutoff: float | None = None
    zero_threshold: float = 0.0
    inflection: float | None = None
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.cls is CertificateClass.COND12:
            assert self.cond1_pass and self.cond2_report is not None and self.cond2_report.passed
        if self.cls is CertificateClass.RESTRICTED_DOMAIN:
            assert self.restricted_cutoff is not None and self.restricted_cutoff >= 0.5

    @property
    def threshold(self) -> float:
        """Lower bound on the end-to-end Werner parameter used for feasibility."""
        if self.restricted_cutoff is not None:
            return self.restricted_cutoff
        return self.zero_threshold

    def to_dict(self) -> dict:
        return {
            "c": self.zero_threshold,
            "c1": self.inflection,
            "cond1": self.cond1_pass,
            "cond2": None if self.cond2_report is None else self.cond2_report.to_dict(),
            "certificate": self.cls.value,
            "restricted_cutoff": self.restricted_cutoff,
            "notes": list(self.notes),
        }


def weakest(classes: Sequence[CertificateClass]) -> CertificateClass:
    return max(classes, key=_STRENGTH.index)


def check_cond1(m: MeasureModel) -> bool:
    return m.zero_threshold >= COND1_MIN_THRESHOLD


def cond2_margin(m: MeasureModel, u) -> np.ndarray:
    """``g(u) = 2 - u F''/(u F'' + F') - 1/u``; Cond. 2 holds where ``g >= 0``."""
    u = np.asarray(u, dtype=float)
    f = m.value(u)
    f1 = m.d1(u)
    f2 = m.d2(u)
    F1 = f1 / f
    F2 = (f2 * f - f1 * f1) / (f * f)
    return 2.0 - u * F2 / (u * F2 + F1) - 1.0 / u


def _cond2_denominator(m: MeasureModel, u: np.ndarray) -> np.ndarray:
    f = m.value(u)
    f1 = m.d1(u)
    f2 = m.d2(u)
    return u * (f2 * f - f1 * f1) / (f * f) + f1 / f


def _cond2_mesh(lo: float, hi: float, grid: int) -> np.ndarray:
    # uniform half plus a half clustered geometrically towards u = 1
    n_lin = grid // 2
    n_geo = grid - n_lin
    lin = np.linspace(lo, hi, n_lin)
    geo = 1.0 - np.geomspace(1.0 - lo, 1.0 - hi, n_geo)
    return np.unique(np.clip(np.concatenate([lin, geo]), lo, hi))


def check_cond2(m: MeasureModel, grid: int = COND2_GRID) -> Cond2Report:
    """Scan ``g`` on ``(c1, 1)`` and refine around its minimum.

    Measures whose ``ln f`` is concave on all of ``(c, 1)`` pass vacuously.
    """
    c1 = m.inflection
    lo_base = c1
    if c1 is None:
        c = m.zero_threshold
        probe = np.linspace(c + 1e-6, 1 - 1e-6, 101)
        if np.all(_log_curvature_sign(m, probe) <= 0):
            return Cond2Report(min_g=np.inf, argmin_u=np.nan, grid_points=0, vacuous=True)
        lo_base = c
    lo, hi = lo_base + INFLECTION_DELTA, 1.0 - INFLECTION_DELTA
    u = _cond2_mesh(lo, hi, grid)
    den = _cond2_denominator(m, u)
    bad = np.flatnonzero(~(den > 0))
    if len(bad):
        k = bad[0]
        return Cond2Report(min_g=-np.inf, argmin_u=float(u[k]), grid_points=len(u), failure_u=float(u[k]))
    g = cond2_margin(m, u)
    k = int(np.argmin(g))
    best_g, best_u = float(g[k]), float(u[k])
    a, b = float(u[max(k - 1, 0)]), float(u[min(k + 1, len(u) - 1)])
    if b > a:
        res = minimize_scalar(lambda z: float(cond2_margin(m, z)), bounds=(a, b), method="bounded",
                              options={"xatol": 1e-13})
        if res.success and res.fun < best_g:
            best_g, best_u = float(res.fun), float(res.x)
    return Cond2Report(min_g=best_g, argmin_u=best_u, grid_points=len(u))


def _log_curvature_sign(m: MeasureModel, u: np.ndarray) -> np.ndarray:
    """Sign of ``F''`` on ``u``."""
    f = m.value(u)
    f1 = m.d1(u)
    f2 = m.d2(u)
    return np.sign((f2 * f - f1 * f1) / (f * f))


@lru_cache(maxsize=None)
def certify(m: MeasureModel, grid: int = COND2_GRID) -> ConvexityCertificate:
    c = m.zero_threshold
    if m.builtin:
        cond1 = check_cond1(m)
        if m.id in ("sk", "de"):
            return ConvexityCertificate(
                CertificateClass.COND12, cond1, check_cond2(m, grid),
                zero_threshold=c, inflection=m.inflection,
            )
        if m.id == "neg":
            return ConvexityCertificate(
                CertificateClass.PRESERVED_CONVEX, cond1, None,
                zero_threshold=c, inflection=m.inflection,
            )
        if m.id == "succ":
            return ConvexityCertificate(
                CertificateClass.RESTRICTED_DOMAIN, cond1, None, restricted_cutoff=SUCC_CUTOFF,
                zero_threshold=c, inflection=m.inflection,
                notes=("f(0) != 0; Werner parameter restricted to (1/2, 1]",),
            )

    notes = []
    if not m.satisfies_f0_zero:
        notes.append("f(0) != 0")
    try:
        c1 = m.inflection
    except NonUniqueInflectionError as exc:
        return ConvexityCertificate(CertificateClass.UNCERTIFIED, check_cond1(m), zero_threshold=c,
                                    notes=(*notes, str(exc)))
    cond1 = check_cond1(m)
    report = check_cond2(m, grid)
    if not cond1:
        notes.append(f"zero threshold {c:.6g} < 1/2")
    if not report.passed:
        notes.append(f"Cond. 2 fails: min g = {report.min_g:.3g} at u = {report.argmin_u:.6g}")
    cls = CertificateClass.COND12 if cond1 and report.passed and m.satisfies_f0_zero else CertificateClass.UNCERTIFIED
    return ConvexityCertificate(cls, cond1, report, zero_threshold=c, inflection=c1, notes=tuple(notes))


def certify_scenario(measures: Sequence[MeasureModel]) -> CertificateClass:
    return weakest([certify(m).cls for m in measures])


def lemma_sup_bound(n: int, t: float, beta: float | None = None) -> float:
    """Supremum of ``sum_{k<n} 1/b_k`` over ``0 < b < 1`` with ``prod b >= t``.

    With ``beta`` given, the supremum of ``beta/b_1 + sum_{k>=2} 1/b_k`` over
    ``prod b = t`` instead.
    """
    if int(n) != n or n < 2:
        raise DomainError(f"n must be an integer >= 2, got {n}")
    if not 0.0 < t < 1.0:
        raise DomainError(f"t must lie in (0, 1), got {t}")
    if beta is None:
        return n - 2 + 1.0 / t
    if not 0.0 < beta < 1.0:
        raise DomainError(f"beta must lie in (0, 1), got {beta}")
    return n - 2 + beta + 1.0 / t


@dataclass(frozen=True)
class PsdProbe:
    min_eigenvalue_estimate: float
    gershgorin_bound: float
    route_gershgorin: tuple[float, ...]
    route_min_eigenvalues: tuple[float, ...]


def gershgorin_lower_bound(h: np.ndarray) -> float:
    h = np.asarray(h, dtype=float)
    off = np.abs(h).sum(axis=1) - np.abs(np.diag(h))
    return float(np.min(np.diag(h) - off))


def hessian_psd_probe(network, measures, y) -> PsdProbe:
    """Exact smallest eigenvalue of the objective Hessian plus Gershgorin bounds.

    The combined bound sums the per-route bounds, which by Weyl's inequality
    never exceeds the smallest eigenvalue of the sum.
    """
    from qnum import reformulation as rf

    measures = rf.resolve_measures(network, measures)
    y = np.asarray(y, dtype=float)
    report = rf.feasibility(network, measures, y)
    if not report.feasible:
        raise DomainError(f"probe point is infeasible: {report.describe()}")
    point = rf.eval_point(network, y)
    blocks = [-rf.route_log_hessian(network, measures, point, i) for i in range(network.n_routes)]
    total = rf.objective_hessian(network, measures, y)
    route_bounds = tuple(gershgorin_lower_bound(b) for b in blocks)
    route_eigs = tuple(float(np.linalg.eigvalsh(b)[0]) for b in blocks)
    return PsdProbe(
        min_eigenvalue_estimate=float(np.linalg.eigvalsh(total)[0]),
        gershgorin_bound=float(sum(route_bounds)),
        route_gershgorin=route_bounds,
        route_min_eigenvalues=route_eigs,
    )


CURVE_COLUMNS = ("u", "f", "F", "dF", "d2F", "g")


def measure_curves(m: MeasureModel, grid: int = 2001) -> dict[str, np.ndarray]:
    """``f``, ``ln f``, its derivatives and ``g`` on ``(c + 1e-6, 1 - 1e-6)``.

    ``g`` is NaN at and below the inflection point, and everywhere for
    measures without one.
    """
    if grid < 2:
        raise ValueError("grid must have at least 2 points")
    c = m.zero_threshold
    u = np.linspace(c + 1e-6, 1.0 - 1e-6, grid)
    f = m.value(u)
    f1 = m.d1(u)
    f2 = m.d2(u)
    F1 = f1 / f
    F2 = (f2 * f - f1 * f1) / (f * f)
    g = np.full_like(u, np.nan)
    c1 = m.inflection
    if c1 is not None:
        above = u > c1
        g[above] = cond2_margin(m, u[above])
    return {"u": u, "f": f, "F": np.log(f), "dF": F1, "d2F": F2, "g": g}
