"""Rate-only QNUM formulation in log-rate coordinates.

With ``x = exp(y)`` and each link's Werner parameter eliminated as
``w_j = 1 - <A_j, x>/d_j``, the problem becomes

    minimise  -sum_i (y_i + F_i(u_i(y))),   u_i = prod_j w_j ** a_ji

over ``y`` with ``w_j > 0`` and ``u_i`` above the route's threshold. This module
evaluates that objective together with its exact gradient and Hessian.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from qnum.convexity import certify
from qnum.measures import MeasureModel, get_measure
from qnum.network import DomainError, NetworkModel

BINDING_RTOL = 1e-6


def resolve_measures(network: NetworkModel, measures=None) -> list[MeasureModel]:
    """Per-route measure list.

    ``measures`` may be ``None`` (use each route's ``measure_id``), a mapping
    from measure id to model, a sequence aligned with the routes, or a single
    model applied to every route.
    """
    if measures is None:
        return [get_measure(mid) for mid in network.measure_ids]
    if isinstance(measures, MeasureModel):
        return [measures] * network.n_routes
    if isinstance(measures, Mapping):
        return [measures[mid] if mid in measures else get_measure(mid) for mid in network.measure_ids]
    measures = list(measures)
    if len(measures) != network.n_routes:
        raise ValueError(f"expected {network.n_routes} measures, got {len(measures)}")
    return [get_measure(m) if isinstance(m, str) else m for m in measures]


def route_thresholds(measures: Sequence[MeasureModel]) -> np.ndarray:
    return np.array([certify(m).threshold for m in measures])


@dataclass(frozen=True)
class EvalPoint:
    y: np.ndarray
    x: np.ndarray
    w: np.ndarray
    u: np.ndarray


def eval_point(network: NetworkModel, y) -> EvalPoint:
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape != (network.n_routes,):
        raise ValueError(f"expected {network.n_routes} log-rates, got shape {y.shape}")
    A = network.incidence
    # trial steps may overshoot to inf; callers reject non-finite points
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        x = np.exp(y)
        w = 1.0 - (A @ x) / network.d
        logw = np.log(w)
        # exp(sum a ln w) is exact for positive w; fall back to the plain product otherwise
        if np.all(w > 0):
            u = np.exp(A.T @ logw)
        else:
            u = np.prod(np.where(A.T > 0, w[None, :], 1.0), axis=1)
    return EvalPoint(y=y, x=x, w=w, u=u)


@dataclass
class FeasibilityReport:
    feasible: bool
    slacks: np.ndarray
    margins: np.ndarray
    thresholds: np.ndarray
    binding_links: list[int] = field(default_factory=list)
    binding_routes: list[int] = field(default_factory=list)
    violated_links: list[int] = field(default_factory=list)
    violated_routes: list[int] = field(default_factory=list)

    def describe(self, network: NetworkModel | None = None) -> str:
        lid = (lambda j: network.links[j].id) if network else str
        rid = (lambda i: network.routes[i].id) if network else str
        parts = [f"link {lid(j)} capacity exceeded (slack {self.slacks[j]:.3g})" for j in self.violated_links]
        parts += [
            f"route {rid(i)} Werner parameter not above {self.thresholds[i]:.6g} (margin {self.margins[i]:.3g})"
            for i in self.violated_routes
        ]
        return "; ".join(parts) if parts else "feasible"


def feasibility(network: NetworkModel, measures, y, margin: float = 0.0) -> FeasibilityReport:
    """Check ``w_j > 0`` (positive link slack) and ``u_i > threshold_i``.

    ``margin`` is relative for links (slack > margin * d_j) and absolute for
    routes.
    """
    measures = resolve_measures(network, measures)
    point = eval_point(network, y)
    d = network.d
    slacks = d - network.incidence @ point.x
    thresholds = route_thresholds(measures)
    margins = point.u - thresholds
    bad_links = np.flatnonzero(~(slacks > margin * d))
    bad_routes = np.flatnonzero(~(margins > margin))
    return FeasibilityReport(
        feasible=len(bad_links) == 0 and len(bad_routes) == 0,
        slacks=slacks,
        margins=margins,
        thresholds=thresholds,
        binding_links=[int(j) for j in np.flatnonzero(np.abs(slacks) < BINDING_RTOL * d)],
        binding_routes=[int(i) for i in np.flatnonzero(np.abs(margins) < BINDING_RTOL)],
        violated_links=[int(j) for j in bad_links],
        violated_routes=[int(i) for i in bad_routes],
    )


def _require_feasible(network, measures, y):
    report = feasibility(network, measures, y)
    if not report.feasible:
        raise DomainError(f"infeasible point: {report.describe(network)}")


# ---------------------------------------------------------------------------
# derivatives of w and u


def link_jacobian(network: NetworkModel, point: EvalPoint) -> np.ndarray:
    """``dw_j/dy_k = -a_jk x_k / d_j`` as an ``l x r`` matrix."""
    return -(network.incidence * point.x[None, :]) / network.d[:, None]


def _route_pieces(network: NetworkModel, point: EvalPoint, i: int):
    links = network.route_links(i)
    dw = link_jacobian(network, point)[links]  # n x r
    w = point.w[links]
    partial = point.u[i] / w  # product of the other links' w
    v = dw * partial[:, None]  # v_jk
    return links, dw, w, v


def u_gradient(network: NetworkModel, point: EvalPoint, i: int) -> np.ndarray:
    """``du_i/dy_k = sum_j v_jk`` with ``v_jk = -(a_jk x_k/d_j) prod_{j' != j} w_j'``."""
    _, _, _, v = _route_pieces(network, point, i)
    return v.sum(axis=0)


def u_jacobian(network: NetworkModel, point: EvalPoint) -> np.ndarray:
    """Rows are ``grad u_i``."""
    return np.array([u_gradient(network, point, i) for i in range(network.n_routes)])


def u_hessian(network: NetworkModel, point: EvalPoint, i: int) -> np.ndarray:
    """Hessian of ``u_i``.

    ``H_km = sum_j v_jk (delta_km + sum_{j'' != j} (dw_j''/dy_m) / w_j'')``.
    """
    _, dw, w, v = _route_pieces(network, point, i)
    scaled = dw / w[:, None]
    q = scaled.sum(axis=0)[None, :] - scaled  # row j excludes link j itself
    h = v.T @ q + np.diag(v.sum(axis=0))
    return 0.5 * (h + h.T)


def route_log_hessian(network: NetworkModel, measures: Sequence[MeasureModel], point: EvalPoint, i: int) -> np.ndarray:
    """``D^2 F = F''(u) grad u grad u^T + F'(u) H``."""
    m = measures[i]
    _, F1, F2 = _log_derivs(m, point.u[i])
    g = u_gradient(network, point, i)
    return F2 * np.outer(g, g) + F1 * u_hessian(network, point, i)


def _log_derivs(m: MeasureModel, u: float):
    uc = min(u, 1.0)
    f = float(m.value(uc))
    if not f > 0.0:
        raise DomainError(f"measure {m.id!r} vanishes at u = {u:.10g}")
    f1 = float(m.d1(min(uc, 1.0 - 1e-12)))
    f2 = float(m.d2(min(uc, 1.0 - 1e-12)))
    return np.log(f), f1 / f, (f2 * f - f1 * f1) / (f * f)


# ---------------------------------------------------------------------------
# objective


@dataclass
class ObjectiveEval:
    value: float
    gradient: np.ndarray | None
    hessian: np.ndarray | None
    per_route: list[dict]


def evaluate(network: NetworkModel, measures, y, *, order: int = 2, check: bool = True) -> ObjectiveEval:
    """Objective value and, up to ``order``, its gradient and Hessian."""
    measures = resolve_measures(network, measures)
    if check:
        _require_feasible(network, measures, y)
    point = eval_point(network, y)
    r = network.n_routes
    value = -float(point.y.sum())
    grad = -np.ones(r) if order >= 1 else None
    hess = np.zeros((r, r)) if order >= 2 else None
    per_route = []
    for i, m in enumerate(measures):
        F, F1, F2 = _log_derivs(m, point.u[i])
        value -= F
        per_route.append({"u": float(point.u[i]), "f": float(np.exp(F)), "F": float(F)})
        if order >= 1:
            g = u_gradient(network, point, i)
            grad -= F1 * g
            if order >= 2:
                hess -= F2 * np.outer(g, g) + F1 * u_hessian(network, point, i)
    if hess is not None:
        hess = 0.5 * (hess + hess.T)
    return ObjectiveEval(value=value, gradient=grad, hessian=hess, per_route=per_route)


def objective(network: NetworkModel, measures, y) -> float:
    return evaluate(network, measures, y, order=0).value


def objective_gradient(network: NetworkModel, measures, y) -> np.ndarray:
    return evaluate(network, measures, y, order=1).gradient


def objective_hessian(network: NetworkModel, measures, y) -> np.ndarray:
    return evaluate(network, measures, y, order=2).hessian


# ---------------------------------------------------------------------------
# the original (x, w) problem, kept for cross-checks


def reduce_w(network: NetworkModel, x) -> np.ndarray:
    """Largest link Werner parameters compatible with rates ``x``."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("rates must be strictly positive")
    load = network.incidence @ x
    over = np.flatnonzero(~(load < network.d))
    if len(over):
        names = [network.links[j].id for j in over]
        raise DomainError(f"capacity exceeded on links {names}")
    return 1.0 - load / network.d


def canonical_objective(network: NetworkModel, measures, x, w, *, rtol: float = 1e-12) -> float:
    """Network utility ``prod_i x_i f_i(prod_j w_j ** a_ji)``."""
    measures = resolve_measures(network, measures)
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("rates must be strictly positive")
    if np.any(~(w > 0)) or np.any(w > 1):
        raise DomainError("link Werner parameters must lie in (0, 1]")
    load = network.incidence @ x
    cap = network.d * (1.0 - w)
    over = np.flatnonzero(load > cap + rtol * network.d)
    if len(over):
        names = [network.links[j].id for j in over]
        raise DomainError(f"rate constraint violated on links {names}")
    u = np.prod(np.where(network.incidence.T > 0, w[None, :], 1.0), axis=1)
    f = np.array([float(m.value(ui)) for m, ui in zip(measures, u)])
    return float(np.prod(x * f))
