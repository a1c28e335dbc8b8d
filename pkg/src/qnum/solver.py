"""Log-barrier interior-point solver for the log-rate QNUM problem."""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field, fields
from typing import Any, Mapping

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import nnls

from qnum import reformulation as rf
from qnum.convexity import CertificateClass, certify, weakest
from qnum.measures import fidelity_from_werner
from qnum.network import DomainError, NetworkModel

logger = logging.getLogger(__name__)

# a constraint closer than this (relative) to activity counts as binding
ACTIVE_RTOL = 1e-6
# distance to a restricted-domain cutoff that triggers a warning
CUTOFF_WARN = 1e-3
ROUNDOFF_FACTOR = 16.0


class SolveStatus(str, enum.Enum):
    CONVERGED = "Converged"
    BOUNDARY_SUPREMUM = "BoundarySupremum"
    MAX_ITERATIONS = "MaxIterations"

    def __str__(self):
        return self.value


class SolverError(RuntimeError):
    def __init__(self, message: str, last_y: np.ndarray | None = None):
        super().__init__(message)
        self.last_y = last_y


class InfeasibleStartError(SolverError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-9
    newton_tol: float = 1e-10
    barrier_t0: float = 1.0
    barrier_mu: float = 10.0
    backtrack_alpha: float = 0.25
    backtrack_beta: float = 0.5
    max_outer: int = 60
    max_newton: int = 100
    feasibility_margin: float = 1e-12
    multistart_count: int = 8
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "seed":
                continue
            if not value > 0:
                raise ValueError(f"solver option {f.name} must be positive, got {value}")
        if not 0 < self.backtrack_alpha < 0.5:
            raise ValueError("backtrack_alpha must lie in (0, 0.5)")
        if not 0 < self.backtrack_beta < 1:
            raise ValueError("backtrack_beta must lie in (0, 1)")
        if self.barrier_mu <= 1:
            raise ValueError("barrier_mu must exceed 1")

    @classmethod
    def from_mapping(cls, options: Mapping[str, Any] | None, **overrides) -> "SolverConfig":
        known = {f.name: f.type for f in fields(cls)}
        merged = dict(options or {})
        merged.update({k: v for k, v in overrides.items() if v is not None})
        unknown = sorted(set(merged) - set(known))
        if unknown:
            raise ValueError(f"unknown solver options: {unknown}")
        cast = {k: (int(v) if known[k] == "int" else float(v)) for k, v in merged.items()}
        return cls(**cast)


@dataclass
class SolveResult:
    y: np.ndarray
    x: np.ndarray
    w: np.ndarray
    u: np.ndarray
    fidelity: np.ndarray
    measure_values: np.ndarray
    route_utility: np.ndarray
    network_utility: float
    objective: float
    certificate: CertificateClass
    status: SolveStatus
    outer_stages: int = 0
    newton_iters: int = 0
    final_gradient_norm: float = float("nan")
    boundary_warnings: list[str] = field(default_factory=list)
    certified: bool = True
    runtime_s: float = 0.0
    start_index: int = 0

    @property
    def log_utility(self) -> float:
        return -self.objective

    @property
    def diagnostics(self) -> dict:
        return {
            "outer_stages": self.outer_stages,
            "newton_iters": self.newton_iters,
            "final_gradient_norm": self.final_gradient_norm,
            "boundary_warnings": list(self.boundary_warnings),
            "runtime_s": self.runtime_s,
        }


# ---------------------------------------------------------------------------
# barrier function


class _Barrier:
    """``t * objective - sum ln(link slack) - sum ln(u_i - threshold_i)``."""

    def __init__(self, network: NetworkModel, measures, thresholds: np.ndarray, margin: float):
        self.network = network
        self.measures = measures
        self.thresholds = thresholds
        self.margin = margin
        self.d = network.d
        self.A = network.incidence.astype(float)

    def inside(self, y) -> bool:
        if not np.all(np.isfinite(y)):
            return False
        p = rf.eval_point(self.network, y)
        with np.errstate(invalid="ignore"):
            slack = self.d - self.A @ p.x
        return bool(np.all(slack > self.margin * self.d) and np.all(p.u - self.thresholds > self.margin))

    def value(self, y, t: float) -> float:
        p = rf.eval_point(self.network, y)
        slack = self.d - self.A @ p.x
        gap = p.u - self.thresholds
        obj = rf.evaluate(self.network, self.measures, y, order=0, check=False).value
        return t * obj - np.log(slack).sum() - np.log(gap).sum()

    def derivatives(self, y, t: float):
        net = self.network
        p = rf.eval_point(net, y)
        ev = rf.evaluate(net, self.measures, y, order=2, check=False)
        grad = t * ev.gradient
        hess = t * ev.hessian

        slack = self.d - self.A @ p.x
        ax = self.A * p.x[None, :]  # minus the slack gradient, per link
        grad += (ax / slack[:, None]).sum(axis=0)
        hess += (ax / slack[:, None]).T @ (ax / slack[:, None])
        hess += np.diag((ax / slack[:, None]).sum(axis=0))

        for i in range(net.n_routes):
            gap = p.u[i] - self.thresholds[i]
            g = rf.u_gradient(net, p, i)
            grad -= g / gap
            hess += np.outer(g, g) / gap**2 - rf.u_hessian(net, p, i) / gap
        hess = 0.5 * (hess + hess.T)
        return ev.value, grad, hess


def _newton_direction(grad: np.ndarray, hess: np.ndarray) -> tuple[np.ndarray, float]:
    """Newton step and squared decrement, regularising indefinite Hessians."""
    n = len(grad)
    shift = 0.0
    scale = max(1.0, float(np.max(np.abs(np.diag(hess)))))
    for _ in range(60):
        try:
            factor = cho_factor(hess + shift * np.eye(n))
            step = -cho_solve(factor, grad)
            return step, float(-grad @ step)
        except LinAlgError:
            shift = max(2.0 * shift, 1e-10 * scale)
    raise SolverError("Hessian could not be regularised")


# ---------------------------------------------------------------------------
# public API


def find_interior_point(network: NetworkModel, measures=None) -> np.ndarray:
    """Small uniform-ish rates leaving every slack and margin at least half open.

    Starts from ``x_i = min_j d_j / (2 r)`` over route ``i``'s links and halves
    all rates until link slacks are at least ``d_j/2`` and route margins at
    least ``(1 - threshold_i)/2``.
    """
    measures = rf.resolve_measures(network, measures)
    thresholds = rf.route_thresholds(measures)
    if np.any(thresholds >= 1.0):
        raise InfeasibleStartError("a route threshold is not below 1; the problem is infeasible")
    d = network.d
    r = network.n_routes
    x = np.array([d[network.route_links(i)].min() / (2.0 * r) for i in range(r)])
    for _ in range(101):
        y = np.log(x)
        p = rf.eval_point(network, y)
        slack = d - network.incidence @ p.x
        if np.all(slack >= d / 2) and np.all(p.u - thresholds >= (1.0 - thresholds) / 2):
            return y
        x = x / 2.0
    raise InfeasibleStartError("no interior point found after 100 halvings")


def _active_sets(network, measures, y):
    report = rf.feasibility(network, measures, y)
    d = network.d
    scale_u = np.maximum(1.0 - report.thresholds, 1e-12)
    links = np.flatnonzero(report.slacks < ACTIVE_RTOL * d)
    routes = np.flatnonzero(report.margins < ACTIVE_RTOL * scale_u)
    return report, links, routes


def kkt_residual(network: NetworkModel, measures, y) -> float:
    """Stationarity residual of the log-rate problem at ``y``.

    Away from the boundary this is the sup-norm of the objective gradient;
    with near-active constraints, the Lagrangian gradient with non-negative
    least-squares multipliers.
    """
    measures = rf.resolve_measures(network, measures)
    y = np.asarray(y, dtype=float)
    report, links, routes = _active_sets(network, measures, y)
    if not report.feasible:
        raise DomainError(f"infeasible point: {report.describe(network)}")
    grad = rf.objective_gradient(network, measures, y)
    if len(links) == 0 and len(routes) == 0:
        return float(np.max(np.abs(grad)))
    p = rf.eval_point(network, y)
    # constraints written as c(y) >= 0; KKT: grad = sum lambda * grad c
    cols = [-(network.incidence[j] * p.x) / network.d[j] for j in links]
    cols += [rf.u_gradient(network, p, i) for i in routes]
    C = np.array(cols).T
    lam, _ = nnls(C, grad)
    return float(np.max(np.abs(grad - C @ lam)))


def _stage_minimize(barrier: _Barrier, y: np.ndarray, t: float, cfg: SolverConfig):
    """Damped Newton on one barrier stage. Returns (y, newton iterations, stalled)."""
    iters = 0
    for _ in range(cfg.max_newton):
        _, grad, hess = barrier.derivatives(y, t)
        if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
            raise SolverError("non-finite derivatives", y)
        step, dec2 = _newton_direction(grad, hess)
        iters += 1
        f0 = barrier.value(y, t)
        # at large t the predicted decrease can drop below the resolution of f0
        if dec2 / 2.0 <= max(cfg.newton_tol, ROUNDOFF_FACTOR * np.finfo(float).eps * abs(f0)):
            return y, iters, False
        s = 1.0
        while not barrier.inside(y + s * step):
            s *= 0.5
            if s < 1e-16:
                return y, iters, True
        slope = float(grad @ step)
        while True:
            trial = y + s * step
            ft = barrier.value(trial, t)
            if np.isfinite(ft) and ft <= f0 + cfg.backtrack_alpha * s * slope:
                break
            s *= cfg.backtrack_beta
            if s < 1e-14:
                # no measurable decrease left at this precision
                return y, iters, True
        y = trial
    return y, iters, True


def solve(network: NetworkModel, measures=None, config: SolverConfig | None = None, *, y0=None) -> SolveResult:
    """Minimise the log-rate objective with a log-barrier Newton method."""
    cfg = config or SolverConfig()
    measures = rf.resolve_measures(network, measures)
    start = time.perf_counter()
    thresholds = rf.route_thresholds(measures)
    certs = [certify(m) for m in measures]
    cert_class = weakest([c.cls for c in certs])
    barrier = _Barrier(network, measures, thresholds, cfg.feasibility_margin)

    y = find_interior_point(network, measures) if y0 is None else np.asarray(y0, dtype=float).copy()
    if not barrier.inside(y):
        raise InfeasibleStartError("start point is not strictly feasible", y)

    n_constraints = network.n_links + network.n_routes
    t = cfg.barrier_t0
    outer = 0
    newton = 0
    status = SolveStatus.MAX_ITERATIONS
    for outer in range(1, cfg.max_outer + 1):
        y, iters, stalled = _stage_minimize(barrier, y, t, cfg)
        newton += iters
        if stalled:
            logger.debug("stage %d stalled at t=%.3g after %d Newton steps", outer, t, iters)
        if n_constraints / t < cfg.tol:
            status = SolveStatus.CONVERGED
            break
        t *= cfg.barrier_mu

    result = _finish(network, measures, y, cert_class, status, outer, newton)
    result.runtime_s = time.perf_counter() - start
    return result


def _finish(network, measures, y, cert_class, status, outer, newton) -> SolveResult:
    p = rf.eval_point(network, y)
    ev = rf.evaluate(network, measures, y, order=1)
    report, links, routes = _active_sets(network, measures, y)
    warnings = []
    for j in links:
        warnings.append(f"link {network.links[j].id} capacity is (nearly) exhausted")
    for i, m in enumerate(measures):
        cert = certify(m)
        gap = p.u[i] - report.thresholds[i]
        if cert.restricted_cutoff is not None and gap < CUTOFF_WARN:
            warnings.append(
                f"route {network.routes[i].id}: Werner parameter {p.u[i]:.6f} is within {gap:.2e} "
                f"of the restricted-domain cutoff {cert.restricted_cutoff}; the supremum lies on the boundary"
            )
        elif i in routes:
            warnings.append(f"route {network.routes[i].id}: Werner parameter sits on its threshold")
    if status is SolveStatus.CONVERGED and (len(links) or len(routes)):
        status = SolveStatus.BOUNDARY_SUPREMUM

    f = np.array([pr["f"] for pr in ev.per_route])
    route_utility = p.x * f
    return SolveResult(
        y=p.y,
        x=p.x,
        w=rf.reduce_w(network, p.x),
        u=p.u,
        fidelity=np.asarray(fidelity_from_werner(np.clip(p.u, 0.0, 1.0))),
        measure_values=f,
        route_utility=route_utility,
        network_utility=float(np.prod(route_utility)),
        objective=ev.value,
        certificate=cert_class,
        status=status,
        outer_stages=outer,
        newton_iters=newton,
        final_gradient_norm=float(np.max(np.abs(ev.gradient))),
        boundary_warnings=warnings,
        certified=cert_class.certified,
    )


def multistart_solve(network: NetworkModel, measures=None, config: SolverConfig | None = None) -> SolveResult:
    """Best of several solves from log-uniformly shrunk interior starts.

    Start 0 is the plain interior point, so one start reproduces :func:`solve`.
    Shrinking rates keeps a start feasible. Ties go to the lowest start index.
    """
    cfg = config or SolverConfig()
    if cfg.multistart_count < 1:
        raise ValueError("multistart_count must be at least 1")
    measures = rf.resolve_measures(network, measures)
    y0 = find_interior_point(network, measures)
    rng = np.random.default_rng(cfg.seed)
    starts = [y0] + [y0 + np.log(10.0) * rng.uniform(-3.0, 0.0, size=len(y0)) for _ in range(cfg.multistart_count - 1)]

    best = None
    errors = []
    for k, start in enumerate(starts):
        try:
            res = solve(network, measures, cfg, y0=start)
        except SolverError as exc:
            errors.append(f"start {k}: {exc}")
            continue
        res.start_index = k
        if best is None or res.objective < best.objective:
            best = res
    if best is None:
        raise SolverError("all multistart runs failed: " + "; ".join(errors))
    best.certified = False
    return best


def solve_scenario(network: NetworkModel, measures=None, config: SolverConfig | None = None) -> SolveResult:
    """Single solve when every route is certified convex, multistart otherwise."""
    measures = rf.resolve_measures(network, measures)
    cls = weakest([certify(m).cls for m in measures])
    if cls.certified:
        return solve(network, measures, config)
    return multistart_solve(network, measures, config)
