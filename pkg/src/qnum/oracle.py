"""Brute-force grid search over rates, for checking the solver on tiny networks.

The search uses the original product utility with each link's Werner parameter
set to its largest feasible value, so it shares no code path with the log-rate
derivatives the solver relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from qnum.measures import MeasureModel
from qnum.network import NetworkModel

MAX_ROUTES = 3
LOWER_FRACTION = 1e-6
# grid points evaluated per vectorised batch
_BATCH = 1 << 20


class UnsupportedSizeError(ValueError):
    pass


@dataclass(frozen=True)
class OracleConfig:
    grid_points_per_dim: int = 400

    def __post_init__(self):
        if self.grid_points_per_dim < 2:
            raise ValueError("grid_points_per_dim must be at least 2")


@dataclass(frozen=True)
class OracleResult:
    x: np.ndarray
    utility: float
    grid_points_per_dim: int
    log_step: np.ndarray  # ln spacing of each axis
    evaluated: int
    feasible_points: int


def refined_points(n: int, factor: int = 4) -> int:
    """Points per axis after dividing every log-spacing by ``factor``.

    The refined grid contains the coarse one, so its best utility can only improve.
    """
    return factor * (n - 1) + 1


def rate_upper_bounds(network: NetworkModel) -> np.ndarray:
    return np.array([network.d[network.route_links(i)].min() for i in range(network.n_routes)])


def _utilities(network: NetworkModel, measures: list[MeasureModel], X: np.ndarray) -> np.ndarray:
    """Product utility at each row of ``X``; ``-inf`` where infeasible."""
    A = network.incidence.astype(float)
    w = 1.0 - (X @ A.T) / network.d[None, :]
    ok = np.all(w > 0.0, axis=1)
    wc = np.where(w > 0.0, w, 1.0)
    util = np.ones(len(X))
    for i, m in enumerate(measures):
        links = network.route_links(i)
        u = np.prod(wc[:, links], axis=1)
        util *= X[:, i] * m.value(np.clip(u, 0.0, 1.0))
    return np.where(ok, util, -np.inf)


def grid_search(network: NetworkModel, measures=None, config: OracleConfig | None = None) -> OracleResult:
    """Maximise the product utility over a log-uniform rate grid."""
    from qnum.reformulation import resolve_measures

    cfg = config or OracleConfig()
    r = network.n_routes
    if r > MAX_ROUTES:
        raise UnsupportedSizeError(f"grid search supports at most {MAX_ROUTES} routes, got {r}")
    measures = resolve_measures(network, measures)
    bounds = rate_upper_bounds(network)
    n = cfg.grid_points_per_dim
    axes = [np.geomspace(LOWER_FRACTION * b, b, n) for b in bounds]
    log_step = np.array([np.log(a[1] / a[0]) for a in axes])

    best_util = -np.inf
    best_x = None
    feasible = 0
    total = n**r
    for start in range(0, total, _BATCH):
        idx = np.arange(start, min(start + _BATCH, total))
        cols = np.unravel_index(idx, (n,) * r)
        X = np.column_stack([axes[k][cols[k]] for k in range(r)])
        util = _utilities(network, measures, X)
        feasible += int(np.count_nonzero(util > -np.inf))
        k = int(np.argmax(util))
        if util[k] > best_util:
            best_util = float(util[k])
            best_x = X[k].copy()
    if best_x is None:
        best_x = np.full(r, np.nan)
    return OracleResult(
        x=best_x,
        utility=best_util,
        grid_points_per_dim=n,
        log_step=log_step,
        evaluated=total,
        feasible_points=feasible,
    )
