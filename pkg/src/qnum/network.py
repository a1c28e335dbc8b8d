"""Links, routes and the link-route incidence structure.

A network is only ever described through its incidence matrix ``A`` (links x
routes) and the per-link rate constants ``d``. Node names and graph
connectivity play no role in the optimisation, so they are not modelled.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

# relative agreement required between a given d and one derived from physics
D_AGREEMENT_RTOL = 1e-6


class ValidationError(ValueError):
    """Raised when a scenario or a network description is malformed."""

    def __init__(self, message: str, offending: Sequence[str] = ()):
        super().__init__(message)
        self.offending = list(offending)


class DomainError(ValueError):
    """Raised when a function is evaluated outside its domain."""


@dataclass(frozen=True)
class PhysicalLinkParams:
    length_km: float
    kappa: float
    attempt_period: float

    def __post_init__(self):
        if not self.length_km >= 0:
            raise ValidationError(f"length_km must be >= 0, got {self.length_km}")
        if not 0 < self.kappa < 1:
            raise ValidationError(f"kappa must lie in (0, 1), got {self.kappa}")
        if not self.attempt_period > 0:
            raise ValidationError(f"attempt_period must be > 0, got {self.attempt_period}")


def derive_rate_constant(params: PhysicalLinkParams) -> float:
    """Rate constant ``d = 3 kappa eta / (2 T)`` with ``eta = 10**(-0.02 L)``."""
    eta = 10.0 ** (-0.02 * params.length_km)
    return 3.0 * params.kappa * eta / (2.0 * params.attempt_period)


def link_capacity(d: float, w: float) -> float:
    """Maximum generation rate of a link producing Werner states with parameter ``w``."""
    if not 0.0 <= w <= 1.0:
        raise DomainError(f"Werner parameter must lie in [0, 1], got {w}")
    if not d > 0:
        raise DomainError(f"rate constant must be positive, got {d}")
    return d * (1.0 - w)


@dataclass(frozen=True)
class LinkSpec:
    id: str
    d: float
    physical: PhysicalLinkParams | None = None

    def __post_init__(self):
        if not (isinstance(self.d, (int, float)) and math.isfinite(self.d) and self.d > 0):
            raise ValidationError(f"link {self.id!r}: d must be a positive number, got {self.d}", [self.id])
        if self.physical is not None:
            derived = derive_rate_constant(self.physical)
            if abs(derived - self.d) > D_AGREEMENT_RTOL * abs(derived):
                raise ValidationError(
                    f"link {self.id!r}: given d={self.d} disagrees with d={derived:.6g} "
                    "derived from its physical parameters",
                    [self.id],
                )

    @classmethod
    def from_physical(cls, id: str, params: PhysicalLinkParams) -> "LinkSpec":
        return cls(id=id, d=derive_rate_constant(params), physical=params)


@dataclass(frozen=True)
class RouteSpec:
    id: str
    link_ids: tuple[str, ...]
    measure_id: str = "sk"

    def __post_init__(self):
        object.__setattr__(self, "link_ids", tuple(self.link_ids))
        if not self.link_ids:
            raise ValidationError(f"route {self.id!r} has no links", [self.id])
        dupes = sorted({j for j in self.link_ids if self.link_ids.count(j) > 1})
        if dupes:
            raise ValidationError(f"route {self.id!r} lists links more than once: {dupes}", [self.id, *dupes])


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Immutable network: links, routes and the binary incidence matrix.

    ``incidence[j, i] == 1`` iff route ``i`` traverses link ``j``.
    """

    links: tuple[LinkSpec, ...]
    routes: tuple[RouteSpec, ...]
    incidence: np.ndarray = field(repr=False)

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def n_routes(self) -> int:
        return len(self.routes)

    @property
    def d(self) -> np.ndarray:
        return np.array([link.d for link in self.links], dtype=float)

    @property
    def link_ids(self) -> list[str]:
        return [link.id for link in self.links]

    @property
    def route_ids(self) -> list[str]:
        return [route.id for route in self.routes]

    @property
    def measure_ids(self) -> list[str]:
        return [route.measure_id for route in self.routes]

    def route_links(self, i: int) -> np.ndarray:
        """Row indices of the links traversed by route ``i``."""
        return np.flatnonzero(self.incidence[:, i])


def build_network(links: Iterable[LinkSpec], routes: Iterable[RouteSpec]) -> NetworkModel:
    """Materialise the incidence matrix, dropping links no route uses.

    Links and routes keep their declaration order.
    """
    links = list(links)
    routes = list(routes)
    if not routes:
        raise ValidationError("network needs at least one route")

    link_ids = [link.id for link in links]
    dup_links = sorted({j for j in link_ids if link_ids.count(j) > 1})
    if dup_links:
        raise ValidationError(f"duplicate link ids: {dup_links}", dup_links)
    route_ids = [route.id for route in routes]
    dup_routes = sorted({i for i in route_ids if route_ids.count(i) > 1})
    if dup_routes:
        raise ValidationError(f"duplicate route ids: {dup_routes}", dup_routes)

    known = set(link_ids)
    dangling = [f"{route.id}->{j}" for route in routes for j in route.link_ids if j not in known]
    if dangling:
        raise ValidationError(f"routes reference unknown links: {dangling}", dangling)

    used = {j for route in routes for j in route.link_ids}
    dropped = [j for j in link_ids if j not in used]
    if dropped:
        logger.info("dropping links not used by any route: %s", dropped)
    links = [link for link in links if link.id in used]

    row = {link.id: k for k, link in enumerate(links)}
    incidence = np.zeros((len(links), len(routes)), dtype=np.int8)
    for i, route in enumerate(routes):
        for j in route.link_ids:
            incidence[row[j], i] = 1
    incidence.setflags(write=False)
    return NetworkModel(links=tuple(links), routes=tuple(routes), incidence=incidence)


# ---------------------------------------------------------------------------
# scenario files

_LINK_FIELDS = {"id", "d", "length_km", "kappa", "attempt_period_s"}
_ROUTE_FIELDS = {"id", "measure", "links"}
_TOP_FIELDS = {"links", "routes", "solver", "name", "description"}


@dataclass
class Scenario:
    network: NetworkModel
    solver: dict[str, Any] = field(default_factory=dict)
    name: str | None = None
    unknown_fields: list[str] = field(default_factory=list)


def _check_fields(obj: Mapping, allowed: set, where: str, unknown: list[str], strict: bool):
    extra = sorted(set(obj) - allowed)
    if not extra:
        return
    names = [f"{where}.{k}" for k in extra]
    if strict:
        raise ValidationError(f"unknown fields: {names}", names)
    logger.warning("ignoring unknown fields: %s", names)
    unknown.extend(names)


def _parse_link(raw: Mapping, k: int) -> LinkSpec:
    if "id" not in raw:
        raise ValidationError(f"links[{k}] has no id", [f"links[{k}]"])
    link_id = str(raw["id"])
    physical = None
    phys_keys = {"length_km", "kappa", "attempt_period_s"}
    present = phys_keys & set(raw)
    if present:
        if present != phys_keys:
            missing = sorted(phys_keys - present)
            raise ValidationError(f"link {link_id!r}: incomplete physical parameters, missing {missing}", [link_id])
        try:
            physical = PhysicalLinkParams(
                length_km=float(raw["length_km"]),
                kappa=float(raw["kappa"]),
                attempt_period=float(raw["attempt_period_s"]),
            )
        except ValidationError as exc:
            raise ValidationError(f"link {link_id!r}: {exc}", [link_id]) from None
    if "d" in raw:
        return LinkSpec(id=link_id, d=float(raw["d"]), physical=physical)
    if physical is None:
        raise ValidationError(f"link {link_id!r} needs either d or physical parameters", [link_id])
    return LinkSpec.from_physical(link_id, physical)


def parse_scenario(data: Mapping, *, strict: bool = False) -> Scenario:
    """Build a :class:`Scenario` from decoded scenario JSON."""
    if not isinstance(data, Mapping):
        raise ValidationError("scenario must be a JSON object")
    unknown: list[str] = []
    _check_fields(data, _TOP_FIELDS, "<root>", unknown, strict)
    for key in ("links", "routes"):
        if not isinstance(data.get(key), list):
            raise ValidationError(f"scenario needs a {key!r} list", [key])

    links = []
    for k, raw in enumerate(data["links"]):
        _check_fields(raw, _LINK_FIELDS, f"links[{k}]", unknown, strict)
        links.append(_parse_link(raw, k))

    routes = []
    for k, raw in enumerate(data["routes"]):
        _check_fields(raw, _ROUTE_FIELDS, f"routes[{k}]", unknown, strict)
        if "id" not in raw or "links" not in raw:
            raise ValidationError(f"routes[{k}] needs 'id' and 'links'", [f"routes[{k}]"])
        routes.append(
            RouteSpec(
                id=str(raw["id"]),
                link_ids=tuple(str(j) for j in raw["links"]),
                measure_id=str(raw.get("measure", "sk")),
            )
        )

    solver = data.get("solver") or {}
    if not isinstance(solver, Mapping):
        raise ValidationError("'solver' must be an object", ["solver"])
    return Scenario(
        network=build_network(links, routes),
        solver=dict(solver),
        name=data.get("name"),
        unknown_fields=unknown,
    )


def load_scenario(path: str | Path, *, strict: bool = False) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    except OSError as exc:
        raise ValidationError(f"{path}: cannot read scenario: {exc.strerror}") from None
    try:
        return parse_scenario(data, strict=strict)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}", exc.offending) from None


def scenario_to_dict(network: NetworkModel, solver: Mapping | None = None) -> dict:
    """Serialise a network back to the scenario JSON schema."""
    links = []
    for link in network.links:
        entry: dict[str, Any] = {"id": link.id, "d": link.d}
        if link.physical is not None:
            entry.update(
                length_km=link.physical.length_km,
                kappa=link.physical.kappa,
                attempt_period_s=link.physical.attempt_period,
            )
        links.append(entry)
    routes = [{"id": r.id, "measure": r.measure_id, "links": list(r.link_ids)} for r in network.routes]
    out: dict[str, Any] = {"links": links, "routes": routes}
    if solver:
        out["solver"] = dict(solver)
    return out


def surfnet_scenario_path() -> Path:
    """Path of the bundled 18-link, 4-route SURFnet QKD scenario."""
    return Path(__file__).parent / "data" / "surfnet.json"


def surfnet_network() -> NetworkModel:
    return load_scenario(surfnet_scenario_path()).network
