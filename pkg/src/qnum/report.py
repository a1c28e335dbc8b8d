"""Allocation reports rendered as aligned tables, CSV or JSON.

All three renderings round every number through the same significant-digit
formatter, so they carry identical values.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from qnum.network import NetworkModel
from qnum.solver import SolveResult

ROUTE_COLUMNS = ("route_id", "measure", "y", "rate", "werner_u", "fidelity", "measure_value", "route_utility")
LINK_COLUMNS = ("link_id", "d", "w", "capacity_used")


def fmt(value, precision: int) -> str:
    if isinstance(value, str):
        return value
    return f"{float(value):.{precision}g}"


def rounded(value, precision: int):
    if isinstance(value, str):
        return value
    return float(fmt(value, precision))


@dataclass
class AllocationReport:
    routes: list[dict]
    links: list[dict]
    scalars: dict
    warnings: list[str] = field(default_factory=list)
    precision: int = 6

    @classmethod
    def from_result(cls, network: NetworkModel, result: SolveResult, precision: int = 6) -> "AllocationReport":
        routes = []
        for i, route in enumerate(network.routes):
            routes.append({
                "route_id": route.id,
                "measure": route.measure_id,
                "y": result.y[i],
                "rate": result.x[i],
                "werner_u": result.u[i],
                "fidelity": result.fidelity[i],
                "measure_value": result.measure_values[i],
                "route_utility": result.route_utility[i],
            })
        used = network.incidence @ result.x
        links = [
            {"link_id": link.id, "d": link.d, "w": result.w[j], "capacity_used": used[j] / link.d}
            for j, link in enumerate(network.links)
        ]
        scalars = {
            "network_utility": result.network_utility,
            "log_utility": result.log_utility,
            "certificate": result.certificate.value,
            "certified": "yes" if result.certified else "no",
            "status": result.status.value,
            "outer_stages": str(result.outer_stages),
            "newton_iters": str(result.newton_iters),
            "final_gradient_norm": result.final_gradient_norm,
        }
        return cls(routes, links, scalars, list(result.boundary_warnings), precision)

    def _rows(self, rows, columns):
        return [[fmt(row[c], self.precision) for c in columns] for row in rows]

    def to_table(self) -> str:
        out = io.StringIO()
        for title, rows, columns in (
            ("Routes", self.routes, ROUTE_COLUMNS),
            ("Links", self.links, LINK_COLUMNS),
        ):
            body = self._rows(rows, columns)
            widths = [max(len(c), *(len(r[k]) for r in body)) for k, c in enumerate(columns)]
            out.write(f"{title}\n")
            out.write("  ".join(c.rjust(wd) for c, wd in zip(columns, widths)) + "\n")
            out.write("  ".join("-" * wd for wd in widths) + "\n")
            for r in body:
                out.write("  ".join(v.rjust(wd) for v, wd in zip(r, widths)) + "\n")
            out.write("\n")
        width = max(len(k) for k in self.scalars)
        for key, value in self.scalars.items():
            out.write(f"{key.ljust(width)}  {fmt(value, self.precision)}\n")
        for w in self.warnings:
            out.write(f"warning: {w}\n")
        return out.getvalue()

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(ROUTE_COLUMNS)
        writer.writerows(self._rows(self.routes, ROUTE_COLUMNS))
        writer.writerow([])
        writer.writerow(LINK_COLUMNS)
        writer.writerows(self._rows(self.links, LINK_COLUMNS))
        writer.writerow([])
        writer.writerow(("key", "value"))
        for key, value in self.scalars.items():
            writer.writerow((key, fmt(value, self.precision)))
        for w in self.warnings:
            writer.writerow(("warning", w))
        return out.getvalue()

    def to_dict(self) -> dict:
        p = self.precision
        scalars = {}
        for key, value in self.scalars.items():
            if key in ("outer_stages", "newton_iters"):
                scalars[key] = int(value)
            else:
                scalars[key] = rounded(value, p)
        return {
            "routes": [{k: rounded(v, p) for k, v in row.items()} for row in self.routes],
            "links": [{k: rounded(v, p) for k, v in row.items()} for row in self.links],
            **scalars,
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def render(self, fmt_name: str) -> str:
        return {"table": self.to_table, "csv": self.to_csv, "json": self.to_json}[fmt_name]()
