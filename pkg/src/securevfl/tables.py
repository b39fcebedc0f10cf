"""Accuracy matrices and verification tables rendered as aligned text and CSV."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from securevfl.approx import SigmoidPoly
from securevfl.errors import InvalidInputError
from securevfl.ledger import DepthCheck, Table1Check
from securevfl.presets import PUBLISHED, TABLE_COLUMNS, TABLE_ROWS, table_cell
from securevfl.training import TrainReport

CSV_FIELDS = ("schema_version", "dataset", "sigmoid", "model", "accuracy", "published")


def render(headers: list[str], rows: list[list]) -> str:
    cells = [[str(h) for h in headers]] + [["" if v is None else str(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _fmt(v: float | None) -> str | None:
    return None if v is None else f"{v:.4f}"


@dataclass
class ResultsTable:
    """Accuracy per (sigmoid row, model column) for one dataset family."""

    family: str
    cells: dict[tuple[str, str], float] = field(default_factory=dict)

    def add(self, report: TrainReport) -> None:
        if report.accuracy is None:
            raise InvalidInputError("report carries no accuracy")
        m = report.final_model
        degree = m.sigmoid.degree if isinstance(m.sigmoid, SigmoidPoly) else None
        self.cells[table_cell(m.kind, m.kernel, degree)] = float(report.accuracy)

    def columns(self) -> list[str]:
        extra = sorted({c for _, c in self.cells} - set(TABLE_COLUMNS))
        return list(TABLE_COLUMNS) + extra

    def rows(self) -> list[str]:
        extra = sorted({r for r, _ in self.cells} - set(TABLE_ROWS))
        return list(TABLE_ROWS) + extra

    def reference(self, row: str, col: str) -> float | None:
        ref = PUBLISHED.get(self.family, {}).get(row)
        if ref is None or col not in TABLE_COLUMNS:
            return None
        return ref[TABLE_COLUMNS.index(col)]

    def to_text(self) -> str:
        cols = self.columns()
        body = []
        for r in self.rows():
            body.append([r, *(_fmt(self.cells.get((r, c))) or "-" for c in cols)])
            if self.family in PUBLISHED:
                body.append(["  published", *(_fmt(self.reference(r, c)) or "-" for c in cols)])
        return f"dataset: {self.family}\n" + render(["sigmoid", *cols], body)

    def csv_rows(self) -> list[dict]:
        return [
            {
                "schema_version": 1,
                "dataset": self.family,
                "sigmoid": r,
                "model": c,
                "accuracy": repr(acc),
                "published": "" if self.reference(r, c) is None else repr(self.reference(r, c)),
            }
            for (r, c), acc in sorted(self.cells.items())
        ]


def tables_to_csv(tables: list[ResultsTable]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for t in tables:
        w.writerows(t.csv_rows())
    return buf.getvalue()


def tables_from_csv(text: str) -> list[ResultsTable]:
    out: dict[str, ResultsTable] = {}
    for rec in csv.DictReader(io.StringIO(text)):
        t = out.setdefault(rec["dataset"], ResultsTable(rec["dataset"]))
        t.cells[(rec["sigmoid"], rec["model"])] = float(rec["accuracy"])
    return list(out.values())


def table1_text(checks: list[Table1Check]) -> str:
    rows = []
    for c in checks:
        name = c.protocol + (f" (d_poly={c.params['d_poly']})" if c.params else "")
        rows.append([name, c.expected[0], c.expected[1], c.measured[0], c.measured[1],
                     "pass-exact" if c.passed else "FAIL"])
    return render(["protocol", "adds (published)", "mults (published)", "adds", "mults", "status"], rows)


def table2_text(checks: list[DepthCheck]) -> str:
    rows = []
    for c in checks:
        model = "LR" if c.model_kind == "lr" else f"KLR {c.kernel_kind}"
        if c.d_poly is not None:
            model += f" d_poly={c.d_poly}"
        rows.append([model, c.sigmoid_degree, c.measured, c.predicted,
                     "-" if c.published is None else c.published, c.status, c.note])
    return render(["model", "degree", "measured", "depth law", "published", "status", "note"], rows)
