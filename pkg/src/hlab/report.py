"""Study reports: rows, trend verdicts, resolution rules, file emission.

Reports are plain data so that verdicts are re-derivable from rows and a
JSON round trip reproduces the report exactly.  All file writes go
through a write-to-temp-then-rename so a crashed study never leaves a
partial artifact behind.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field

from .errors import ConfigError

SCHEMA_VERSION = 1

#: per-step slack for monotone-trend assertions; the underlying limits are
#: qualitative, so small discretization noise must not flip a verdict
TREND_SLACK = 0.02


def trend_decreasing(values, slack=TREND_SLACK):
    """Strictly decreasing up to per-step slack, with genuine overall drop."""
    vals = [float(v) for v in values]
    if len(vals) < 2:
        return False
    for a, b in zip(vals, vals[1:]):
        if b > a + slack * abs(a) + 1e-300:
            return False
    return vals[-1] < vals[0]


def trend_increasing(values, slack=TREND_SLACK):
    vals = [float(v) for v in values]
    if len(vals) < 2:
        return False
    for a, b in zip(vals, vals[1:]):
        if b < a - slack * abs(a) - 1e-300:
            return False
    return vals[-1] > vals[0]


def trend_bounded(values, ratio=2.0):
    """Max/min ratio bound over rows after the first refinement."""
    vals = [float(v) for v in values[1:]] or [float(v) for v in values]
    lo, hi = min(vals), max(vals)
    return hi <= ratio * lo + 1e-300


@dataclass
class Verdict:
    name: str
    passed: bool
    values: list
    note: str = ""


@dataclass
class StudyReport:
    """Structured record of one convergence study."""

    kind: str
    columns: list
    rows: list
    verdicts: list = field(default_factory=list)
    fitted: dict = field(default_factory=dict)
    curves: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def verdict(self, name: str) -> Verdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    def column(self, name: str, skip_failed=True):
        out = []
        for row in self.rows:
            if skip_failed and row.get("error"):
                continue
            out.append(row.get(name))
        return out

    def to_json(self) -> str:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "columns": self.columns,
            "rows": self.rows,
            "verdicts": [asdict(v) for v in self.verdicts],
            "fitted": self.fitted,
            "curves": self.curves,
            "meta": self.meta,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "StudyReport":
        payload = json.loads(text)
        if payload.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(
                f"unsupported report schema {payload.get('schema_version')!r}"
            )
        return cls(
            kind=payload["kind"],
            columns=payload["columns"],
            rows=payload["rows"],
            verdicts=[Verdict(**v) for v in payload["verdicts"]],
            fitted=payload["fitted"],
            curves=payload["curves"],
            meta=payload["meta"],
        )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_csv(report: StudyReport) -> str:
    lines = [",".join(report.columns)]
    for row in report.rows:
        lines.append(",".join(_fmt(row.get(c)) for c in report.columns))
    return "\n".join(lines) + "\n"


def report_plotdata(report: StudyReport) -> str:
    curves = report.curves or [c for c in report.columns if c != "error"]
    lines = ["# " + " ".join(curves)]
    for row in report.rows:
        if row.get("error"):
            continue
        vals = [row.get(c) for c in curves]
        if any(v is None for v in vals):
            continue
        lines.append(" ".join(_fmt(v) for v in vals))
    return "\n".join(lines) + "\n"


def atomic_write_text(path: str, text: str) -> str:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-hlab-")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def emit_report(report: StudyReport, fmt: str, out_dir: str, stem: str = "report"):
    """Write the report in one format; returns the written paths."""
    fmt = fmt.upper()
    if fmt == "CSV":
        return [atomic_write_text(os.path.join(out_dir, stem + ".csv"), report_csv(report))]
    if fmt == "JSON":
        return [atomic_write_text(os.path.join(out_dir, stem + ".json"), report.to_json())]
    if fmt in ("PLOT", "PLOTDATA"):
        return [
            atomic_write_text(os.path.join(out_dir, stem + ".plot"), report_plotdata(report))
        ]
    raise ConfigError(f"unknown report format {fmt!r} (CSV, JSON, PLOTDATA)")


# ---------------------------------------------------------------------------
# resolution rule: eps -> spacing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HRule:
    """Maps a lattice period and hole radius to a grid spacing.

    ``resolve`` asks for at least that many spacings across the hole
    radius; ``max_nodes`` caps the per-axis node count.  When the cap
    wins, the rule reports the achieved ``a/h`` so studies can flag
    under-resolved rows instead of silently trusting them.
    """

    resolve: float = 4.0
    max_nodes: int = 96
    min_cells: int = 8

    def cell_divisions(self, eps: float, hole_radius: float) -> int:
        """Cells per period for a torus cell problem."""
        want = int(math.ceil(self.resolve * eps / hole_radius - 1e-12))
        return max(self.min_cells, min(want, self.max_nodes))

    def domain_divisions(self, eps: float, hole_radius: float, extent: float) -> int:
        """Cells per period for a full-box grid (axis nodes = extent/eps * q + 1)."""
        cells_per_axis_cap = self.max_nodes
        periods = extent / eps
        q_cap = max(1, int(math.floor(cells_per_axis_cap / periods + 1e-12)))
        if hole_radius > 0:
            want = int(math.ceil(self.resolve * eps / hole_radius - 1e-12))
        else:
            want = self.min_cells
        return max(2, min(max(want, 4), q_cap))

    def achieved_resolution(self, eps: float, hole_radius: float, q: int) -> float:
        return hole_radius / (eps / q)

    @classmethod
    def from_string(cls, text: str) -> "HRule":
        kwargs = {}
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            try:
                key, value = part.split(":")
            except ValueError as exc:
                raise ConfigError(f"bad h_rule entry {part!r}") from exc
            key = key.strip()
            if key == "resolve":
                kwargs["resolve"] = float(value)
            elif key == "max_nodes":
                kwargs["max_nodes"] = int(value)
            elif key == "min_cells":
                kwargs["min_cells"] = int(value)
            else:
                raise ConfigError(f"unknown h_rule key {key!r}")
        return cls(**kwargs)

    def to_string(self) -> str:
        return f"resolve:{self.resolve},max_nodes:{self.max_nodes},min_cells:{self.min_cells}"
