"""Verdict bundles, their JSON/text/CSV renderings, and the stable output layout.

Output directory layout::

    verdicts.json      versioned verdict bundle
    summary.txt        one line per verdict
    <table>.csv        plot-ready tables (see ``TABLE_COLUMNS``)
    operators/*.txt    sparse-triplet dumps, when requested
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

SCHEMA_VERSION = 1
STATUSES = ("PASS", "FAIL", "FLAGGED")

TABLE_COLUMNS = {
    "decay": ("condition", "quantity", "radius", "max_value"),
    "eigenvalues": ("operator", "index", "value", "residual"),
    "dos": ("bin_lo", "bin_hi", "idos_metric", "idos_flat"),
    "scattering": ("sign", "time", "cauchy_norm", "isometry_defect", "boundary_mass"),
    "forms": ("form_id", "h0", "h1", "h1_gradient", "h1_curvature", "norm_sq"),
    "commutator": ("index", "singular_value", "jstar_singular_value"),
}


@dataclass
class Verdict:
    task: str
    condition: str
    status: str
    numbers: dict
    threshold: str
    detail: str = ""

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"status must be one of {STATUSES}")

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "condition": self.condition,
            "status": self.status,
            "numbers": self.numbers,
            "threshold": self.threshold,
            "detail": self.detail,
        }


@dataclass
class VerdictBundle:
    toolkit_version: str
    config_hash: str
    seed: int | None
    verdicts: list[Verdict] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION
    tables: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def failed(self) -> bool:
        return any(v.status == "FAIL" for v in self.verdicts)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "toolkit_version": self.toolkit_version,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "verdicts": [v.to_dict() for v in self.verdicts],
        }

    def to_json(self) -> str:
        return json.dumps(_encode(self.to_dict()), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "VerdictBundle":
        d = _decode(json.loads(text))
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported verdict schema version {d.get('schema_version')!r}")
        return cls(
            toolkit_version=d["toolkit_version"],
            config_hash=d["config_hash"],
            seed=d["seed"],
            verdicts=[Verdict(**v) for v in d["verdicts"]],
            schema_version=d["schema_version"],
        )

    def summary_text(self) -> str:
        lines = [
            f"aeforms {self.toolkit_version}  schema {self.schema_version}  config {self.config_hash[:16]}  seed {self.seed}",
        ]
        if not self.verdicts:
            lines.append("no tasks run")
        for v in self.verdicts:
            nums = ", ".join(f"{k}={_fmt(val)}" for k, val in sorted(v.numbers.items()))
            line = f"{v.status:<7} {v.condition:<26} [{v.task}] {nums}; need {v.threshold}"
            if v.detail:
                line += f" ({v.detail})"
            lines.append(line)
        counts = {s: sum(v.status == s for v in self.verdicts) for s in STATUSES}
        lines.append("totals: " + ", ".join(f"{s} {counts[s]}" for s in STATUSES))
        return "\n".join(lines) + "\n"


_NONFINITE = {"inf": math.inf, "-inf": -math.inf, "nan": math.nan}


def _encode(obj):
    """Non-finite floats become the strings ``inf``, ``-inf`` and ``nan``."""
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    return obj


def _decode(obj):
    if isinstance(obj, str) and obj in _NONFINITE:
        return _NONFINITE[obj]
    if isinstance(obj, dict):
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def _fmt(val) -> str:
    if isinstance(val, bool):
        return str(val).lower()
    if isinstance(val, float):
        return f"{val:.6g}"
    if isinstance(val, (list, tuple)):
        return "[" + " ".join(_fmt(x) for x in val) + "]"
    return str(val)


def table_csv(name: str, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS[name])
    for row in rows:
        w.writerow(["" if x is None else (repr(x) if isinstance(x, float) else x) for x in row])
    return buf.getvalue()


def emit_report(bundle: VerdictBundle, fmt: str, target) -> list[Path]:
    """Write the bundle as ``text`` (summary file), ``json`` (bundle file) or ``csv-dir``.

    ``target`` is a file path for ``text``/``json`` and a directory for
    ``csv-dir``.  Returns the paths written.
    """
    target = Path(target)
    if fmt == "json":
        target.write_text(bundle.to_json(), encoding="utf-8")
        return [target]
    if fmt == "text":
        target.write_text(bundle.summary_text(), encoding="utf-8")
        return [target]
    if fmt == "csv-dir":
        target.mkdir(parents=True, exist_ok=True)
        out = []
        for name in sorted(bundle.tables):
            p = target / f"{name}.csv"
            p.write_text(table_csv(name, bundle.tables[name]), encoding="utf-8")
            out.append(p)
        return out
    raise ValueError(f"unknown report format {fmt!r}; choose text, json or csv-dir")


def write_bundle(bundle: VerdictBundle, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = emit_report(bundle, "json", out_dir / "verdicts.json")
    paths += emit_report(bundle, "text", out_dir / "summary.txt")
    paths += emit_report(bundle, "csv-dir", out_dir)
    return paths
