"""Scenario files, parameter sweeps and CSV/JSON output.

Scenario files are flat ``key = value`` text, one field per line, keys
being :class:`~handoffsim.model.Scenario` field names.  ``#`` starts a
comment.  Missing keys take the dataclass defaults; unknown or repeated
keys are errors.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Sequence

from . import oracle
from .engine import run_replications
from .model import UNBOUNDED, Policy, Scenario, validate_scenario
from .stats import MetricsReport, audit, summarize

CSV_HEADER = (
    "policy", "swept_value", "cbp", "cbp_ci", "hdp", "hdp_ci", "cdp", "cdp_ci",
    "utilization", "util_ci", "mean_qhc", "mean_qoc", "oracle_cbp", "oracle_hdp", "oracle_util",
)

SCALE = "scale"  # sweep key multiplying both arrival rates

_INT_FIELDS = {"n_channels", "guard_channels", "cap_new_queue", "replications", "seed"}
_STR_FIELDS = {"policy", "discipline"}


class ScenarioParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _convert(key: str, raw: str) -> Any:
    if key in _STR_FIELDS:
        return raw
    if key == "cap_handoff_queue":
        if raw.lower() in ("unbounded", "inf"):
            return UNBOUNDED
        return int(raw)
    if key in _INT_FIELDS:
        return int(raw)
    return float(raw)


def parse_scenario_text(text: str) -> Scenario:
    """Parse scenario text; the result is validated."""
    names = {f.name for f in fields(Scenario)}
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioParseError(f"expected key=value, got {line!r}", lineno)
        key, raw = (p.strip() for p in line.split("=", 1))
        if key not in names:
            raise ScenarioParseError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ScenarioParseError(f"duplicate key {key!r}", lineno)
        try:
            values[key] = _convert(key, raw)
        except ValueError:
            raise ScenarioParseError(f"bad value {raw!r} for {key}", lineno) from None
    return validate_scenario(Scenario(**values))


def parse_scenario(path: str | Path) -> Scenario:
    return parse_scenario_text(Path(path).read_text())


def apply_override(s: Scenario, key: str, value: float) -> Scenario:
    """Set one swept parameter; ``scale`` multiplies both arrival rates."""
    if key == SCALE:
        return s.with_(lambda_new=s.lambda_new * value, lambda_handoff=s.lambda_handoff * value)
    names = {f.name for f in fields(Scenario)}
    if key not in names or key in _STR_FIELDS:
        raise ValueError(f"cannot sweep {key!r}")
    if key in _INT_FIELDS or key == "cap_handoff_queue":
        if value != int(value):
            raise ValueError(f"{key} takes integer values, got {value}")
        value = int(value)
    return s.with_(**{key: value})


@dataclass(frozen=True)
class SweepSpec:
    base: Scenario
    param: str
    values: tuple[float, ...]
    policies: tuple[Policy, ...]

    def __post_init__(self):
        if not self.values:
            raise ValueError("sweep value list is empty")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("sweep values must be strictly increasing")
        if not self.policies:
            raise ValueError("no policies to compare")
        object.__setattr__(self, "base", validate_scenario(self.base))
        object.__setattr__(self, "policies", tuple(Policy(p) for p in self.policies))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        apply_override(self.base, self.param, self.values[0])  # reject bad keys early


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list[dict]
    reports: dict[tuple[str, float], MetricsReport]
    audits_ok: bool


def oracle_values(s: Scenario) -> dict | None:
    try:
        return oracle.analytic_metrics(s)
    except oracle.OracleError:
        return None


def make_row(policy: Policy, swept_value, report: MetricsReport | None, orc: dict | None) -> dict:
    def est(name):
        if report is None:
            return None, None
        e = report[name]
        hw = None if e.mean is None or math.isnan(e.half_width) else e.half_width
        return e.mean, hw

    cbp, cbp_ci = est("cbp")
    hdp, hdp_ci = est("hdp")
    cdp, cdp_ci = est("cdp")
    util, util_ci = est("utilization")
    return {
        "policy": policy.value,
        "swept_value": swept_value,
        "cbp": cbp, "cbp_ci": cbp_ci,
        "hdp": hdp, "hdp_ci": hdp_ci,
        "cdp": cdp, "cdp_ci": cdp_ci,
        "utilization": util, "util_ci": util_ci,
        "mean_qhc": est("mean_qhc")[0],
        "mean_qoc": est("mean_qoc")[0],
        "oracle_cbp": orc["cbp"] if orc else None,
        "oracle_hdp": orc["hdp"] if orc else None,
        "oracle_util": orc["utilization"] if orc else None,
    }


def simulate(s: Scenario, workers: int = 1, level: float = 0.95) -> MetricsReport:
    s = validate_scenario(s)
    traces = run_replications(s, workers=workers)
    return summarize(traces, s.warmup_time, level, ci=len(traces) >= 2)


def run_sweep(spec: SweepSpec, workers: int = 1, level: float = 0.95, with_oracle: bool = True) -> SweepResult:
    """Simulate every (policy, value) point.

    All points share the base seed, so policies at one value see the same
    arrival sample path (common random numbers).
    """
    rows, reports = [], {}
    ok = True
    for policy in spec.policies:
        for v in spec.values:
            s = apply_override(spec.base.with_(policy=policy), spec.param, v)
            report = simulate(s, workers, level)
            ok &= all(f.passed for f in audit(report))
            reports[(policy.value, v)] = report
            rows.append(make_row(policy, v, report, oracle_values(s) if with_oracle else None))
    return SweepResult(spec, rows, reports, ok)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".6g")
    return str(v)


def _json_value(v):
    if isinstance(v, float):
        return float(format(v, ".6g")) if math.isfinite(v) else None
    return v


def metadata(s: Scenario, **extra) -> dict:
    meta = {"scenario": validate_scenario(s).as_dict()}
    meta.update(extra)
    return meta


def render(rows: Sequence[dict], fmt: str, meta: dict | None = None) -> str:
    """Serialize a result table.

    CSV starts with ``#`` comment lines holding the metadata, then the
    header and one line per row.
    """
    if not rows:
        raise ValueError("empty table")
    if fmt == "csv":
        buf = io.StringIO()
        for line in json.dumps(meta or {}, sort_keys=True, indent=1).splitlines():
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in CSV_HEADER])
        return buf.getvalue()
    if fmt == "json":
        records = [{k: _json_value(r[k]) for k in CSV_HEADER} for r in rows]
        return json.dumps({"metadata": meta or {}, "records": records}, indent=2, sort_keys=False) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def emit(rows: Sequence[dict], fmt: str, path: str | Path, meta: dict | None = None) -> Path:
    path = Path(path)
    path.write_text(render(rows, fmt, meta))
    return path


def data_lines(csv_text: str) -> list[str]:
    """CSV lines without the metadata comments."""
    return [ln for ln in csv_text.splitlines() if not ln.startswith("#")]
