"""Estimates, confidence intervals and consistency audits for simulation runs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .engine import COUNT_KEYS, RawTrace

METRICS = ("cbp", "hdp", "cdp", "utilization", "mean_qhc", "mean_qoc", "new_renege",
           "hdp_rt", "hdp_nrt")

LITTLE_TOLERANCE = 0.05


@dataclass(frozen=True)
class Estimate:
    """Point estimate with a CI half-width over ``n`` replications.

    ``mean`` is ``None`` when the metric is undefined in every replication
    (e.g. CDP with no admitted call finishing).
    """

    mean: float | None
    half_width: float
    n: int

    @property
    def low(self) -> float:
        return self.mean - self.half_width

    @property
    def high(self) -> float:
        return self.mean + self.half_width

    def covers(self, value: float) -> bool:
        return self.mean is not None and self.low <= value <= self.high


@dataclass
class MetricsReport:
    estimates: dict[str, Estimate]
    per_replication: dict[str, list]
    counts: dict[str, int]
    level: float
    replications: int
    n_channels: int
    window: float
    busy_integral: float
    qhc_integral: float
    qoc_integral: float
    wait_hc: float
    wait_oc: float
    busy_min: int
    busy_max: int
    extra: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> Estimate:
        return self.estimates[name]


def _ratio(num: float, den: float) -> float | None:
    return num / den if den > 0 else None


def replication_metrics(tr: RawTrace) -> dict[str, float | None]:
    """Metrics of one replication; ``None`` marks a 0/0 ratio."""
    c = tr.counts
    ho_resolved = c["ho_arrivals"] - c["ho_censored_queue"]
    w = tr.window
    return {
        "cbp": _ratio(c["new_blocked"], c["new_arrivals"]),
        "hdp": _ratio(c["ho_dropped"] + c["ho_reneged"], ho_resolved),
        "cdp": _ratio(c["calls_dropped"], c["calls_completed"] + c["calls_dropped"]),
        "utilization": tr.busy_integral / (tr.n_channels * w),
        "mean_qhc": tr.qhc_integral / w,
        "mean_qoc": tr.qoc_integral / w,
        "new_renege": _ratio(c["new_reneged"], c["new_arrivals"] - c["new_censored_queue"]),
        "hdp_rt": _ratio(c["ho_failed_rt"], c["ho_arrivals_rt"] - c["ho_censored_rt"]),
        "hdp_nrt": _ratio(c["ho_failed_nrt"], c["ho_arrivals_nrt"] - c["ho_censored_nrt"]),
    }


def t_interval(values: Sequence[float], level: float = 0.95) -> Estimate:
    """Student-t confidence interval for the mean of i.i.d. values."""
    x = np.asarray([v for v in values if v is not None], dtype=float)
    k = len(x)
    if k == 0:
        return Estimate(None, math.nan, 0)
    mean = float(x.mean())
    if k < 2:
        return Estimate(mean, math.nan, k)
    sd = float(x.std(ddof=1))
    half = float(sps.t.ppf(0.5 + level / 2, k - 1) * sd / math.sqrt(k)) if sd > 0 else 0.0
    return Estimate(mean, half, k)


def summarize(traces: Sequence[RawTrace], warmup: float | None = None, level: float = 0.95,
              ci: bool = True) -> MetricsReport:
    """Aggregate replications into point estimates and t-intervals.

    The engine already drops everything before the scenario's warmup;
    ``warmup`` is checked against it.
    """
    if not traces:
        raise ValueError("no replications to summarize")
    if ci and len(traces) < 2:
        raise ValueError("confidence intervals need at least 2 replications")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if warmup is not None and any(tr.warmup != warmup for tr in traces):
        raise ValueError("traces were truncated at a different warmup")
    traces = sorted(traces, key=lambda tr: tr.replication)
    per_rep = {m: [] for m in METRICS}
    for tr in traces:
        for m, v in replication_metrics(tr).items():
            per_rep[m].append(v)
    estimates = {}
    for m, vals in per_rep.items():
        e = t_interval(vals, level)
        if not ci:
            e = Estimate(e.mean, math.nan, e.n)
        estimates[m] = e
    counts = {k: sum(tr.counts[k] for tr in traces) for k in COUNT_KEYS}
    return MetricsReport(
        estimates=estimates,
        per_replication=per_rep,
        counts=counts,
        level=level,
        replications=len(traces),
        n_channels=traces[0].n_channels,
        window=sum(tr.window for tr in traces),
        busy_integral=sum(tr.busy_integral for tr in traces),
        qhc_integral=sum(tr.qhc_integral for tr in traces),
        qoc_integral=sum(tr.qoc_integral for tr in traces),
        wait_hc=sum(tr.wait_hc for tr in traces),
        wait_oc=sum(tr.wait_oc for tr in traces),
        busy_min=min(tr.busy_min for tr in traces),
        busy_max=max(tr.busy_max for tr in traces),
    )


def paired_difference(a: Sequence[float], b: Sequence[float], level: float = 0.95) -> Estimate:
    """CI for the mean of ``a - b`` over paired replications."""
    if len(a) != len(b):
        raise ValueError("paired samples must have equal length")
    diffs = [x - y for x, y in zip(a, b) if x is not None and y is not None]
    return t_interval(diffs, level)


def not_significantly_worse(a: Sequence[float], b: Sequence[float], level: float = 0.95) -> bool:
    """True unless ``a`` is CI-separated above ``b`` in a paired comparison."""
    d = paired_difference(a, b, level)
    if d.mean is None:
        return True
    if math.isnan(d.half_width):
        return d.mean <= 0
    return d.low <= 0


def conditional_drop(traces: Sequence[RawTrace], lo: float, hi: float, level: float = 0.95) -> Estimate:
    """Drop fraction of queued handoffs whose patience lies in ``[lo, hi)``."""
    vals = []
    for tr in traces:
        sel = [dropped for p, dropped in tr.queued_handoffs if lo <= p < hi]
        vals.append(sum(sel) / len(sel) if sel else None)
    return t_interval(vals, level)


def batch_means(values: Sequence[float], n_batches: int, level: float = 0.95) -> Estimate:
    """Batch-means interval for the mean of a single correlated series."""
    x = np.asarray(values, dtype=float)
    if n_batches < 2:
        raise ValueError("need at least 2 batches")
    size = len(x) // n_batches
    if size == 0:
        raise ValueError("series shorter than the number of batches")
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return t_interval(means.tolist(), level)


def summarize_batches(tr: RawTrace, n_batches: int = 20, level: float = 0.95) -> dict[str, Estimate]:
    """Batch-means estimates from one long run recorded with ``keep_samples``.

    The observation window is cut into equal time slices; each slice yields
    one CBP, HDP and utilization value.
    """
    if tr.samples is None:
        raise ValueError("run the engine with keep_samples=True for batch means")
    if n_batches < 2:
        raise ValueError("need at least 2 batches")
    edges = np.linspace(tr.warmup, tr.horizon, n_batches + 1)
    att = np.array(tr.samples["attempts"], dtype=float).reshape(-1, 3)
    out: dict[str, Estimate] = {}
    for name, is_new in (("cbp", 1.0), ("hdp", 0.0)):
        sel = att[att[:, 1] == is_new]
        idx = np.clip(np.searchsorted(edges, sel[:, 0], side="right") - 1, 0, n_batches - 1)
        tot = np.bincount(idx, minlength=n_batches)
        bad = np.bincount(idx, weights=sel[:, 2], minlength=n_batches)
        vals = [b / t if t else None for b, t in zip(bad, tot)]
        out[name] = t_interval(vals, level)
    # busy level is piecewise constant between logged event times
    log = np.array([(0.0, 0.0)] + tr.samples["busy"], dtype=float)
    times = np.append(log[:, 0], tr.horizon)
    held = log[:, 1]  # level on [times[j], times[j+1])
    area = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        seg = np.clip(times[1:], lo, hi) - np.clip(times[:-1], lo, hi)
        area.append(float(np.dot(seg, held)) / ((hi - lo) * tr.n_channels))
    out["utilization"] = t_interval(area, level)
    return out


@dataclass(frozen=True)
class AuditFinding:
    check: str
    passed: bool
    detail: str = ""


def _little(integral: float, wait_sum: float, tol: float) -> tuple[bool, str]:
    scale = max(integral, wait_sum)
    if scale < 1e-9:
        return True, "queue unused"
    resid = abs(integral - wait_sum) / scale
    return resid <= tol, f"relative residual {resid:.4f}"


def audit(report: MetricsReport, little_tol: float = LITTLE_TOLERANCE) -> list[AuditFinding]:
    """Conservation identities, occupancy bounds and Little's law per queue."""
    c = report.counts
    found = []

    def eq(name, lhs, rhs):
        found.append(AuditFinding(name, lhs == rhs, f"{lhs} vs {rhs}"))

    eq("new-call conservation", c["new_arrivals"], c["new_admitted"] + c["new_enqueued"] + c["new_blocked"])
    eq("new-call queue conservation", c["new_enqueued"],
       c["new_promoted"] + c["new_reneged"] + c["new_censored_queue"])
    eq("handoff conservation", c["ho_arrivals"], c["ho_admitted"] + c["ho_enqueued"] + c["ho_dropped"])
    eq("handoff queue conservation", c["ho_enqueued"],
       c["ho_promoted"] + c["ho_reneged"] + c["ho_censored_queue"])
    eq("handoff class split", c["ho_arrivals"], c["ho_arrivals_rt"] + c["ho_arrivals_nrt"])
    eq("handoff failure split", c["ho_dropped"] + c["ho_reneged"], c["ho_failed_rt"] + c["ho_failed_nrt"])
    found.append(AuditFinding(
        "call lifecycle accounting",
        c["calls_completed"] + c["calls_dropped"] <= c["calls_admitted_new"],
        f"{c['calls_completed']} + {c['calls_dropped']} <= {c['calls_admitted_new']}"))
    found.append(AuditFinding(
        "busy within [0, N]", 0 <= report.busy_min and report.busy_max <= report.n_channels,
        f"[{report.busy_min}, {report.busy_max}] with N={report.n_channels}"))
    bad = [m for m, e in report.estimates.items()
           if m not in ("mean_qhc", "mean_qoc") and e.mean is not None and not 0 <= e.mean <= 1]
    found.append(AuditFinding("probabilities within [0, 1]", not bad, ", ".join(bad)))
    ok, detail = _little(report.qhc_integral, report.wait_hc, little_tol)
    found.append(AuditFinding("Little's law, handoff queue", ok, detail))
    ok, detail = _little(report.qoc_integral, report.wait_oc, little_tol)
    found.append(AuditFinding("Little's law, new-call queue", ok, detail))
    return found


def audit_passed(report: MetricsReport) -> bool:
    return all(f.passed for f in audit(report))
