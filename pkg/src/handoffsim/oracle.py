"""Exact steady-state results used to validate the simulator.

The chains aggregate call kinds: a busy channel frees at the effective rate
``mu_bar = mu_H + eta_dwell`` (conversation ends or the mobile leaves),
where ``1/mu_H`` is the arrival-weighted mean holding time.  This is exact
when ``mu_new == mu_handoff`` and an approximation otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Policy, Scenario, validate_scenario
from .traffic import mean_mixture_holding


class OracleError(ValueError):
    """The requested analytic model does not apply to this scenario."""


def erlang_b(n: int, a: float) -> float:
    """Blocking probability of an M/M/n/n loss system offered ``a`` erlangs."""
    if n < 0 or a < 0:
        raise ValueError("n and a must be non-negative")
    b = 1.0
    for k in range(1, n + 1):
        b = a * b / (k + a * b)
    return b


def effective_service_rate(s: Scenario) -> float:
    """Rate at which one busy channel frees: completion or dwell-out."""
    return 1.0 / mean_mixture_holding(s) + s.eta_dwell


def guard_chain_pi(n: int, r: int, lam_new: float, lam_ho: float, mu_bar: float) -> np.ndarray:
    """Stationary distribution of the guard-channel birth-death chain."""
    p = [1.0]
    for k in range(1, n + 1):
        birth = lam_new + lam_ho if k - 1 < n - r else lam_ho
        p.append(p[-1] * birth / (k * mu_bar))
    pi = np.array(p)
    return pi / pi.sum()


def guard_chain_metrics(s: Scenario) -> dict:
    """CBP, HDP and utilization of the queueless guard-channel policy.

    ``no-priority`` is accepted as the ``R = 0`` case.
    """
    s = validate_scenario(s)
    if s.policy is Policy.GUARD:
        r = s.guard_channels
    elif s.policy is Policy.NO_PRIORITY:
        r = 0
    else:
        raise OracleError(f"guard chain does not model policy {s.policy.value!r}")
    n = s.n_channels
    pi = guard_chain_pi(n, r, s.lambda_new, s.lambda_handoff, effective_service_rate(s))
    return {
        "pi": pi,
        "cbp": float(pi[n - r:].sum()),
        "hdp": float(pi[n]),
        "utilization": float(np.dot(np.arange(n + 1), pi) / n),
        "mean_qhc": 0.0,
        "mean_qoc": 0.0,
    }


@dataclass(frozen=True)
class CtmcModel:
    """Dual-queue chain over states ``(busy, q_hc, q_oc)``."""

    states: tuple[tuple[int, int, int], ...]
    index: dict
    generator: np.ndarray

    @property
    def size(self) -> int:
        return len(self.states)


def enumerate_states(n: int, r: int, cap_hc: int, cap_oc: int) -> list[tuple[int, int, int]]:
    out = []
    for b in range(n + 1):
        for h in range(cap_hc + 1 if b == n else 1):
            for o in range(cap_oc + 1 if b >= n - r else 1):
                out.append((b, h, o))
    return out


def build_generator(s: Scenario) -> CtmcModel:
    """Generator matrix of the guard-dual-queue system with reneging."""
    s = validate_scenario(s)
    if s.policy is not Policy.GUARD_DUAL_QUEUE:
        raise OracleError("the dual-queue chain models only guard-dual-queue")
    if not math.isfinite(s.cap_handoff_queue):
        raise OracleError("the dual-queue chain needs a finite handoff queue capacity")
    n, r = s.n_channels, s.guard_channels
    c_hc, c_oc = int(s.cap_handoff_queue), s.cap_new_queue
    states = enumerate_states(n, r, c_hc, c_oc)
    index = {st: i for i, st in enumerate(states)}
    mu_bar = effective_service_rate(s)
    lam_n, lam_h = s.lambda_new, s.lambda_handoff
    th_h, th_n = s.theta_renege_handoff, s.theta_renege_new
    q = np.zeros((len(states), len(states)))

    def add(src, dst, rate):
        if rate > 0:
            q[index[src], index[dst]] += rate

    for st in states:
        b, h, o = st
        if b < n - r:
            add(st, (b + 1, h, o), lam_n)
        elif o < c_oc:
            add(st, (b, h, o + 1), lam_n)
        if b < n:
            add(st, (b + 1, h, o), lam_h)
        elif h < c_hc:
            add(st, (b, h + 1, o), lam_h)
        if b > 0:
            if h > 0:
                add(st, (b, h - 1, o), b * mu_bar)
            elif o > 0 and b - 1 < n - r:
                add(st, (b, h, o - 1), b * mu_bar)
            else:
                add(st, (b - 1, h, o), b * mu_bar)
        if h > 0:
            add(st, (b, h - 1, o), h * th_h)
        if o > 0:
            add(st, (b, h, o - 1), o * th_n)
    np.fill_diagonal(q, -q.sum(axis=1))
    return CtmcModel(tuple(states), index, q)


def steady_state(m: CtmcModel) -> np.ndarray:
    """Solve ``pi Q = 0`` with the normalization replacing one balance row."""
    q = m.generator
    k = q.shape[0]
    a = q.T.copy()
    a[-1, :] = 1.0
    rhs = np.zeros(k)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise OracleError("generator is not irreducible (singular balance system)") from exc
    if np.linalg.cond(a) > 1e12:
        raise OracleError("balance system is numerically singular")
    pi[np.abs(pi) < 1e-300] = 0.0
    if pi.min() < -1e-10:
        raise OracleError("negative stationary probability; chain is not irreducible")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def metrics_from_pi(pi: np.ndarray, m: CtmcModel, s: Scenario) -> dict:
    """Loss probabilities, utilization and mean queue lengths.

    ``cbp`` counts new calls refused at the arrival instant (PASTA);
    reneging new calls are reported separately as ``new_renege``.
    ``hdp`` counts handoffs refused on arrival plus the renege flow out of
    the handoff queue, both per offered handoff.
    """
    s = validate_scenario(s)
    n, r = s.n_channels, s.guard_channels
    c_hc, c_oc = int(s.cap_handoff_queue), s.cap_new_queue
    st = np.array(m.states)
    b, h, o = st[:, 0], st[:, 1], st[:, 2]
    new_refused = float(pi[(b >= n - r) & (o == c_oc)].sum())
    ho_refused = float(pi[(b == n) & (h == c_hc)].sum())
    mean_h = float(np.dot(pi, h))
    mean_o = float(np.dot(pi, o))
    new_renege = s.theta_renege_new * mean_o / s.lambda_new
    ho_renege = s.theta_renege_handoff * mean_h / s.lambda_handoff
    return {
        "cbp": new_refused,
        "new_renege": new_renege,
        "new_loss": new_refused + new_renege,
        "hdp": ho_refused + ho_renege,
        "ho_refused": ho_refused,
        "utilization": float(np.dot(pi, b) / n),
        "mean_qhc": mean_h,
        "mean_qoc": mean_o,
    }


def dual_queue_metrics(s: Scenario) -> dict:
    m = build_generator(s)
    pi = steady_state(m)
    out = metrics_from_pi(pi, m, s)
    out["pi"] = pi
    return out


def analytic_metrics(s: Scenario) -> dict | None:
    """Oracle values for any scenario the chains cover, else ``None``."""
    s = validate_scenario(s)
    if s.policy in (Policy.GUARD, Policy.NO_PRIORITY):
        return guard_chain_metrics(s)
    if s.policy is Policy.GUARD_DUAL_QUEUE and math.isfinite(s.cap_handoff_queue):
        return dual_queue_metrics(s)
    return None


def handoff_attempt_probability(s: Scenario) -> float:
    """Chance that a call in service leaves the cell before its conversation ends.

    Uses the new-call holding rate: dropping probability is measured over
    calls that started in the cell.
    """
    return s.eta_dwell / (s.eta_dwell + s.mu_new)


def cdp_geometric(q: float, hdp: float) -> float:
    """Probability a call is eventually dropped when each cell visit ends in
    a handoff attempt with probability ``q`` and each attempt fails with
    probability ``hdp`` independently.
    """
    if not 0 <= hdp <= 1 or not 0 <= q <= 1:
        raise ValueError("probabilities must lie in [0, 1]")
    denom = 1.0 - q * (1.0 - hdp)
    if denom == 0:
        return 0.0  # q = 1, hdp = 0: the call hands off forever and never drops
    return q * hdp / denom


def cdp_from_hdp(hdp: float, s: Scenario) -> float:
    return cdp_geometric(handoff_attempt_probability(s), hdp)


def consistent_handoff_rate(s: Scenario, tol: float = 1e-10, max_iter: int = 500) -> float:
    """Handoff arrival rate equal to the dwell-out rate the cell itself produces.

    Iterates ``lambda_h <- eta_dwell * E[busy](lambda_h)`` from the
    scenario's rate.  The map is increasing and bounded by ``N * eta``, so
    the iteration converges monotonically.
    """
    s = validate_scenario(s)
    if s.eta_dwell == 0:
        return 0.0
    lam = s.lambda_handoff
    for _ in range(max_iter):
        res = analytic_metrics(s.with_(lambda_handoff=lam))
        if res is None:
            raise OracleError(f"no analytic model for policy {s.policy.value!r}")
        nxt = s.eta_dwell * res["utilization"] * s.n_channels
        if abs(nxt - lam) < tol * max(1.0, lam):
            return nxt
        lam = nxt
    raise OracleError("handoff-rate fixed point did not converge")
