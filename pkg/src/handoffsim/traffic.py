"""Random variates for arrivals, holding, dwell and patience times.

Each variate role draws from its own stream so that a policy change never
shifts the arrival sample path; comparing policies at one seed therefore
uses common random numbers.  All exponentials are produced by inverse-CDF
from the stream's uniforms.
"""

from __future__ import annotations

import math

import numpy as np

from .model import CallKind, Scenario

STREAM_LABELS = ("new-arrivals", "handoff-arrivals", "holding", "dwell", "renege")

_BLOCK = 4096


def _label_key(label: str) -> int:
    # stable across interpreter runs (no str hash randomization)
    return int.from_bytes(label.encode(), "little") % (2**32)


class RngStream:
    """Deterministic uniform stream keyed by (seed, label, replication).

    ``uniform()`` returns values on (0, 1]; they are drawn from numpy in
    fixed-size blocks, so the sequence does not depend on how it is consumed.
    """

    __slots__ = ("label", "seed", "replication", "uniform")

    def __init__(self, seed: int, label: str, replication: int = 0):
        if label not in STREAM_LABELS:
            raise ValueError(f"unknown stream label {label!r}")
        self.label = label
        self.seed = seed
        self.replication = replication
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(_label_key(label), replication))
        self.uniform = _blocks(np.random.Generator(np.random.PCG64(ss))).__next__

    def exponential(self, rate: float) -> float:
        u = self.uniform()
        if rate == 0:
            return math.inf
        return -math.log(u) / rate


def _blocks(gen: np.random.Generator):
    while True:
        # 1 - U maps numpy's [0, 1) onto (0, 1], keeping log finite
        yield from (1.0 - gen.random(_BLOCK)).tolist()


def streams_for(seed: int, replication: int) -> dict[str, RngStream]:
    return {label: RngStream(seed, label, replication) for label in STREAM_LABELS}


def exponential_from_uniform(u: float, rate: float) -> float:
    """Inverse exponential CDF: the duration whose survival probability is ``u``."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    if not 0 < u <= 1:
        raise ValueError("u must lie in (0, 1]")
    return -math.log(u) / rate


def next_interarrival(stream: RngStream, rate: float) -> float:
    """Poisson-process gap: exponential with mean ``1/rate``."""
    if not rate > 0:
        raise ValueError("arrival rate must be positive")
    return -math.log(stream.uniform()) / rate


def sample_holding(stream: RngStream, kind: CallKind, s: Scenario) -> float:
    rate = s.mu_new if kind is CallKind.NEW else s.mu_handoff
    return -math.log(stream.uniform()) / rate


def sample_dwell(stream: RngStream, s: Scenario) -> float:
    """Cell-residence time; infinite when ``eta_dwell`` is zero."""
    return stream.exponential(s.eta_dwell)


def mixture_holding_cdf(t: float, s: Scenario) -> float:
    """CDF of the channel holding time seen across both call kinds.

    Each kind contributes in proportion to its share of the arrival rate.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    lam = s.lambda_new + s.lambda_handoff
    w_new = s.lambda_new / lam
    w_ho = s.lambda_handoff / lam
    return w_new * -math.expm1(-s.mu_new * t) + w_ho * -math.expm1(-s.mu_handoff * t)


def mean_mixture_holding(s: Scenario) -> float:
    """Mean of the mixed holding time, i.e. ``1/mu_H``."""
    lam = s.lambda_new + s.lambda_handoff
    return (s.lambda_new / lam) / s.mu_new + (s.lambda_handoff / lam) / s.mu_handoff
