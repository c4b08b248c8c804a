import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from handoffsim.model import CallKind, Scenario, validate_scenario
from handoffsim.traffic import (
    STREAM_LABELS, RngStream, exponential_from_uniform, mean_mixture_holding,
    mixture_holding_cdf, next_interarrival, sample_dwell, sample_holding, streams_for,
)


def test_uniforms_in_half_open_unit_interval():
    rs = RngStream(1, "holding")
    u = np.array([rs.uniform() for _ in range(20_000)])
    assert (u > 0).all() and (u <= 1).all()


def test_stream_is_reproducible():
    a = RngStream(99, "dwell", 3)
    b = RngStream(99, "dwell", 3)
    assert [a.uniform() for _ in range(5000)] == [b.uniform() for _ in range(5000)]


def test_streams_are_distinct_by_label_and_replication():
    draws = {}
    for label in STREAM_LABELS:
        for rep in (0, 1):
            rs = RngStream(5, label, rep)
            draws[(label, rep)] = tuple(rs.uniform() for _ in range(4))
    assert len(set(draws.values())) == len(draws)


def test_streams_for_covers_labels():
    assert set(streams_for(1, 0)) == set(STREAM_LABELS)


def test_exponential_ks():
    rs = RngStream(2024, "new-arrivals")
    x = [next_interarrival(rs, 2.5) for _ in range(20_000)]
    assert sps.kstest(x, "expon", args=(0, 1 / 2.5)).pvalue > 0.01


def test_inverse_cdf():
    assert exponential_from_uniform(1.0, 3.0) == 0.0
    assert exponential_from_uniform(math.exp(-2.0), 4.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        exponential_from_uniform(0.0, 1.0)


def test_zero_rate_means_never():
    rs = RngStream(1, "renege")
    assert rs.exponential(0.0) == math.inf


def test_interarrival_rejects_bad_rate():
    with pytest.raises(ValueError):
        next_interarrival(RngStream(1, "new-arrivals"), 0.0)


def test_holding_and_dwell_means():
    s = validate_scenario(Scenario(mu_new=2.0, mu_handoff=0.5, eta_dwell=4.0))
    rs = RngStream(3, "holding")
    new = np.mean([sample_holding(rs, CallKind.NEW, s) for _ in range(40_000)])
    ho = np.mean([sample_holding(rs, CallKind.HANDOFF, s) for _ in range(40_000)])
    dw = np.mean([sample_dwell(RngStream(3, "dwell"), s) for _ in range(1)] +
                 [sample_dwell(rs, s) for _ in range(40_000)])
    assert new == pytest.approx(0.5, rel=0.03)
    assert ho == pytest.approx(2.0, rel=0.03)
    assert dw == pytest.approx(0.25, rel=0.03)


def test_mixture_matches_hand_computation():
    s = validate_scenario(Scenario(lambda_new=3.0, lambda_handoff=1.0, mu_new=1.0, mu_handoff=2.0))
    t = 0.7
    expected = 0.75 * (1 - math.exp(-t)) + 0.25 * (1 - math.exp(-2 * t))
    assert mixture_holding_cdf(t, s) == pytest.approx(expected)
    assert mean_mixture_holding(s) == pytest.approx(0.75 * 1.0 + 0.25 * 0.5)


def test_mixture_rejects_negative_time():
    with pytest.raises(ValueError):
        mixture_holding_cdf(-1.0, validate_scenario(Scenario()))


@settings(max_examples=60, deadline=None)
@given(ln=st.floats(0.1, 10), lh=st.floats(0.1, 10), mn=st.floats(0.1, 10), mh=st.floats(0.1, 10),
       t1=st.floats(0, 20), t2=st.floats(0, 20))
def test_mixture_is_a_cdf(ln, lh, mn, mh, t1, t2):
    s = validate_scenario(Scenario(lambda_new=ln, lambda_handoff=lh, mu_new=mn, mu_handoff=mh))
    lo, hi = sorted((t1, t2))
    assert mixture_holding_cdf(0.0, s) == 0.0
    assert 0.0 <= mixture_holding_cdf(lo, s) <= mixture_holding_cdf(hi, s) <= 1.0


def test_mixture_sample_ks():
    """Sampling the kind by arrival share and then the holding time reproduces the CDF."""
    s = validate_scenario(Scenario(lambda_new=2.0, lambda_handoff=1.0, mu_new=1.0, mu_handoff=3.0))
    rs = RngStream(11, "holding")
    x = []
    for _ in range(20_000):
        kind = CallKind.NEW if rs.uniform() <= 2 / 3 else CallKind.HANDOFF
        x.append(sample_holding(rs, kind, s))
    assert sps.kstest(x, lambda t: np.array([mixture_holding_cdf(v, s) for v in np.atleast_1d(t)])).pvalue > 0.01
