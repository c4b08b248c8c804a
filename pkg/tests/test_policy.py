import itertools

import pytest
from hypothesis import given, strategies as st

from handoffsim.model import (
    Call, CallKind, Discipline, Policy, Scenario, ServiceClass, validate_scenario,
)
from handoffsim.policy import (
    DECISION_RANK, Decision, OccupancyState, PolicyStateError, ServiceAction,
    check_state, compile_arrival, hc_priority_key, on_arrival, on_release, pick_handoff,
)

N, R, C_HC, C_OC = 5, 2, 3, 2


def scen(policy, n=N, r=R, c_hc=C_HC, c_oc=C_OC):
    return validate_scenario(Scenario(n_channels=n, guard_channels=r, cap_handoff_queue=c_hc,
                                      cap_new_queue=c_oc, policy=policy))


def call(kind, cls=ServiceClass.REAL_TIME):
    return Call(0, kind, cls, 0.0, 1.0)


def reachable(s):
    n, r = s.n_channels, s.guard_channels
    for b in range(n + 1):
        for h in range(int(s.cap_handoff_queue) + 1 if b == n else 1):
            for o in range(s.cap_new_queue + 1 if b >= n - r else 1):
                yield OccupancyState(b, 0, h, o)


@pytest.mark.parametrize("policy", list(Policy))
def test_compiled_rules_match_reference(policy):
    s = scen(policy)
    decide = compile_arrival(policy, s)
    for st_ in reachable(s):
        for kind, cls, waiting in itertools.product(CallKind, ServiceClass, (False, True)):
            ref = on_arrival(policy, st_, call(kind, cls), s, waiting)
            fast = decide(st_.busy, st_.q_hc_len, st_.q_oc_len, kind is CallKind.NEW,
                          cls is ServiceClass.NON_REAL_TIME, waiting)
            assert fast is ref, (st_, kind, cls, waiting)


def test_no_priority_is_plain_loss_system():
    s = scen(Policy.NO_PRIORITY)
    for b in range(N + 1):
        for kind in CallKind:
            d = on_arrival(Policy.NO_PRIORITY, OccupancyState(b), call(kind), s)
            if b < N:
                assert d is Decision.ADMIT_CHANNEL
            else:
                assert d is (Decision.BLOCK if kind is CallKind.NEW else Decision.DROP)


def test_guard_thresholds():
    s = scen(Policy.GUARD)
    new = [on_arrival(Policy.GUARD, OccupancyState(b), call(CallKind.NEW), s) for b in range(N + 1)]
    ho = [on_arrival(Policy.GUARD, OccupancyState(b), call(CallKind.HANDOFF), s) for b in range(N + 1)]
    assert new == [Decision.ADMIT_CHANNEL] * (N - R) + [Decision.BLOCK] * (R + 1)
    assert ho == [Decision.ADMIT_CHANNEL] * N + [Decision.DROP]


def test_guard_with_zero_reserve_equals_no_priority():
    g, p = scen(Policy.GUARD, r=0), scen(Policy.NO_PRIORITY, r=0)
    for b in range(N + 1):
        for kind in CallKind:
            st_ = OccupancyState(b)
            assert on_arrival(Policy.GUARD, st_, call(kind), g) is on_arrival(Policy.NO_PRIORITY, st_, call(kind), p)


def test_dual_queue_enqueues_until_capacity():
    pol = Policy.GUARD_DUAL_QUEUE
    s = scen(pol)
    assert on_arrival(pol, OccupancyState(N - R, 0, 0, 0), call(CallKind.NEW), s) is Decision.ENQUEUE_NEW
    assert on_arrival(pol, OccupancyState(N - R, 0, 0, C_OC), call(CallKind.NEW), s) is Decision.BLOCK
    assert on_arrival(pol, OccupancyState(N, 0, 0, 0), call(CallKind.HANDOFF), s) is Decision.ENQUEUE_HANDOFF
    assert on_arrival(pol, OccupancyState(N, 0, C_HC, 0), call(CallKind.HANDOFF), s) is Decision.DROP


def test_zero_capacity_dual_queue_equals_guard():
    d = scen(Policy.GUARD_DUAL_QUEUE, c_hc=0, c_oc=0)
    g = scen(Policy.GUARD, c_hc=0, c_oc=0)
    for b in range(N + 1):
        for kind in CallKind:
            st_ = OccupancyState(b)
            assert (on_arrival(Policy.GUARD_DUAL_QUEUE, st_, call(kind), d)
                    is on_arrival(Policy.GUARD, st_, call(kind), g))


def test_sharing_keeps_guard_for_waiting_rt():
    pol = Policy.GUARD_DUAL_QUEUE_SHARING
    s = scen(pol)
    nrt = call(CallKind.HANDOFF, ServiceClass.NON_REAL_TIME)
    st_ = OccupancyState(N - 1, 0, 0, 0)
    assert on_arrival(pol, st_, nrt, s, rt_handoff_waiting=False) is Decision.ADMIT_CHANNEL
    assert on_arrival(pol, st_, nrt, s, rt_handoff_waiting=True) is Decision.ENQUEUE_HANDOFF
    # a shared channel is never withheld
    assert on_arrival(pol, OccupancyState(0), nrt, s, rt_handoff_waiting=True) is Decision.ADMIT_CHANNEL


@pytest.mark.parametrize("policy", list(Policy))
def test_monotone_in_occupancy(policy):
    """Adding a busy channel or a queued call never improves an arrival's outcome."""
    s = scen(policy)
    states = list(reachable(s))
    for a, b in itertools.product(states, states):
        if b.busy >= a.busy and b.q_hc_len >= a.q_hc_len and b.q_oc_len >= a.q_oc_len:
            for kind in CallKind:
                ra = DECISION_RANK[on_arrival(policy, a, call(kind), s)]
                rb = DECISION_RANK[on_arrival(policy, b, call(kind), s)]
                assert rb <= ra


def test_handoff_gets_a_channel_whenever_a_new_call_does():
    for policy in Policy:
        s = scen(policy)
        for st_ in reachable(s):
            if on_arrival(policy, st_, call(CallKind.NEW), s) is Decision.ADMIT_CHANNEL:
                assert on_arrival(policy, st_, call(CallKind.HANDOFF), s) is Decision.ADMIT_CHANNEL


@given(b=st.integers(-2, N + 2), h=st.integers(-1, C_HC + 2), o=st.integers(-1, C_OC + 2),
       g=st.integers(-1, R + 1))
def test_unreachable_states_are_rejected(b, h, o, g):
    s = scen(Policy.GUARD_DUAL_QUEUE_SHARING)
    st_ = OccupancyState(b, g, h, o)
    valid = (0 <= b <= N and 0 <= h <= C_HC and 0 <= o <= C_OC and (h == 0 or b == N)
             and (o == 0 or b >= N - R) and 0 <= g <= min(R, b))
    if valid:
        check_state(st_, s)
    else:
        with pytest.raises(PolicyStateError):
            check_state(st_, s)


def test_release_serves_handoffs_first():
    s = scen(Policy.GUARD_DUAL_QUEUE)
    pol = Policy.GUARD_DUAL_QUEUE
    assert on_release(pol, OccupancyState(N - 1, 0, 1, 1), s) is ServiceAction.PROMOTE_HANDOFF
    assert on_release(pol, OccupancyState(N - R - 1, 0, 0, 1), s) is ServiceAction.PROMOTE_NEW
    assert on_release(pol, OccupancyState(N - R, 0, 0, 1), s) is ServiceAction.NONE
    assert on_release(Policy.GUARD, OccupancyState(N - 1, 0, 0, 0), scen(Policy.GUARD)) is ServiceAction.NONE


def test_priority_keys():
    a = Call(1, CallKind.HANDOFF, ServiceClass.REAL_TIME, 0.0, 1.0)
    b = Call(2, CallKind.HANDOFF, ServiceClass.REAL_TIME, 0.0, 1.0)
    a.queue_seq, a.deadline = 0, 9.0
    b.queue_seq, b.deadline = 1, 3.0
    assert hc_priority_key(a, 1.0, Discipline.FIFO) < hc_priority_key(b, 1.0, Discipline.FIFO)
    assert hc_priority_key(b, 1.0, Discipline.DWELL_PRIORITY) < hc_priority_key(a, 1.0, Discipline.DWELL_PRIORITY)


def test_pick_handoff():
    q = [call(CallKind.HANDOFF, ServiceClass.NON_REAL_TIME), call(CallKind.HANDOFF, ServiceClass.REAL_TIME)]
    assert pick_handoff(Policy.GUARD_DUAL_QUEUE, q) == 0
    assert pick_handoff(Policy.GUARD_DUAL_QUEUE_SHARING, q) == 1
    assert pick_handoff(Policy.GUARD_DUAL_QUEUE_SHARING, q[:1]) == 0
    with pytest.raises(PolicyStateError):
        pick_handoff(Policy.GUARD_DUAL_QUEUE, [])
