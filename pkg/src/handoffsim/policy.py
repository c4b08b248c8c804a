"""Admission control: which calls get a channel, a queue slot, or nothing.

Everything here is a pure function of the occupancy state, so the same
rules drive the simulator and can be checked exhaustively in tests.
"""

from __future__ import annotations

import enum
from typing import NamedTuple, Sequence

from .model import Call, CallKind, Discipline, Policy, Scenario, ServiceClass


class PolicyStateError(RuntimeError):
    """The caller handed over an occupancy state no policy can reach."""


class Decision(enum.Enum):
    ADMIT_CHANNEL = "admit"
    ENQUEUE_HANDOFF = "enqueue-handoff"
    ENQUEUE_NEW = "enqueue-new"
    BLOCK = "block"
    DROP = "drop"


class ServiceAction(enum.Enum):
    PROMOTE_HANDOFF = "promote-handoff"
    PROMOTE_NEW = "promote-new"
    NONE = "none"


# Admit > Enqueue > reject
DECISION_RANK = {
    Decision.ADMIT_CHANNEL: 2,
    Decision.ENQUEUE_HANDOFF: 1,
    Decision.ENQUEUE_NEW: 1,
    Decision.BLOCK: 0,
    Decision.DROP: 0,
}


class OccupancyState(NamedTuple):
    busy: int
    busy_guard_nrt: int = 0
    q_hc_len: int = 0
    q_oc_len: int = 0


def check_state(state: OccupancyState, s: Scenario) -> None:
    n, r = s.n_channels, s.guard_channels
    if not 0 <= state.busy <= n:
        raise PolicyStateError(f"busy={state.busy} outside [0, {n}]")
    if state.q_hc_len < 0 or state.q_hc_len > s.cap_handoff_queue:
        raise PolicyStateError(f"q_hc_len={state.q_hc_len} outside handoff queue capacity")
    if state.q_oc_len < 0 or state.q_oc_len > s.cap_new_queue:
        raise PolicyStateError(f"q_oc_len={state.q_oc_len} outside new-call queue capacity")
    if state.q_hc_len > 0 and state.busy != n:
        raise PolicyStateError("handoff calls queued while a channel is free")
    if state.q_oc_len > 0 and state.busy < n - r:
        raise PolicyStateError("new calls queued while a shared channel is free")
    if not 0 <= state.busy_guard_nrt <= min(r, state.busy):
        raise PolicyStateError("borrowed guard channel count out of range")


def uses_queues(policy: Policy) -> bool:
    return policy in (Policy.GUARD_DUAL_QUEUE, Policy.GUARD_DUAL_QUEUE_SHARING)


def on_arrival(
    policy: Policy,
    state: OccupancyState,
    call: Call,
    s: Scenario,
    rt_handoff_waiting: bool = False,
) -> Decision:
    """Decide what happens to an arriving call.

    ``rt_handoff_waiting`` only matters for the sharing policy: a
    non-real-time handoff may take a guard channel only while no real-time
    handoff is waiting for one.
    """
    check_state(state, s)
    n, r = s.n_channels, s.guard_channels
    busy = state.busy
    is_new = call.kind is CallKind.NEW
    reject = Decision.BLOCK if is_new else Decision.DROP

    if policy is Policy.NO_PRIORITY:
        return Decision.ADMIT_CHANNEL if busy < n else reject

    if is_new:
        if busy < n - r:
            return Decision.ADMIT_CHANNEL
        if uses_queues(policy) and state.q_oc_len < s.cap_new_queue:
            return Decision.ENQUEUE_NEW
        return reject

    if busy < n:
        if (
            policy is Policy.GUARD_DUAL_QUEUE_SHARING
            and busy >= n - r
            and call.svc_class is ServiceClass.NON_REAL_TIME
            and rt_handoff_waiting
        ):
            pass  # guard channel kept for the waiting real-time handoff
        else:
            return Decision.ADMIT_CHANNEL
    if uses_queues(policy) and state.q_hc_len < s.cap_handoff_queue:
        return Decision.ENQUEUE_HANDOFF
    return reject


def on_release(policy: Policy, state: OccupancyState, s: Scenario) -> ServiceAction:
    """Pick the queue to serve from after a channel frees.

    ``state.busy`` is the occupancy after the release.  Handoffs always go
    first; a waiting new call is served only if the freed channel is one of
    the shared ones.
    """
    if not uses_queues(policy):
        return ServiceAction.NONE
    if state.q_hc_len > 0:
        return ServiceAction.PROMOTE_HANDOFF
    if state.q_oc_len > 0 and state.busy < s.n_channels - s.guard_channels:
        return ServiceAction.PROMOTE_NEW
    return ServiceAction.NONE


def hc_priority_key(call: Call, now: float, discipline: Discipline) -> tuple:
    """Handoff-queue ordering key; smaller keys are served first.

    Under dwell priority the call with the least time left before it leaves
    the overlap area goes first, ties by arrival order.
    """
    if discipline is Discipline.FIFO:
        return (call.queue_seq,)
    return (call.deadline - now, call.queue_seq)


def pick_handoff(policy: Policy, queue: Sequence[Call]) -> int:
    """Index of the queued handoff to promote; ``queue`` is in key order.

    The sharing policy hands a freed channel to the best-ranked real-time
    handoff if one waits.
    """
    if not queue:
        raise PolicyStateError("no handoff waiting")
    if policy is Policy.GUARD_DUAL_QUEUE_SHARING:
        for i, c in enumerate(queue):
            if c.svc_class is ServiceClass.REAL_TIME:
                return i
    return 0


def compile_arrival(policy: Policy, s: Scenario):
    """Specialize :func:`on_arrival` to one policy and scenario.

    The returned ``decide(busy, q_hc_len, q_oc_len, is_new, is_nrt,
    rt_waiting)`` skips state validation; the engine maintains the state
    invariants itself.  Tests check it against :func:`on_arrival` over every
    reachable state.
    """
    n, r = s.n_channels, s.guard_channels
    cap_hc, cap_oc = s.cap_handoff_queue, s.cap_new_queue
    ADMIT, BLOCK, DROP = Decision.ADMIT_CHANNEL, Decision.BLOCK, Decision.DROP
    ENQ_NEW, ENQ_HO = Decision.ENQUEUE_NEW, Decision.ENQUEUE_HANDOFF

    if policy is Policy.NO_PRIORITY:
        def decide(busy, q_hc_len, q_oc_len, is_new, is_nrt, rt_waiting):
            if busy < n:
                return ADMIT
            return BLOCK if is_new else DROP
    elif policy is Policy.GUARD:
        def decide(busy, q_hc_len, q_oc_len, is_new, is_nrt, rt_waiting):
            if is_new:
                return ADMIT if busy < n - r else BLOCK
            return ADMIT if busy < n else DROP
    else:
        sharing = policy is Policy.GUARD_DUAL_QUEUE_SHARING

        def decide(busy, q_hc_len, q_oc_len, is_new, is_nrt, rt_waiting):
            if is_new:
                if busy < n - r:
                    return ADMIT
                return ENQ_NEW if q_oc_len < cap_oc else BLOCK
            if busy < n and not (sharing and is_nrt and rt_waiting and busy >= n - r):
                return ADMIT
            return ENQ_HO if q_hc_len < cap_hc else DROP
    return decide
