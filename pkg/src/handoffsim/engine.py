"""Discrete-event simulation of one cell.

Calls that leave the cell while still talking (dwell expiry) are handed to
a statistically identical neighbour, and the simulated cell stands in for
that neighbour.  Re-offering the call at the instant it left would show it
the cell minus its own channel, so it could hardly ever fail.  Instead the
departing call waits in a transit pool and rides in on a later arrival of
the Poisson handoff stream: it skips a geometric number of handoff
arrivals (mean ``transit_lag``).  Counting arrivals rather than time keeps
the choice of carrier independent of the gap before it, so with enough
skips the continuation sees the cell exactly as a typical handoff arrival
does.  The handoff stream itself stays Poisson.  A handoff arrival with no
due pooled call is a fresh call from outside.
"""

from __future__ import annotations

import heapq
import math
from bisect import insort
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator

from . import policy as pol
from .model import (
    Call,
    CallKind,
    Discipline,
    Event,
    EventKind,
    Outcome,
    Policy,
    Scenario,
    ServiceClass,
    validate_scenario,
)
from .traffic import streams_for

COUNT_KEYS = (
    "new_arrivals", "new_admitted", "new_enqueued", "new_blocked",
    "new_promoted", "new_reneged", "new_censored_queue",
    "ho_arrivals", "ho_admitted", "ho_enqueued", "ho_dropped",
    "ho_promoted", "ho_reneged", "ho_censored_queue",
    "ho_continuations",
    "ho_arrivals_rt", "ho_failed_rt", "ho_arrivals_nrt", "ho_failed_nrt",
    "ho_censored_rt", "ho_censored_nrt",
    "calls_admitted_new", "calls_completed", "calls_dropped",
)


NEW_ARRIVAL = int(EventKind.NEW_ARRIVAL)
HANDOFF_ARRIVAL = int(EventKind.HANDOFF_ARRIVAL)
CHANNEL_RELEASE = int(EventKind.CHANNEL_RELEASE)
DWELL_EXPIRY = int(EventKind.DWELL_EXPIRY)
QUEUE_RENEGE = int(EventKind.QUEUE_RENEGE)


class EngineError(RuntimeError):
    """Internal consistency failure during a run."""


class FutureEventList:
    """Binary heap of events ordered by ``(time, seq)`` with cancellation.

    Cancelled entries stay in the heap and are skipped on pop.
    """

    def __init__(self):
        self._heap: list[tuple[float, int, int, int]] = []
        self._seq = 0
        self._live: dict[int, int] = {}  # call id -> seq of its pending event
        self._last = -math.inf

    def __len__(self) -> int:
        return len(self._live)

    def schedule(self, time: float, kind: int, call_id: int = -1) -> int:
        seq = self._seq
        self._seq += 1
        heapq.heappush(self._heap, (time, seq, kind, call_id))
        if call_id >= 0:
            if call_id in self._live:
                raise EngineError(f"call {call_id} already has a pending event")
            self._live[call_id] = seq
        return seq

    def cancel(self, call_id: int) -> None:
        if self._live.pop(call_id, None) is None:
            raise EngineError(f"no pending event for call {call_id}")

    def pop_raw(self) -> tuple[float, int, int, int] | None:
        """Next live ``(time, seq, kind, call_id)`` tuple, or None when empty."""
        heap = self._heap
        live = self._live
        while heap:
            ev = heapq.heappop(heap)
            cid = ev[3]
            if cid >= 0:
                if live.get(cid) != ev[1]:
                    continue
                del live[cid]
            if ev[0] < self._last:
                raise EngineError("event times went backwards")
            self._last = ev[0]
            return ev
        return None

    def pop(self) -> Event | None:
        ev = self.pop_raw()
        if ev is None:
            return None
        return Event(ev[0], ev[1], EventKind(ev[2]), ev[3])


@dataclass
class RawTrace:
    """Everything one replication produced, restricted to the observation
    window ``[warmup_time, sim_time]``.

    Probabilities are computed from ``counts``; censored attempts (still
    queued at the horizon) are counted separately and excluded.
    """

    replication: int
    warmup: float
    horizon: float
    n_channels: int
    counts: dict[str, int]
    busy_integral: float
    qhc_integral: float
    qoc_integral: float
    wait_hc: float
    wait_oc: float
    busy_min: int
    busy_max: int
    pool_left: int
    # (patience, dropped) for each queued handoff resolved in the window
    queued_handoffs: list[tuple[float, bool]] = field(default_factory=list)
    events: list[tuple[float, str, int, str]] | None = None
    samples: dict[str, list] | None = None

    @property
    def window(self) -> float:
        return self.horizon - self.warmup

    def event_lines(self) -> Iterator[str]:
        """Trace records as ``time<TAB>event<TAB>call<TAB>outcome`` lines."""
        for t, kind, cid, outcome in self.events or ():
            yield f"{t!r}\t{kind}\t{cid}\t{outcome}"


class CellSimulator:
    """Single-cell event loop for one replication.

    Not thread-safe; build one per replication.  The hot paths (arrival,
    release) are inlined in :meth:`run`; queue handling lives in methods.
    """

    def __init__(self, s: Scenario, replication: int = 0, *, record_events: bool = False,
                 keep_samples: bool = False):
        self.s = s = validate_scenario(s)
        self.replication = replication
        self.streams = streams_for(s.seed, replication)
        self.fel = FutureEventList()
        self.clock = 0.0
        self.busy = 0
        self.nrt_ho_busy = 0
        self.in_service: dict[int, Call] = {}
        self.q_hc: list[tuple[tuple, Call]] = []
        self.q_oc: deque[Call] = deque()
        self.rt_waiting = 0
        self.pool: list[tuple[float, int, Call]] = []  # heap by ready time
        self._next_id = 0
        self._queue_seq = 0
        self.counts = dict.fromkeys(COUNT_KEYS, 0)
        self.queued_handoffs: list[tuple[float, bool]] = []
        self.events = [] if record_events else None
        self.samples = {"busy": [], "attempts": []} if keep_samples else None
        self._busy_area = self._qhc_area = self._qoc_area = 0.0
        self._wait_hc = self._wait_oc = 0.0
        self._busy_min = s.n_channels
        self._busy_max = 0
        self._policy = Policy(s.policy)
        self._fifo = s.discipline is Discipline.FIFO
        self._decide = pol.compile_arrival(self._policy, s)

    def _log(self, kind: str, call: Call) -> None:
        if self.events is not None:
            self.events.append((self.clock, kind, call.id, call.outcome.value))

    def state(self) -> pol.OccupancyState:
        n, r = self.s.n_channels, self.s.guard_channels
        borrowed = 0
        if self.nrt_ho_busy and self.busy > n - r:
            borrowed = min(self.nrt_ho_busy, self.busy - (n - r))
        return pol.OccupancyState(self.busy, borrowed, len(self.q_hc), len(self.q_oc))

    def check(self) -> None:
        """Verify the occupancy invariants; raises :class:`EngineError`."""
        n = self.s.n_channels
        if not 0 <= self.busy <= n or self.busy != len(self.in_service):
            raise EngineError(f"busy={self.busy} inconsistent at t={self.clock}")
        if self.q_hc and self.busy != n:
            raise EngineError(f"handoff queued with a free channel at t={self.clock}")
        if self.q_oc and self.busy < n - self.s.guard_channels:
            raise EngineError(f"new call queued with a free shared channel at t={self.clock}")
        if len(self.q_hc) > self.s.cap_handoff_queue or len(self.q_oc) > self.s.cap_new_queue:
            raise EngineError(f"queue over capacity at t={self.clock}")
        if len(self.fel) != len(self.in_service) + sum(
                1 for _, c in self.q_hc if c.deadline < math.inf) + sum(
                1 for c in self.q_oc if c.deadline < math.inf):
            raise EngineError(f"pending timers do not match calls at t={self.clock}")

    # -- call lifecycle ----------------------------------------------------

    def _start_service(self, call: Call, t: float) -> None:
        self.busy += 1
        if self.busy > self._busy_max:
            self._busy_max = self.busy
        self.in_service[call.id] = call
        if call.kind is CallKind.HANDOFF and call.svc_class is ServiceClass.NON_REAL_TIME:
            self.nrt_ho_busy += 1
        if call.kind is CallKind.NEW and call.counted:
            call.started_new = True
            self.counts["calls_admitted_new"] += 1
        call.service_start = t
        if call.holding_remaining <= call.dwell_remaining:
            self.fel.schedule(t + call.holding_remaining, CHANNEL_RELEASE, call.id)
        else:
            self.fel.schedule(t + call.dwell_remaining, DWELL_EXPIRY, call.id)
        if self.events is not None:
            self._log("admit", call)

    def _enqueue(self, call: Call, t: float) -> None:
        call.enqueued_at = t
        call.deadline = t + call.patience
        call.queue_seq = self._queue_seq
        self._queue_seq += 1
        if call.kind is CallKind.HANDOFF:
            if call.counted:
                self.counts["ho_enqueued"] += 1
            key = (call.queue_seq,) if self._fifo else (call.deadline, call.queue_seq)
            insort(self.q_hc, (key, call))
            if call.svc_class is ServiceClass.REAL_TIME:
                self.rt_waiting += 1
        else:
            if call.counted:
                self.counts["new_enqueued"] += 1
            self.q_oc.append(call)
        if call.deadline < math.inf:
            self.fel.schedule(call.deadline, QUEUE_RENEGE, call.id)
        self._log("enqueue", call)

    def _handoff_failed(self, call: Call) -> None:
        call.finish(Outcome.DROPPED_HANDOFF)
        if call.counted:
            if call.svc_class is ServiceClass.REAL_TIME:
                self.counts["ho_failed_rt"] += 1
            else:
                self.counts["ho_failed_nrt"] += 1
        if call.started_new:
            self.counts["calls_dropped"] += 1

    def _reject(self, call: Call, is_new: bool) -> None:
        if is_new:
            call.finish(Outcome.BLOCKED_NEW)
            if call.counted:
                self.counts["new_blocked"] += 1
            self._log("block", call)
        else:
            if call.counted:
                self.counts["ho_dropped"] += 1
            self._handoff_failed(call)
            self._log("drop", call)

    def _promote(self, t: float) -> None:
        action = pol.on_release(self._policy, self.state(), self.s)
        if action is pol.ServiceAction.NONE:
            return
        if action is pol.ServiceAction.PROMOTE_HANDOFF:
            idx = 0
            if self._policy is Policy.GUARD_DUAL_QUEUE_SHARING:
                idx = pol.pick_handoff(self._policy, [c for _, c in self.q_hc])
            _, call = self.q_hc.pop(idx)
            if call.svc_class is ServiceClass.REAL_TIME:
                self.rt_waiting -= 1
            if call.counted:
                self.counts["ho_promoted"] += 1
                self._wait_hc += t - call.enqueued_at
                self.queued_handoffs.append((call.patience, False))
                if self.samples is not None:
                    self.samples["attempts"].append((call.enqueued_at, False, False))
        else:
            call = self.q_oc.popleft()
            if call.counted:
                self.counts["new_promoted"] += 1
                self._wait_oc += t - call.enqueued_at
                if self.samples is not None:
                    self.samples["attempts"].append((call.enqueued_at, True, False))
        if call.deadline < math.inf:
            self.fel.cancel(call.id)
        self._start_service(call, t)

    def handle_renege(self, call_id: int, t: float) -> None:
        for i, (_, c) in enumerate(self.q_hc):
            if c.id == call_id:
                del self.q_hc[i]
                if c.svc_class is ServiceClass.REAL_TIME:
                    self.rt_waiting -= 1
                if c.counted:
                    self.counts["ho_reneged"] += 1
                    self._wait_hc += t - c.enqueued_at
                    self.queued_handoffs.append((c.patience, True))
                    if self.samples is not None:
                        self.samples["attempts"].append((c.enqueued_at, False, True))
                self._handoff_failed(c)
                self._log("renege", c)
                return
        for c in self.q_oc:
            if c.id == call_id:
                self.q_oc.remove(c)
                c.finish(Outcome.RENEGED_FROM_QUEUE)
                if c.counted:
                    self.counts["new_reneged"] += 1
                    self._wait_oc += t - c.enqueued_at
                    if self.samples is not None:
                        self.samples["attempts"].append((c.enqueued_at, True, False))
                self._log("renege", c)
                return
        raise EngineError(f"renege of call {call_id} that is not queued")

    # -- main loop ---------------------------------------------------------

    def run(self, check: bool = False) -> RawTrace:
        s = self.s
        end = s.sim_time
        warm = s.warmup_time
        n_minus_r = s.n_channels - s.guard_channels
        uses_queues = pol.uses_queues(self._policy)
        fel = self.fel
        pop = fel.pop_raw
        schedule = fel.schedule
        counts = self.counts
        in_service = self.in_service
        pool = self.pool
        q_hc, q_oc = self.q_hc, self.q_oc
        decide = self._decide
        ADMIT = pol.Decision.ADMIT_CHANNEL
        ENQ_NEW, ENQ_HO = pol.Decision.ENQUEUE_NEW, pol.Decision.ENQUEUE_HANDOFF
        NEW, HANDOFF = CallKind.NEW, CallKind.HANDOFF
        RT, NRT = ServiceClass.REAL_TIME, ServiceClass.NON_REAL_TIME
        COMPLETED = Outcome.COMPLETED
        frac_rt = s.frac_realtime
        log = math.log
        st = self.streams
        u_new = st["new-arrivals"].uniform
        u_ho = st["handoff-arrivals"].uniform
        u_hold = st["holding"].uniform
        u_dwell = st["dwell"].uniform
        u_ren = st["renege"].uniform
        lam_n, lam_h = s.lambda_new, s.lambda_handoff
        mu_n, mu_h = s.mu_new, s.mu_handoff
        eta = s.eta_dwell
        lag_mean = s.transit_lag
        heappush, heappop = heapq.heappush, heapq.heappop
        th_n, th_h = s.theta_renege_new, s.theta_renege_handoff
        inf = math.inf
        events = self.events
        samples = self.samples
        busy_log = samples["busy"] if samples is not None else None
        attempts_log = samples["attempts"] if samples is not None else None

        schedule(-log(u_new()) / lam_n, NEW_ARRIVAL)
        schedule(-log(u_ho()) / lam_h, HANDOFF_ARRIVAL)
        ho_index = 0
        last = 0.0
        busy_area = qhc_area = qoc_area = 0.0
        while True:
            ev = pop()
            if ev is None or ev[0] > end:
                break
            t, _, k, cid = ev
            if t > warm:
                dt = t - (last if last > warm else warm)
                busy_area += dt * self.busy
                if uses_queues:
                    qhc_area += dt * len(q_hc)
                    qoc_area += dt * len(q_oc)
            last = t
            self.clock = t

            if k <= HANDOFF_ARRIVAL:
                # every arrival draws the same variates, whatever happens to it
                is_new = k == NEW_ARRIVAL
                if is_new:
                    schedule(t - log(u_new()) / lam_n, NEW_ARRIVAL)
                    svc = RT if u_new() <= frac_rt else NRT
                    holding = -log(u_hold()) / mu_n
                    theta = th_n
                else:
                    schedule(t - log(u_ho()) / lam_h, HANDOFF_ARRIVAL)
                    svc = RT if u_ho() <= frac_rt else NRT
                    holding = -log(u_hold()) / mu_h
                    theta = th_h
                u = u_dwell()
                dwell = -log(u) / eta if eta > 0 else inf
                u = u_ren()
                patience = -log(u) / theta if theta > 0 else inf
                lag = 1 + int(-log(u_dwell()) * lag_mean)
                counted = t >= warm
                if not is_new:
                    ho_index += 1
                if not is_new and pool and pool[0][0] <= ho_index:
                    call = heappop(pool)[2]
                    call.kind = HANDOFF
                    if counted:
                        counts["ho_continuations"] += 1
                else:
                    call = Call(self._next_id, NEW if is_new else HANDOFF, svc, t, holding)
                    self._next_id += 1
                call.arrival_time = t
                call.dwell_remaining = dwell
                call.patience = patience
                call.lag = lag
                call.counted = counted
                is_nrt = call.svc_class is NRT
                if counted:
                    if is_new:
                        counts["new_arrivals"] += 1
                    else:
                        counts["ho_arrivals"] += 1
                        counts["ho_arrivals_nrt" if is_nrt else "ho_arrivals_rt"] += 1
                decision = decide(self.busy, len(q_hc), len(q_oc), is_new, is_nrt, self.rt_waiting > 0)
                if decision is ADMIT:
                    if counted:
                        counts["new_admitted" if is_new else "ho_admitted"] += 1
                    self._start_service(call, t)
                elif decision is ENQ_NEW or decision is ENQ_HO:
                    self._enqueue(call, t)
                else:
                    self._reject(call, is_new)
                if attempts_log is not None and counted and decision is not ENQ_NEW \
                        and decision is not ENQ_HO:
                    attempts_log.append((t, is_new, decision is not ADMIT))

            elif k != QUEUE_RENEGE:
                call = in_service.pop(cid, None)
                if call is None:
                    raise EngineError(f"release of call {cid} that is not in service")
                self.busy -= 1
                if self.busy < self._busy_min:
                    self._busy_min = self.busy
                if call.kind is HANDOFF and call.svc_class is NRT:
                    self.nrt_ho_busy -= 1
                if k == DWELL_EXPIRY:
                    rem = call.holding_remaining - (t - call.service_start)
                    call.holding_remaining = rem if rem > 0.0 else 0.0
                    call.dwell_remaining = 0.0
                    call.handoff_count += 1
                    heappush(pool, (ho_index + call.lag, call.id, call))
                    if events is not None:
                        self._log("dwell-out", call)
                else:
                    call.holding_remaining = 0.0
                    call.finish(COMPLETED)
                    if call.started_new:
                        counts["calls_completed"] += 1
                    if events is not None:
                        self._log("complete", call)
                if q_hc or (q_oc and self.busy < n_minus_r):
                    self._promote(t)
            else:
                self.handle_renege(cid, t)

            if check:
                self.check()
            if busy_log is not None:
                busy_log.append((t, self.busy))

        if end > warm:
            dt = end - (last if last > warm else warm)
            busy_area += dt * self.busy
            qhc_area += dt * len(q_hc)
            qoc_area += dt * len(q_oc)
        self.clock = end
        self._busy_area, self._qhc_area, self._qoc_area = busy_area, qhc_area, qoc_area
        return self._finish()

    def _finish(self) -> RawTrace:
        end = self.s.sim_time
        for _, c in self.q_hc:
            if c.counted:
                self.counts["ho_censored_queue"] += 1
                self.counts["ho_censored_rt" if c.svc_class is ServiceClass.REAL_TIME else "ho_censored_nrt"] += 1
                self._wait_hc += end - c.enqueued_at
        for c in self.q_oc:
            if c.counted:
                self.counts["new_censored_queue"] += 1
                self._wait_oc += end - c.enqueued_at
        return RawTrace(
            replication=self.replication,
            warmup=self.s.warmup_time,
            horizon=end,
            n_channels=self.s.n_channels,
            counts=dict(self.counts),
            busy_integral=self._busy_area,
            qhc_integral=self._qhc_area,
            qoc_integral=self._qoc_area,
            wait_hc=self._wait_hc,
            wait_oc=self._wait_oc,
            busy_min=self._busy_min,
            busy_max=self._busy_max,
            pool_left=len(self.pool),
            queued_handoffs=self.queued_handoffs,
            events=self.events,
            samples=self.samples,
        )


def run(s: Scenario, replication: int = 0, *, record_events: bool = False,
        keep_samples: bool = False, check: bool = False) -> RawTrace:
    """Simulate ``[0, sim_time]`` for one replication.

    Identical inputs give a bit-identical trace.  ``check`` re-verifies the
    occupancy invariants after every event (slow; meant for tests).
    """
    sim = CellSimulator(s, replication, record_events=record_events, keep_samples=keep_samples)
    return sim.run(check=check)


def _run_one(args) -> RawTrace:
    s, rep = args
    return run(s, rep)


def run_replications(s: Scenario, replications: int | None = None, workers: int = 1) -> list[RawTrace]:
    """Run replications ``0..k-1``; results always come back in index order."""
    s = validate_scenario(s)
    k = s.replications if replications is None else replications
    jobs = [(s, i) for i in range(k)]
    if workers <= 1 or k <= 1:
        return [_run_one(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_run_one, jobs))
