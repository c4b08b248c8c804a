"""Scenario, call and event types shared by the simulator, policies and oracle."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields
from typing import Any

#: Sentinel capacity for a handoff queue that never blocks on arrival.
UNBOUNDED = math.inf


class ScenarioError(ValueError):
    """Raised when a scenario violates one of its invariants."""


class Policy(str, enum.Enum):
    NO_PRIORITY = "no-priority"
    GUARD = "guard"
    GUARD_DUAL_QUEUE = "guard-dual-queue"
    GUARD_DUAL_QUEUE_SHARING = "guard-dual-queue-sharing"


class Discipline(str, enum.Enum):
    FIFO = "fifo"
    DWELL_PRIORITY = "dwell-priority"


class CallKind(str, enum.Enum):
    NEW = "new"
    HANDOFF = "handoff"


class ServiceClass(str, enum.Enum):
    REAL_TIME = "rt"
    NON_REAL_TIME = "nrt"


class Outcome(str, enum.Enum):
    IN_PROGRESS = "in-progress"
    COMPLETED = "completed"
    BLOCKED_NEW = "blocked-new"
    DROPPED_HANDOFF = "dropped-handoff"
    RENEGED_FROM_QUEUE = "reneged-from-queue"


class EventKind(enum.IntEnum):
    NEW_ARRIVAL = 0
    HANDOFF_ARRIVAL = 1
    CHANNEL_RELEASE = 2
    DWELL_EXPIRY = 3
    QUEUE_RENEGE = 4


@dataclass(frozen=True)
class Scenario:
    """Full description of one experiment.

    Times are abstract units; with ``mu_new = 1`` one unit is one mean
    new-call holding time.  ``transit_lag`` is the mean number of handoff
    arrivals a call that left the cell mid-conversation lets pass before it
    is offered back as a handoff (see :mod:`handoffsim.engine`).  ``cap_handoff_queue`` may be the string
    ``"unbounded"`` (or :data:`UNBOUNDED`); validation normalizes it.
    """

    n_channels: int = 4
    guard_channels: int = 1
    cap_handoff_queue: Any = "unbounded"
    cap_new_queue: int = 10
    lambda_new: float = 1.0
    lambda_handoff: float = 1.0
    mu_new: float = 1.0
    mu_handoff: float = 1.0
    eta_dwell: float = 0.0
    theta_renege_handoff: float = 0.0
    theta_renege_new: float = 0.0
    transit_lag: float = 50.0
    policy: Policy = Policy.GUARD_DUAL_QUEUE
    discipline: Discipline = Discipline.DWELL_PRIORITY
    frac_realtime: float = 0.5
    sim_time: float = 10_000.0
    warmup_time: float = 100.0
    replications: int = 10
    seed: int = 12345

    def with_(self, **changes) -> "Scenario":
        """Copy with fields replaced; the copy is re-validated if this one was."""
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        out = Scenario(**values)
        if isinstance(self, ValidatedScenario):
            return validate_scenario(out)
        return out

    def as_dict(self) -> dict[str, Any]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, enum.Enum):
                v = v.value
            elif v == UNBOUNDED:
                v = "unbounded"
            out[f.name] = v
        return out

    @property
    def lambda_total(self) -> float:
        return self.lambda_new + self.lambda_handoff


@dataclass(frozen=True)
class ValidatedScenario(Scenario):
    """A :class:`Scenario` whose invariants have been checked."""


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def validate_scenario(s: Scenario) -> ValidatedScenario:
    """Check every scenario invariant and return an immutable validated copy.

    Raises :class:`ScenarioError` naming the first violated invariant.
    """
    if isinstance(s, ValidatedScenario):
        return s
    if not _is_int(s.n_channels) or s.n_channels <= 0:
        raise ScenarioError("n_channels must be a positive integer")
    if not _is_int(s.guard_channels) or s.guard_channels < 0:
        raise ScenarioError("guard_channels must be a non-negative integer")
    if s.guard_channels > s.n_channels:
        raise ScenarioError("guard_channels exceeds n_channels")

    cap_hc = s.cap_handoff_queue
    if isinstance(cap_hc, str):
        if cap_hc.strip().lower() not in ("unbounded", "inf"):
            raise ScenarioError("cap_handoff_queue must be a non-negative integer or 'unbounded'")
        cap_hc = UNBOUNDED
    elif cap_hc == UNBOUNDED:
        cap_hc = UNBOUNDED
    elif not _is_int(cap_hc) or cap_hc < 0:
        raise ScenarioError("cap_handoff_queue must be a non-negative integer or 'unbounded'")
    if not _is_int(s.cap_new_queue) or s.cap_new_queue < 0:
        raise ScenarioError("cap_new_queue must be a non-negative integer")

    for name in ("lambda_new", "lambda_handoff", "mu_new", "mu_handoff"):
        v = getattr(s, name)
        if not isinstance(v, (int, float)) or not math.isfinite(v) or v <= 0:
            raise ScenarioError(f"{name}: rate must be positive")
    # eta_dwell = 0 means a call never leaves the cell while in service.
    for name in ("eta_dwell", "theta_renege_handoff", "theta_renege_new", "transit_lag"):
        v = getattr(s, name)
        if not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
            raise ScenarioError(f"{name}: must be non-negative")

    try:
        policy = Policy(s.policy)
    except ValueError:
        raise ScenarioError(f"unknown policy {s.policy!r}") from None
    try:
        discipline = Discipline(s.discipline)
    except ValueError:
        raise ScenarioError(f"unknown discipline {s.discipline!r}") from None
    if not 0.0 <= s.frac_realtime <= 1.0:
        raise ScenarioError("frac_realtime must lie in [0, 1]")

    if not s.sim_time > 0:
        raise ScenarioError("sim_time must be positive")
    if not 0 <= s.warmup_time < s.sim_time:
        raise ScenarioError("warmup_time must be non-negative and below sim_time")
    if not _is_int(s.replications) or s.replications <= 0:
        raise ScenarioError("replications must be a positive integer")
    if not _is_int(s.seed) or not 0 <= s.seed < 2**64:
        raise ScenarioError("seed must be a 64-bit unsigned integer")

    values = {f.name: getattr(s, f.name) for f in fields(s)}
    values.update(cap_handoff_queue=cap_hc, policy=policy, discipline=discipline)
    return ValidatedScenario(**values)


def offered_load(lam: float, mu: float) -> float:
    """Offered traffic in erlangs."""
    if mu <= 0:
        raise ValueError("service rate must be positive")
    return lam / mu


@dataclass(eq=False, slots=True)
class Call:
    """One call's identity, sampled timers and lifecycle outcome.

    ``holding_remaining`` is the residual conversation time; it is carried
    across handoffs and frozen while the call waits in a queue.
    """

    id: int
    kind: CallKind
    svc_class: ServiceClass
    arrival_time: float
    holding_remaining: float
    dwell_remaining: float = math.inf
    handoff_count: int = 0
    outcome: Outcome = Outcome.IN_PROGRESS
    # engine bookkeeping for the current attempt
    started_new: bool = field(default=False, repr=False)
    counted: bool = field(default=False, repr=False)
    service_start: float = field(default=0.0, repr=False)
    enqueued_at: float = field(default=0.0, repr=False)
    queue_seq: int = field(default=0, repr=False)
    patience: float = field(default=math.inf, repr=False)
    deadline: float = field(default=math.inf, repr=False)
    lag: int = field(default=1, repr=False)

    def finish(self, outcome: Outcome) -> None:
        if self.outcome is not Outcome.IN_PROGRESS:
            raise RuntimeError(f"call {self.id} already terminal ({self.outcome.value})")
        if outcome is Outcome.IN_PROGRESS:
            raise ValueError("cannot finish with a non-terminal outcome")
        self.outcome = outcome


@dataclass(frozen=True, order=True)
class Event:
    """Future-event-list entry; ordered by ``(time, seq)``."""

    time: float
    seq: int
    kind: EventKind = field(compare=False)
    call_id: int = field(default=-1, compare=False)
