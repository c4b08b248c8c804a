"""Prioritized handoff admission control: cell simulator and Markov-chain oracle."""

from .model import (
    UNBOUNDED,
    Call,
    CallKind,
    Discipline,
    Event,
    EventKind,
    Outcome,
    Policy,
    Scenario,
    ScenarioError,
    ServiceClass,
    ValidatedScenario,
    offered_load,
    validate_scenario,
)

__version__ = "0.1.0"
