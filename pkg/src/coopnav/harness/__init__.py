"""Episode orchestration, traces, replay and scenario checks."""

from pathlib import Path

from ..world import resolve_scenario_path, validate_document
from .episode import ConfigError, Episode, EpisodeReport, RunConfig, TargetOutcome, parse_crash_schedule, run_episode
from .trace import ReplayResult, TraceError, read_trace, replay


def validate_scenario(path: str | Path) -> list[str]:
    """Every world invariant violation in a scenario file; empty when clean.

    Raises OSError when the file cannot be read."""
    resolved = resolve_scenario_path(path)
    resolved.read_text()
    return validate_document(resolved)


__all__ = [
    "ConfigError",
    "Episode",
    "EpisodeReport",
    "ReplayResult",
    "RunConfig",
    "TargetOutcome",
    "TraceError",
    "parse_crash_schedule",
    "read_trace",
    "replay",
    "run_episode",
    "validate_scenario",
]
