"""Config-driven experiment harness: scenario configs, runner and CLI."""

from .config import ScenarioConfig, load_config, parse_config
from .runner import ResultRecord, Verdict, emit_csv, run

__all__ = ["ResultRecord", "ScenarioConfig", "Verdict", "emit_csv", "load_config", "parse_config", "run"]
