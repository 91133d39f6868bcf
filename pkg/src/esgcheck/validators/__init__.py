from .compare import Comparison, RankedReport, compare_reports
from .engines import (
    EngineConfig,
    Validator,
    build_report_index,
    parse_judgment,
    parse_verdict_lines,
    validate_multi_agent,
    validate_single_agent,
    validate_single_model,
)
from .generate import GeneratedReport, generate_report
from .heuristic import HeuristicResponder
from .prompts import default_prompts, load_prompts, render
from .supervisor import AgentRegistry, AgentRoute, Dispatch, Intent, Supervisor, route

__all__ = [
    "AgentRegistry",
    "AgentRoute",
    "Comparison",
    "Dispatch",
    "EngineConfig",
    "GeneratedReport",
    "HeuristicResponder",
    "Intent",
    "RankedReport",
    "Supervisor",
    "Validator",
    "build_report_index",
    "compare_reports",
    "default_prompts",
    "generate_report",
    "load_prompts",
    "parse_judgment",
    "parse_verdict_lines",
    "render",
    "route",
    "validate_multi_agent",
    "validate_single_agent",
    "validate_single_model",
]
