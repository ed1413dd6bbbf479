"""Translation of (E)MDM schemes into relational schemas plus enforcement plans."""

from emdm.analyzer import ImplicationReport, PrunedKey, analyze
from emdm.checker import (
    Event,
    EventError,
    EventResult,
    Instance,
    Verdict,
    Violation,
    apply_event,
    check_all,
    detect_cycle,
    eval_formula,
    load_instance,
    recompute_derived,
)
from emdm.parser import ParseError, SchemeParseError, load_scheme, parse_formula, parse_scheme, serialize_scheme
from emdm.pipeline import Build, build, bundled, bundled_scheme
from emdm.planner import EnforcementPlan, PlanEntry, plan, render_plan
from emdm.sqlgen import PROFILES, Demotion, DialectProfile, emit_ddl
from emdm.translator import NonRelationalOutput, order_sets, translate
from emdm.validate import validate_scheme

__all__ = [
    "Build",
    "Demotion",
    "DialectProfile",
    "EnforcementPlan",
    "Event",
    "EventError",
    "EventResult",
    "ImplicationReport",
    "Instance",
    "NonRelationalOutput",
    "PROFILES",
    "ParseError",
    "PlanEntry",
    "PrunedKey",
    "SchemeParseError",
    "Verdict",
    "Violation",
    "analyze",
    "apply_event",
    "build",
    "bundled",
    "bundled_scheme",
    "check_all",
    "detect_cycle",
    "emit_ddl",
    "eval_formula",
    "load_instance",
    "load_scheme",
    "order_sets",
    "parse_formula",
    "parse_scheme",
    "plan",
    "recompute_derived",
    "render_plan",
    "serialize_scheme",
    "translate",
    "validate_scheme",
]
