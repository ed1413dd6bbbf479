"""One-call pipeline used by the CLI and the tests."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from emdm.analyzer import ImplicationReport, analyze
from emdm.model import MdmScheme
from emdm.parser import load_scheme
from emdm.planner import EnforcementPlan, plan
from emdm.relational import RelationalSchema, TranslationReport
from emdm.sqlgen import PROFILES, Demotion, emit_ddl
from emdm.translator import NonRelationalOutput, translate


def bundled(name: str = "genealogy") -> Path:
    """Directory of a bundled example (scheme, fixture CSVs, event files)."""
    return Path(str(resources.files("emdm") / "data" / name))


def bundled_scheme(name: str = "genealogy") -> Path:
    return bundled(name) / f"{name}.mdm"


@dataclass
class Build:
    scheme: MdmScheme
    schema: RelationalSchema  # as translated, before pruning
    residual: NonRelationalOutput
    report: TranslationReport
    enforced: RelationalSchema  # what is declared: pruned when the analyzer ran
    implication: ImplicationReport | None
    sql: str
    demotions: list[Demotion]
    plan: EnforcementPlan


def build(scheme: MdmScheme | str | Path, *, dialect: str = "ansi", analyzer: bool = True) -> Build:
    if not isinstance(scheme, MdmScheme):
        scheme = load_scheme(scheme)
    schema, residual, report = translate(scheme)
    implication = None
    enforced = schema
    if analyzer:
        enforced, implication = analyze(schema, residual, scheme)
    sql, demotions = emit_ddl(enforced, PROFILES[dialect])
    return Build(
        scheme, schema, residual, report, enforced, implication, sql, demotions,
        plan(residual, demotions, scheme, enforced),
    )
