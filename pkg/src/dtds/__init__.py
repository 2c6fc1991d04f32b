"""Temporal deontic STIT logic: formulas, premodels, lasso systems, search and proofs."""
from .syntax import ClosureSet, Formula, ParseError, closure, parse, render
from .premodel import AuditReport, Premodel, audit, check_side_conditions
from .lasso import ExplicitSystem, LassoHistory, LassoSystem, ResourceError, audit_window, eval_at
from .transforms import (
    build_choice, check_pmorphism, filtrate, make_acceptable, to_additive, unravel,
)
from .decide import SatResult, find_countermodel, sat
from .proofkit import ProofScript, check, derive_extra_rule, match_axiom, parse_proof

__all__ = [
    "ClosureSet", "Formula", "ParseError", "closure", "parse", "render",
    "AuditReport", "Premodel", "audit", "check_side_conditions",
    "ExplicitSystem", "LassoHistory", "LassoSystem", "ResourceError", "audit_window", "eval_at",
    "build_choice", "check_pmorphism", "filtrate", "make_acceptable", "to_additive", "unravel",
    "SatResult", "find_countermodel", "sat",
    "ProofScript", "check", "derive_extra_rule", "match_axiom", "parse_proof",
]
