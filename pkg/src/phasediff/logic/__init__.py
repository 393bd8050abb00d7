from .evaluate import BIG, eval_hard, eval_soft, logic_loss, probs_to_scores, soft_trace, softmax, softmin
from .formula import Formula, Interner, Node, ParseError, format_formula, parse_formula
from .rules import ESD_PHASES, default_rule_texts, default_rules, load_formulas, parse_formula_lines

__all__ = [
    "BIG",
    "ESD_PHASES",
    "Formula",
    "Interner",
    "Node",
    "ParseError",
    "default_rule_texts",
    "default_rules",
    "eval_hard",
    "eval_soft",
    "format_formula",
    "load_formulas",
    "logic_loss",
    "parse_formula",
    "parse_formula_lines",
    "probs_to_scores",
    "soft_trace",
    "softmax",
    "softmin",
]
