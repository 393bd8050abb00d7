"""Clinical ordering rules for the eight ESD phases, and formula files."""

from __future__ import annotations

from importlib import resources
from itertools import permutations
from pathlib import Path

from .formula import Interner, parse_formula

ESD_PHASES = (
    "Preparation",
    "Estimation",
    "Marking",
    "Injection",
    "Incision",
    "ESD",
    "Vessel_treatment",
    "Clips",
)

# (no q until r): q may not occur before r has occurred
_PRECEDENCE = [
    (("Injection", "Incision", "ESD", "Vessel_treatment", "Clips"), ("Marking", "Estimation")),
    (("Vessel_treatment", "Clips"), ("Injection", "Incision", "ESD")),
]
# once any of these occurs, every other one must occur too
_COOCCUR = ("Marking", "Injection", "Incision", "ESD")


def default_rule_texts(phases=ESD_PHASES):
    """The rule set as formula strings over ``P<k>`` atoms for ``phases``."""
    phases = list(phases)
    needed = {p for qs, rs in _PRECEDENCE for p in qs + rs} | set(_COOCCUR)
    missing = sorted(needed - set(phases))
    if missing:
        raise KeyError(f"phase table lacks {', '.join(missing)}")

    def atom(name):
        return f"P{phases.index(name) + 1}"

    texts = []
    for qs, rs in _PRECEDENCE:
        for q in qs:
            for r in rs:
                texts.append(f"(!{atom(q)} W {atom(r)})")
    for a, b in permutations(_COOCCUR, 2):
        texts.append(f"(!F {atom(a)} | F {atom(b)})")
    return texts


def default_rules(phases=ESD_PHASES):
    interner = Interner()
    return [parse_formula(t, phases, interner=interner) for t in default_rule_texts(phases)]


def parse_formula_lines(text, phases=None, num_classes=None):
    """One formula per line; blank lines and ``#`` comments are skipped."""
    interner = Interner()
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(parse_formula(line, phases, num_classes, interner=interner))
    return out


def load_formulas(path=None, phases=ESD_PHASES, num_classes=None):
    """Read a formula file; with no path, the bundled ESD rule set."""
    if path is None:
        text = resources.files("phasediff.logic").joinpath("data/esd_rules.cpkl").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return parse_formula_lines(text, phases, num_classes)
