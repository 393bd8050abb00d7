"""Temporal-logic rules: parse, check on hard labels, and score softly."""

import numpy as np

from phasediff.formats import one_hot
from phasediff.logic import ESD_PHASES, default_rule_texts, eval_hard, eval_soft, logic_loss, parse_formula, probs_to_scores

texts = default_rule_texts()
print(f"{len(texts)} bundled rules, e.g. {texts[0]}")

# Names work as well as P<k> atoms.
rule = parse_formula("(!Clips W Injection)", ESD_PHASES)
good = np.array([0, 0, 1, 2, 3, 4, 5, 6, 7])
bad = np.array([0, 0, 1, 7, 2, 3, 4, 5, 6])
print("clips after injection:", eval_hard(rule, good), "| clips before injection:", eval_hard(rule, bad))

# The soft score follows the hard verdict and sharpens as the temperature drops.
for labels in (good, bad):
    scores = probs_to_scores(one_hot(labels, 8))
    print([round(float(eval_soft(rule, scores, 0, g).data), 4) for g in (1.0, 0.1, 0.01)])

# As a training signal: loss from soft predictions over every rule.
probs = np.full((len(bad), 8), 0.02)
probs[np.arange(len(bad)), bad] = 0.86
formulas = [parse_formula(t, ESD_PHASES) for t in texts]
print("rule loss on the out-of-order sequence:", logic_loss(formulas, probs, 0.5).item())
