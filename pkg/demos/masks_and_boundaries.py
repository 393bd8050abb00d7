"""What the four conditioning masks hide on one labelled sequence."""

import numpy as np

from phasediff.formats import one_hot
from phasediff.losses import boundary_targets
from phasediff.masking import frame_boundary, mask_global, mask_none, mask_relation, mask_transition

labels = np.repeat([0, 1, 2], [14, 10, 12])
soft = frame_boundary(boundary_targets(one_hot(labels, 3), 2.0))


def show(name, m):
    print(f"{name:11s}", "".join("#" if b else "." for b in m.bits))


print(f"{'labels':11s}", "".join(str(v) for v in labels))
show("none", mask_none(len(labels)))
show("global", mask_global(len(labels)))
show("transition", mask_transition(soft))
show("relation 1", mask_relation(labels, 1))
