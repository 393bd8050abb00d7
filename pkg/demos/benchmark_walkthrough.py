"""Generate a small synthetic workflow set, train briefly, and score the test split.

Takes about a minute on one core; the full benchmark uses the CLI defaults.
"""

import tempfile
from pathlib import Path

from phasediff.pipeline import run_experiment

CONFIG = """
[data]
n_train = 30
n_val = 5
n_test = 8
seed = 3
[model]
enc_layers = 5
dec_layers = 3
hidden = 16
dec_hidden = 16
[train]
epochs = 15
lr = 3e-3
pl = 0.1
[experiment]
out_dir = run
"""

with tempfile.TemporaryDirectory() as tmp:
    cfg = Path(tmp) / "exp.ini"
    cfg.write_text(CONFIG)
    result = run_experiment(cfg, progress=lambda e: print(f"epoch {e['epoch']}: loss {e['loss']:.3f}"))["main"]
    for key in ("test_accuracy", "test_macro_jaccard", "test_violations", "baseline_ncm_accuracy"):
        print(f"{key:24s} {result[key]:.3f}")
    print("artifacts:", sorted(p.name for p in (Path(tmp) / "run").iterdir()))
