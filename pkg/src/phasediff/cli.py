"""Command-line entry point: ``phasediff <command> ...``.

Exit codes: 0 success, 1 validation error (bad flags, bad values,
unparseable formulas), 2 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .denoiser import load_checkpoint, save_checkpoint
from .formats import read_features, read_labels, read_ribbon, write_report, write_ribbon
from .logic import ESD_PHASES, ParseError, eval_hard, format_formula, load_formulas
from .metrics import evaluate_sequences


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _phases(arg):
    return arg.split(",") if arg else list(ESD_PHASES)


def cmd_gen_data(args):
    from dataclasses import replace

    from .synth import WorkflowSpec, gen_dataset

    spec = replace(
        WorkflowSpec(),
        noise_std=args.noise_std,
        boundary_blur_w=args.blur_w,
        feat_dim=args.feat_dim,
        frames_range=(args.frames_min, args.frames_max),
    )
    m = gen_dataset(spec, args.n_train, args.n_val, args.n_test, args.seed, args.out, calibrate=not args.no_calibrate, workers=args.workers)
    counts = m.counts()
    print(f"wrote {sum(counts.values())} sequences to {args.out} ({', '.join(f'{k}={v}' for k, v in counts.items())})")
    print(f"mean_scale={m.meta['mean_scale']}")
    return 0


def cmd_train(args):
    from dataclasses import replace

    from .pipeline import load_experiment_config, run_single

    cfg = load_experiment_config(args.config)
    if args.data:
        cfg = replace(cfg, data={**cfg.data, "dir": str(Path(args.data).resolve())})
    out = Path(args.out_ckpt)
    workdir = out.parent / (out.stem + "_run")
    values = run_single(cfg, workdir, progress=lambda e: print(" ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in e.items())) if args.verbose else None)
    save_checkpoint(load_checkpoint(workdir / "checkpoint.bin"), out)
    print(f"checkpoint={out} test_accuracy={values['test_accuracy']:.4f} test_macro_jaccard={values['test_macro_jaccard']:.4f}")
    return 0


def cmd_infer(args):
    from .pipeline import InferConfig, infer

    params = load_checkpoint(args.ckpt)
    feats = read_features(args.features)
    labels = read_labels(args.labels)[0] if args.labels else None
    cfg = InferConfig(steps=args.steps, eta=args.eta, seed=args.seed, mask=args.mask)
    probs, _ = infer(params, feats, config=cfg, labels=labels)
    write_ribbon(args.out, labels, probs)
    print(f"wrote {len(probs)} frames to {args.out}")
    return 0


def cmd_eval(args):
    if len(args.pred) != len(args.labels):
        raise ValueError("need one label file per prediction file")
    formulas = load_formulas(args.formulas, _phases(args.phases)) if args.formulas != "none" else None
    pairs = []
    for pred_path, label_path in zip(args.pred, args.labels):
        _, pred, _ = read_ribbon(pred_path)
        true = _read_any_labels(label_path)
        pairs.append((pred, true))
    report = evaluate_sequences(pairs, formulas, args.window)
    values = report.as_dict()
    for k, v in values.items():
        print(f"{k}={v!r}")
    if args.out:
        write_report(args.out, values)
    return 0


def _read_any_labels(path):
    path = Path(path)
    if path.suffix == ".csv":
        true, pred, _ = read_ribbon(path)
        return true if np.all(true >= 0) else pred
    return read_labels(path)[0]


def cmd_check_logic(args):
    formulas = load_formulas(args.formulas, _phases(args.phases))
    path = Path(args.target)
    if path.suffix == ".csv":
        _, labels, _ = read_ribbon(path)
    else:
        labels = read_labels(path)[0]
    failed = 0
    for f in formulas:
        ok = eval_hard(f, labels, 0)
        failed += not ok
        print(f"{'SAT' if ok else 'UNSAT'}\t{format_formula(f)}")
    print(f"{len(formulas) - failed}/{len(formulas)} satisfied")
    return 0


def cmd_grad_check(args):
    from .gradcheck import run_suite

    errors = run_suite(args.component, args.seed, args.n_seeds)
    for name, err in errors.items():
        print(f"{name}\tmax_rel_error={err:.3e}")
    worst = max(errors.values())
    print(f"max_rel_error={worst:.3e} tolerance={args.tol:g} {'PASS' if worst < args.tol else 'FAIL'}")
    return 0 if worst < args.tol else 1


def build_parser():
    p = _Parser(prog="phasediff", description="Diffusion-based phase labelling with temporal-logic constraints.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate a synthetic workflow dataset")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--seed", type=int, default=0, help="dataset seed")
    g.add_argument("--n-train", type=int, default=200, help="training sequences")
    g.add_argument("--n-val", type=int, default=20, help="validation sequences")
    g.add_argument("--n-test", type=int, default=40, help="test sequences")
    g.add_argument("--noise-std", type=float, default=0.6, help="feature noise standard deviation")
    g.add_argument("--blur-w", type=int, default=6, help="frames of feature blending on each side of a change")
    g.add_argument("--feat-dim", type=int, default=16, help="feature dimension")
    g.add_argument("--frames-min", type=int, default=150, help="shortest sequence")
    g.add_argument("--frames-max", type=int, default=300, help="longest sequence")
    g.add_argument("--no-calibrate", action="store_true", help="skip class-mean scale calibration")
    g.add_argument("--workers", type=int, default=1, help="parallel writer processes")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a denoiser from an experiment config")
    t.add_argument("--config", required=True, help="experiment config file")
    t.add_argument("--data", help="dataset directory (overrides the config)")
    t.add_argument("--out-ckpt", required=True, help="checkpoint path to write")
    t.add_argument("--verbose", action="store_true", help="print per-epoch progress")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="denoise one feature file into a prediction CSV")
    i.add_argument("--ckpt", required=True, help="checkpoint file")
    i.add_argument("--features", required=True, help="feature file")
    i.add_argument("--labels", help="label file; fills the CSV's true column")
    i.add_argument("--steps", type=int, default=8, help="reverse steps")
    i.add_argument("--seed", type=int, default=7, help="seed of the initial noise")
    i.add_argument("--eta", type=float, default=0.0, help="reverse-step stochasticity")
    i.add_argument("--mask", default="N", choices=["N", "G", "T", "R"], help="conditioning mask (non-N needs --labels for T/R; analysis only)")
    i.add_argument("--out", required=True, help="output CSV")
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="score prediction CSVs against labels")
    e.add_argument("--pred", nargs="+", required=True, help="prediction CSVs")
    e.add_argument("--labels", nargs="+", required=True, help="label files (or CSVs with a true column)")
    e.add_argument("--formulas", default=None, help="formula file for violation counts; 'none' to skip; default bundled rules")
    e.add_argument("--phases", default=None, help="comma-separated phase names")
    e.add_argument("--window", type=int, default=10, help="relaxed-metric window in frames")
    e.add_argument("--out", help="write key=value report here")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("check-logic", help="print per-formula satisfaction of a label sequence")
    c.add_argument("formulas", help="formula file")
    c.add_argument("target", help="label file or prediction CSV")
    c.add_argument("--phases", default=None, help="comma-separated phase names")
    c.set_defaults(func=cmd_check_logic)

    gc = sub.add_parser("grad-check", help="finite-difference gradient checks")
    gc.add_argument("component", choices=["all", "losses", "logic", "denoiser", "ce", "smooth", "boundary", "total"], metavar="component", help="what to check: all, losses, logic, denoiser, ce, smooth, boundary or total")
    gc.add_argument("--seed", type=int, default=0, help="first seed")
    gc.add_argument("--n-seeds", type=int, default=1, help="number of seeds")
    gc.add_argument("--tol", type=float, default=1e-4, help="pass threshold on max relative error")
    gc.set_defaults(func=cmd_grad_check)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ParseError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


def main_entry():
    sys.exit(main())
