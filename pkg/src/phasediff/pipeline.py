"""Training, skipped-step inference, checkpoints and config-driven experiments."""

from __future__ import annotations

import configparser
import itertools
import logging
import time
from collections import OrderedDict
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .denoiser import DenoiserConfig, decode, encode, init_params, save_checkpoint
from .formats import one_hot, write_report, write_ribbon
from .logic import ESD_PHASES, load_formulas
from .losses import LossWeights, boundary_targets, total_loss
from .masking import frame_boundary, mask_global, mask_none, mask_relation, mask_transition, sample_mask
from .metrics import evaluate_sequences
from .schedule import ddim_step, forward_diffuse, inference_grid, make_schedule, scale_labels
from .synth import Manifest, WorkflowSpec, gen_dataset, load_split, ncm_accuracy, ncm_fit

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 1000
    lr: float = 5e-4
    batch: int = 4
    epochs: int = 60
    weights: LossWeights = LossWeights()
    gamma: float = 0.5
    sigma_boundary: float = 2.0
    seed: int = 0
    mask_strategies: str = "NGTR"
    aux_supervision: bool = True
    patience: int = 10
    val_steps: int = 8

    def __post_init__(self):
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.total_steps < self.val_steps:
            raise ValueError("total_steps must be >= inference steps")
        if not self.mask_strategies or set(self.mask_strategies) - set("NGTR"):
            raise ValueError(f"mask_strategies must be a non-empty subset of NGTR, got {self.mask_strategies!r}")


@dataclass(frozen=True)
class InferConfig:
    steps: int = 8
    eta: float = 0.0
    seed: int = 7
    mask: str = "N"  # anything other than N is for analysis only

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


# -- optimiser -------------------------------------------------------------------


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def optimizer_step(params, grads, state, lr):
    """Bias-corrected adaptive-moment update of ``params.arrays`` in place."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, g in grads.items():
        m = state.m.setdefault(name, np.zeros_like(g))
        v = state.v.setdefault(name, np.zeros_like(g))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        params.arrays[name] -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


# -- training ----------------------------------------------------------------------


def sample_loss(leaves, labels, features, config, rng, sched, formulas, sample_id=None):
    """Loss for one sequence at a random diffusion step under a random mask."""
    C = leaves["enc.aux_w"].shape[1]
    Y0 = one_hot(labels, C)
    T = len(labels)
    cond, aux = encode(leaves, features)
    t = int(rng.integers(1, config.total_steps + 1))
    eps = rng.standard_normal((T, C))
    y_t = forward_diffuse(scale_labels(Y0), t, eps, sched)
    bbar = boundary_targets(Y0, config.sigma_boundary)
    mask = sample_mask(labels, frame_boundary(bbar), rng, kinds=tuple(config.mask_strategies))
    probs = decode(leaves, y_t, t, cond * mask.bits[:, None], config.total_steps)
    loss = total_loss(probs, Y0, bbar, formulas, config.weights, config.gamma)
    if config.aux_supervision:
        aux_w = replace(config.weights, bd=0.0)
        loss = loss + total_loss(aux, Y0, bbar, formulas, aux_w, config.gamma)
    if not np.isfinite(loss.item()):
        raise FloatingPointError(f"non-finite loss (sample={sample_id}, t={t}, mask={mask.kind.name})")
    return loss


def train_step(params, batch, config, rng, sched=None, formulas=()):
    """Mean loss over ``batch`` of (labels, features); returns (loss, grads)."""
    sched = sched or make_schedule(config.total_steps)
    leaves = params.leaves(requires_grad=True)
    losses = [
        sample_loss(leaves, labels, feats, config, rng, sched, formulas, sample_id=i)
        for i, (labels, feats) in enumerate(batch)
    ]
    total = losses[0]
    for extra in losses[1:]:
        total = total + extra
    total = total * (1.0 / len(losses))
    total.backward()
    grads = OrderedDict((k, v.grad if v.grad is not None else np.zeros_like(v.data)) for k, v in leaves.items())
    return total.item(), grads


def fit(params, train, val, config, formulas=(), infer_config=InferConfig(), progress=None):
    """Epoch loop with early stopping on validation macro Jaccard.

    ``train``/``val`` are lists of (labels, features).  Returns the best
    parameters and a history list of per-epoch dicts.
    """
    sched = make_schedule(config.total_steps)
    rng = np.random.default_rng(config.seed)
    state = AdamState()
    params = params.copy()
    best, best_score, stale = params.copy(), -np.inf, 0
    history = []
    vcfg = replace(infer_config, steps=config.val_steps)
    for epoch in range(config.epochs):
        order = rng.permutation(len(train))
        losses = []
        for start in range(0, len(order), config.batch):
            batch = [train[i] for i in order[start : start + config.batch]]
            loss, grads = train_step(params, batch, config, rng, sched, formulas)
            optimizer_step(params, grads, state, config.lr)
            losses.append(loss)
        entry = {"epoch": epoch, "loss": float(np.mean(losses))}
        if val:
            report = evaluate_model(params, val, sched, vcfg)
            entry["val_jaccard"] = report.macro_jaccard
            entry["val_accuracy"] = report.accuracy
            score = report.macro_jaccard
        else:
            score = -entry["loss"]
        history.append(entry)
        if progress:
            progress(entry)
        if score > best_score:
            best, best_score, stale = params.copy(), score, 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return best, history


# -- inference ---------------------------------------------------------------------


def _inference_mask(config, T, labels):
    if config.mask == "N":
        return mask_none(T).bits
    if config.mask == "G":
        return mask_global(T).bits
    # ground-truth masks exist only for analysis runs
    if labels is None:
        raise ValueError(f"mask {config.mask!r} needs ground-truth labels")
    labels = np.asarray(labels)
    if config.mask == "T":
        return mask_transition(frame_boundary(boundary_targets(labels, 2.0))).bits
    if config.mask == "R":
        rng = np.random.default_rng(config.seed)
        present = np.unique(labels)
        return mask_relation(labels, int(present[rng.integers(len(present))])).bits
    raise ValueError(f"unknown mask {config.mask!r}")


def infer(params, features, sched=None, config=InferConfig(), labels=None, decode_fn=None, num_classes=None):
    """Denoise a seeded Gaussian sequence into framewise probabilities.

    Returns (final probabilities, list of per-step probability predictions).
    Without ``params``, ``decode_fn(y_t, t)`` stands in for the network and
    ``sched`` and ``num_classes`` are required.
    """
    if params is not None:
        S, C = params.config.total_steps, params.config.num_classes
    else:
        if decode_fn is None or sched is None or num_classes is None:
            raise ValueError("infer without params needs decode_fn, sched and num_classes")
        S, C = sched.total_steps, num_classes
    if sched is None or sched.eta != config.eta or sched.total_steps != S:
        sched = make_schedule(S, eta=config.eta)
    features = np.asarray(features, dtype=np.float64)
    T = features.shape[0]
    if params is not None:
        cond, _ = encode(params, features)
        cond = cond.data * _inference_mask(config, T, labels)[:, None]
        leaves = params.leaves(requires_grad=False)

        def decode_fn(y, t):
            return decode(leaves, y, t, cond, S).data

    rng = np.random.default_rng(config.seed)
    y = rng.standard_normal((T, C))
    trajectory = []
    probs = None
    for t, t_prev in inference_grid(S, config.steps):
        probs = np.asarray(decode_fn(y, t), dtype=np.float64)
        if not np.all(np.isfinite(probs)):
            raise FloatingPointError(f"non-finite prediction at step {t}")
        trajectory.append(probs)
        noise = rng.standard_normal(y.shape) if sched.eta > 0 else None
        y = ddim_step(y, 2.0 * probs - 1.0, t, t_prev, sched, noise)
        if not np.all(np.isfinite(y)):
            raise FloatingPointError(f"non-finite trajectory at step {t}->{t_prev}")
    return probs, trajectory


def evaluate_model(params, data, sched, config=InferConfig(), formulas=None, window=10):
    pairs = []
    for labels, feats in data:
        probs, _ = infer(params, feats, sched, config, labels=labels)
        pairs.append((probs.argmax(axis=1), labels))
    return evaluate_sequences(pairs, formulas, window)


# -- experiments ---------------------------------------------------------------------

_SECTIONS = ("data", "model", "train", "infer", "logic", "experiment", "sweep")


def _typed(value, default):
    if isinstance(default, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {value!r}")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        return tuple(type(default[0])(v) for v in value.replace(",", " ").split())
    return value


def _build(cls, section, extra=()):
    defaults = cls()
    kwargs = {}
    names = {f.name for f in fields(cls)}
    for key, raw in section.items():
        if key in extra:
            continue
        if key not in names:
            raise KeyError(f"unknown key {key!r} for {cls.__name__}")
        kwargs[key] = _typed(raw, getattr(defaults, key))
    return kwargs


@dataclass
class ExperimentConfig:
    data: dict
    model: dict
    train: TrainConfig
    infer: InferConfig
    formulas_path: str | None
    out_dir: Path
    eval_window: int = 10
    sweep: dict = field(default_factory=dict)
    base_dir: Path = Path(".")


def parse_experiment_config(text, base_dir="."):
    """Parse INI-style ``key = value`` text with sections into an ExperimentConfig."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(text)
    unknown = set(cp.sections()) - set(_SECTIONS)
    if unknown:
        raise KeyError(f"unknown config sections: {sorted(unknown)}")
    sec = {name: dict(cp[name]) if cp.has_section(name) else {} for name in _SECTIONS}
    base_dir = Path(base_dir)
    weight_keys = {f.name for f in fields(LossWeights)}
    tkw = _build(TrainConfig, sec["train"], extra=weight_keys)
    wkw = {k: float(v) for k, v in sec["train"].items() if k in weight_keys}
    train = TrainConfig(**tkw, weights=LossWeights(**wkw))
    infer_cfg = InferConfig(**_build(InferConfig, sec["infer"]))
    model = {k: int(v) for k, v in sec["model"].items()}
    bad = set(model) - {"enc_layers", "dec_layers", "hidden", "dec_hidden", "seed"}
    if bad:
        raise KeyError(f"unknown model keys {sorted(bad)}")
    exp = sec["experiment"]
    out_dir = base_dir / exp.get("out_dir", "runs/experiment")
    sweep = {k: [v.strip() for v in raw.split(",")] for k, raw in sec["sweep"].items()}
    for key in sweep:
        section, _, name = key.partition(".")
        if section not in ("data", "model", "train", "infer") or not name:
            raise KeyError(f"sweep key {key!r} must look like section.field")
    formulas = sec["logic"].get("formulas")
    return ExperimentConfig(
        data=sec["data"],
        model=model,
        train=train,
        infer=infer_cfg,
        formulas_path=str(base_dir / formulas) if formulas else None,
        out_dir=out_dir,
        eval_window=int(exp.get("eval_window", 10)),
        sweep=sweep,
        base_dir=base_dir,
    )


def load_experiment_config(path):
    path = Path(path)
    return parse_experiment_config(path.read_text(), base_dir=path.parent)


def _apply_override(cfg, key, value):
    section, _, name = key.partition(".")
    if section == "data":
        return replace(cfg, data={**cfg.data, name: value})
    if section == "model":
        return replace(cfg, model={**cfg.model, name: int(value)})
    if section == "infer":
        return replace(cfg, infer=replace(cfg.infer, **{name: _typed(value, getattr(cfg.infer, name))}))
    if name in {f.name for f in fields(LossWeights)}:
        return replace(cfg, train=replace(cfg.train, weights=replace(cfg.train.weights, **{name: float(value)})))
    return replace(cfg, train=replace(cfg.train, **{name: _typed(value, getattr(cfg.train, name))}))


def _data_spec(data):
    spec = WorkflowSpec()
    kw = {}
    for key in ("noise_std", "repeat_block", "skip_marking_block", "duration_sigma"):
        if key in data:
            kw[key] = float(data[key])
    for key in ("feat_dim", "boundary_blur_w", "max_repeats"):
        if key in data:
            kw[key] = int(data[key])
    if "frames_min" in data or "frames_max" in data:
        kw["frames_range"] = (int(data.get("frames_min", spec.frames_range[0])), int(data.get("frames_max", spec.frames_range[1])))
    return replace(spec, **kw)


def prepare_data(cfg):
    """Use ``data.dir`` if it holds a manifest, otherwise generate it there."""
    data = cfg.data
    root = cfg.base_dir / data["dir"] if "dir" in data else cfg.out_dir / "data"
    if (root / "manifest.txt").exists():
        return Manifest.read(root)
    return gen_dataset(
        _data_spec(data),
        int(data.get("n_train", 200)),
        int(data.get("n_val", 20)),
        int(data.get("n_test", 40)),
        int(data.get("seed", 0)),
        root,
    )


def run_single(cfg, out_dir, progress=None):
    """Train, evaluate, and write checkpoint, report and prediction ribbons."""
    out_dir = Path(out_dir)
    (out_dir / "ribbons").mkdir(parents=True, exist_ok=True)
    manifest = prepare_data(cfg)
    phases = manifest.meta.get("phases", ",".join(ESD_PHASES)).split(",")
    formulas = load_formulas(cfg.formulas_path, phases)
    train = [(lab, f) for _, lab, f in load_split(manifest, "train")]
    val = [(lab, f) for _, lab, f in load_split(manifest, "val")]
    dcfg = DenoiserConfig(
        feat_dim=train[0][1].shape[1],
        num_classes=len(phases),
        total_steps=cfg.train.total_steps,
        **{k: v for k, v in cfg.model.items() if k != "seed"},
    )
    params = init_params(dcfg, cfg.model.get("seed", 0))
    started = time.perf_counter()
    best, history = fit(params, train, val, cfg.train, formulas, cfg.infer, progress)
    log.info("trained %d epochs in %.1fs", len(history), time.perf_counter() - started)
    save_checkpoint(best, out_dir / "checkpoint.bin")
    # test data is read only once training has finished
    test = load_split(manifest, "test")
    sched = make_schedule(cfg.train.total_steps)
    pairs = []
    for sid, labels, feats in test:
        probs, _ = infer(best, feats, sched, cfg.infer, labels=labels)
        write_ribbon(out_dir / "ribbons" / f"{sid}.csv", labels, probs)
        pairs.append((probs.argmax(axis=1), labels))
    report = evaluate_sequences(pairs, formulas, cfg.eval_window)
    ncm = ncm_fit([f for _, f in train], [lab for lab, _ in train], len(phases))
    values = {
        "epochs_run": len(history),
        "parameters": best.count,
        "final_train_loss": history[-1]["loss"],
        "best_val_jaccard": max((h.get("val_jaccard", float("nan")) for h in history), default=float("nan")),
        **{f"test_{k}": v for k, v in report.as_dict().items()},
        "baseline_ncm_accuracy": ncm_accuracy(ncm, [f for _, _, f in test], [lab for _, lab, _ in test]),
        "pl_weight": cfg.train.weights.pl,
        "mask_strategies": cfg.train.mask_strategies,
        "infer_steps": cfg.infer.steps,
        "train_seed": cfg.train.seed,
        "infer_seed": cfg.infer.seed,
    }
    write_report(out_dir / "report.txt", values)
    return values


def run_experiment(config_file, progress=None):
    """Run one experiment or every cell of its ``[sweep]`` grid.

    Returns {cell name: report values}.  Each cell gets its own output
    directory holding ``checkpoint.bin``, ``report.txt`` and ``ribbons/``.
    """
    cfg = load_experiment_config(config_file) if not isinstance(config_file, ExperimentConfig) else config_file
    if not cfg.sweep:
        return {"main": run_single(cfg, cfg.out_dir, progress)}
    keys = list(cfg.sweep)
    results = {}
    for combo in itertools.product(*(cfg.sweep[k] for k in keys)):
        cell_cfg = cfg
        for key, value in zip(keys, combo):
            cell_cfg = _apply_override(cell_cfg, key, value)
        name = "__".join(f"{k.split('.', 1)[1]}={v}" for k, v in zip(keys, combo))
        results[name] = run_single(cell_cfg, cfg.out_dir / name, progress)
    return results
