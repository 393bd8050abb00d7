"""Synthetic ESD-style workflows: rule-abiding phase sequences and noisy features.

Features are a per-class mean vector plus Gaussian noise.  Around each
phase change the mean is linearly interpolated between the two phases over
``blur_w`` frames on either side, so boundaries are ambiguous in feature
space while labels stay crisp.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .formats import one_hot, read_features, read_labels, write_features, write_labels
from .logic import ESD_PHASES

# mean duration (frames at 1 fps) of each phase
DEFAULT_DURATIONS = (30.0, 20.0, 18.0, 18.0, 22.0, 45.0, 20.0, 16.0)
PREP, EST, MARK, INJ, INC, ESD, VESSEL, CLIPS = range(8)


@dataclass(frozen=True)
class WorkflowSpec:
    phases: tuple = ESD_PHASES
    frames_range: tuple = (150, 300)
    mean_durations: tuple = DEFAULT_DURATIONS
    duration_sigma: float = 0.25
    repeat_block: float = 0.2
    max_repeats: int = 2
    skip_marking_block: float = 0.0
    feat_dim: int = 16
    boundary_blur_w: int = 6
    noise_std: float = 0.6
    mean_scale: float = 1.0

    def __post_init__(self):
        if len(self.phases) != 8 or len(self.mean_durations) != 8:
            raise ValueError("the workflow generator is defined for the eight ESD phases")
        for name in ("repeat_block", "skip_marking_block"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be a probability")
        lo, hi = self.frames_range
        if lo < len(self.phases) or hi < lo:
            raise ValueError(f"bad frames_range {self.frames_range}")
        if self.max_repeats < 1:
            raise ValueError("max_repeats must be >= 1")

    @property
    def num_classes(self):
        return len(self.phases)

    def lognormal_params(self):
        """(mu, sigma) per phase with E[duration] = mean_durations."""
        m = np.asarray(self.mean_durations, dtype=np.float64)
        s = self.duration_sigma
        return np.log(m) - 0.5 * s * s, np.full(len(m), s)


def phase_order(spec, rng):
    """Draw the ordered list of phases (with block repeats / skips)."""
    order = [PREP, EST]
    if rng.random() < spec.skip_marking_block:
        # no Marking block means nothing that must follow it either
        return order
    k = 1
    while k < spec.max_repeats and rng.random() < spec.repeat_block:
        k += 1
    order.append(MARK)
    order += [INJ, INC, ESD] * k
    order += [VESSEL, CLIPS]
    return order


def draw_durations(spec, order, rng, max_attempts=100):
    """Lognormal frame counts for ``order``, resampled until the total fits ``frames_range``.

    A workflow shorter than the single-block one has its phases stretched
    by a common factor so its expected length matches.
    """
    mu, sigma = spec.lognormal_params()
    full = np.asarray(spec.mean_durations)
    stretch = full.sum() / full[order].sum()
    if stretch > 1:
        mu = mu + np.log(stretch)
    lo, hi = spec.frames_range
    for _ in range(max_attempts):
        d = np.maximum(1, np.rint(rng.lognormal(mu[order], sigma[order])).astype(int))
        if lo <= d.sum() <= hi:
            return d
    raise RuntimeError(f"could not draw durations within {spec.frames_range} in {max_attempts} attempts")


def draw_class_means(spec, rng):
    """Unit-scale class means; multiply by ``spec.mean_scale`` for use."""
    return rng.standard_normal((spec.num_classes, spec.feat_dim))


def mean_signal(labels, unit_means, blur_w):
    """Per-frame noiseless feature mean with linear blending around changes."""
    labels = np.asarray(labels)
    T = len(labels)
    base = unit_means[labels].copy()
    if blur_w <= 0:
        return base
    changes = np.flatnonzero(labels[1:] != labels[:-1]) + 1  # first frame of each new phase
    if len(changes) == 0:
        return base
    frames = np.arange(T)
    # nearest change for every frame
    pos = np.searchsorted(changes, frames)
    left = changes[np.clip(pos - 1, 0, len(changes) - 1)]
    right = changes[np.clip(pos, 0, len(changes) - 1)]
    nearest = np.where(np.abs(frames - (left - 0.5)) <= np.abs(frames - (right - 0.5)), left, right)
    delta = frames - (nearest - 0.5)
    near = np.abs(delta) < blur_w
    mix = 0.5 + delta / (2.0 * blur_w)
    before = unit_means[labels[nearest - 1]]
    after = unit_means[labels[nearest]]
    blended = (1.0 - mix)[:, None] * before + mix[:, None] * after
    base[near] = blended[near]
    return base


def _gen_parts(spec, rng, unit_means):
    order = phase_order(spec, rng)
    durations = draw_durations(spec, order, rng)
    labels = np.repeat(order, durations)
    signal = mean_signal(labels, unit_means, spec.boundary_blur_w)
    noise = rng.standard_normal(signal.shape) * spec.noise_std
    return labels, signal, noise


def gen_sequence(spec, rng, class_means=None):
    """Returns (one-hot labels (T, C), features (T, D)).

    ``class_means`` are unit-scale means shared by a dataset; drawn from
    ``rng`` when omitted.
    """
    if class_means is None:
        class_means = draw_class_means(spec, rng)
    labels, signal, noise = _gen_parts(spec, rng, class_means)
    return one_hot(labels, spec.num_classes), spec.mean_scale * signal + noise


# -- nearest-class-mean baseline ----------------------------------------------


def ncm_fit(features_list, labels_list, num_classes):
    X = np.concatenate(features_list)
    y = np.concatenate(labels_list)
    means = np.zeros((num_classes, X.shape[1]))
    for c in range(num_classes):
        if np.any(y == c):
            means[c] = X[y == c].mean(axis=0)
        else:
            means[c] = np.inf
    return means


def ncm_predict(means, features):
    d = ((np.asarray(features)[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    return d.argmin(axis=1)


def ncm_accuracy(means, features_list, labels_list):
    hits = sum(int((ncm_predict(means, X) == y).sum()) for X, y in zip(features_list, labels_list))
    return hits / sum(len(y) for y in labels_list)


def calibrate_mean_scale(spec, seed, unit_means=None, target=0.78, n_seq=40, lo=0.05, hi=5.0, iters=40):
    """Bisect the class-mean scale so the nearest-class-mean baseline hits ``target`` accuracy.

    Calibration sequences come from their own seed stream, so calibrating
    never shifts the dataset draws.
    """
    ss = np.random.SeedSequence([seed, 7])
    unit = draw_class_means(spec, np.random.default_rng(ss)) if unit_means is None else unit_means
    parts = [_gen_parts(spec, np.random.default_rng(child), unit) for child in ss.spawn(n_seq)]
    half = n_seq // 2
    C = spec.num_classes

    def acc(scale):
        feats = [scale * s + n for _, s, n in parts]
        labs = [lab for lab, _, _ in parts]
        means = ncm_fit(feats[:half], labs[:half], C)
        return ncm_accuracy(means, feats[half:], labs[half:])

    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if acc(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- datasets on disk -----------------------------------------------------------


@dataclass
class Manifest:
    root: Path
    meta: dict = field(default_factory=dict)
    entries: list = field(default_factory=list)  # (split, id, feat_rel, label_rel)

    def split(self, name):
        return [(sid, self.root / f, self.root / lab) for s, sid, f, lab in self.entries if s == name]

    def counts(self):
        out = {}
        for s, *_ in self.entries:
            out[s] = out.get(s, 0) + 1
        return out

    def write(self):
        lines = [f"meta {k}={v}" for k, v in self.meta.items()]
        lines += [f"seq {s} {sid} {f} {lab}" for s, sid, f, lab in self.entries]
        (self.root / "manifest.txt").write_text("\n".join(lines) + "\n")

    @classmethod
    def read(cls, root):
        root = Path(root)
        path = root / "manifest.txt" if root.is_dir() else root
        root = path.parent
        m = cls(root)
        for line in path.read_text().splitlines():
            kind, _, rest = line.partition(" ")
            if kind == "meta":
                k, _, v = rest.partition("=")
                m.meta[k] = v
            elif kind == "seq":
                m.entries.append(tuple(rest.split(" ")))
        return m


def load_split(manifest, name):
    """List of (id, labels, features) for one split."""
    out = []
    for sid, fpath, lpath in manifest.split(name):
        labels, _ = read_labels(lpath)
        out.append((sid, labels, read_features(fpath)))
    return out


def _write_one(args):
    spec, seed_seq, unit_means, fpath, lpath = args
    labels, signal, noise = _gen_parts(spec, np.random.default_rng(seed_seq), unit_means)
    write_features(fpath, spec.mean_scale * signal + noise)
    write_labels(lpath, labels, spec.num_classes)
    return len(labels)


SPLITS = ("train", "val", "test")


def gen_dataset(spec, n_train, n_val, n_test, seed, out_dir, calibrate=True, workers=1):
    """Write a reproducible dataset plus ``manifest.txt``; returns the Manifest.

    With ``calibrate`` the class-mean scale is first tuned so the
    nearest-class-mean baseline lands near 78% frame accuracy.
    """
    out = Path(out_dir)
    try:
        (out / "features").mkdir(parents=True, exist_ok=True)
        (out / "labels").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset directory {out}: {exc}") from exc
    root_seq = np.random.SeedSequence(seed)
    means_seq, *split_seqs = root_seq.spawn(1 + len(SPLITS))
    unit_means = draw_class_means(spec, np.random.default_rng(means_seq))
    if calibrate:
        spec = replace(spec, mean_scale=calibrate_mean_scale(spec, seed, unit_means))
    manifest = Manifest(out)
    manifest.meta = {
        "seed": seed,
        "mean_scale": repr(spec.mean_scale),
        "noise_std": repr(spec.noise_std),
        "boundary_blur_w": spec.boundary_blur_w,
        "feat_dim": spec.feat_dim,
        "num_classes": spec.num_classes,
        "phases": ",".join(spec.phases),
    }
    jobs = []
    for split, n, sseq in zip(SPLITS, (n_train, n_val, n_test), split_seqs):
        for i, child in enumerate(sseq.spawn(n)):
            sid = f"{split}_{i:04d}"
            frel, lrel = f"features/{sid}.feat", f"labels/{sid}.lbl"
            manifest.entries.append((split, sid, frel, lrel))
            jobs.append((spec, child, unit_means, out / frel, out / lrel))
    try:
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                list(pool.map(_write_one, jobs))
        else:
            for job in jobs:
                _write_one(job)
        manifest.write()
    except OSError as exc:
        raise OSError(f"writing dataset under {out}: {exc}") from exc
    return manifest
