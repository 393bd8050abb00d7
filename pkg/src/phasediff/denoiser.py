"""Step-aware conditional denoiser built from gated dilated temporal convolutions.

The encoder turns per-frame features into a conditioning sequence plus an
auxiliary framewise classification.  The decoder takes a noisy label
sequence in [-1, 1] space, the diffusion step and the (masked) conditioning
sequence, and returns framewise phase probabilities.
"""

from __future__ import annotations

import functools
import struct
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as tc

KERNEL = 3
POS_FREQS = 4
CKPT_MAGIC = b"CPKDCKPT"
CKPT_VERSION = 1
_HEADER = struct.Struct("<8sIIIIIIII")


@dataclass(frozen=True)
class DenoiserConfig:
    feat_dim: int
    num_classes: int
    enc_layers: int = 6
    dec_layers: int = 4
    hidden: int = 32
    dec_hidden: int = 32
    total_steps: int = 1000

    def __post_init__(self):
        if min(asdict(self).values()) < 1:
            raise ValueError(f"all denoiser dimensions must be >= 1: {self}")


def _gated_block_shapes(prefix, width):
    return [
        (f"{prefix}.conv_w", (KERNEL, width, 2 * width)),
        (f"{prefix}.conv_b", (2 * width,)),
        (f"{prefix}.out_w", (width, width)),
        (f"{prefix}.out_b", (width,)),
    ]


def param_shapes(cfg):
    """Parameter names and shapes in declaration (checkpoint) order."""
    D, C, H, Hd = cfg.feat_dim, cfg.num_classes, cfg.hidden, cfg.dec_hidden
    shapes = [("enc.in_w", (D, H)), ("enc.in_b", (H,))]
    for layer in range(cfg.enc_layers):
        shapes += _gated_block_shapes(f"enc.{layer}", H)
    shapes += [("enc.aux_w", (H, C)), ("enc.aux_b", (C,))]
    shapes += [
        ("dec.y_w", (C, Hd)),
        ("dec.y_b", (Hd,)),
        ("dec.in_w", (Hd + H + 2 * POS_FREQS, Hd)),
        ("dec.in_b", (Hd,)),
        ("dec.step_w", (Hd, Hd)),
        ("dec.step_b", (Hd,)),
    ]
    for layer in range(cfg.dec_layers):
        shapes += _gated_block_shapes(f"dec.{layer}", Hd)
    shapes += [("dec.out_w", (Hd, C)), ("dec.out_b", (C,))]
    return shapes


@dataclass
class DenoiserParams:
    config: DenoiserConfig
    arrays: OrderedDict = field(default_factory=OrderedDict)

    @property
    def count(self):
        return int(sum(a.size for a in self.arrays.values()))

    def leaves(self, requires_grad=True):
        return OrderedDict((k, tc.Value(v, requires_grad=requires_grad)) for k, v in self.arrays.items())

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays.values()])

    def copy(self):
        return DenoiserParams(self.config, OrderedDict((k, v.copy()) for k, v in self.arrays.items()))


def init_params(config, seed=0):
    """Fan-in scaled uniform weights, zero biases; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    arrays = OrderedDict()
    for name, shape in param_shapes(config):
        if name.endswith("_b"):
            arrays[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[:-1]))
            bound = 1.0 / np.sqrt(fan_in)
            arrays[name] = rng.uniform(-bound, bound, size=shape)
    return DenoiserParams(config, arrays)


@functools.lru_cache(maxsize=8)
def step_table(total_steps, width):
    """Sinusoidal embedding of steps 0..total_steps, shape (S+1, width)."""
    half = (width + 1) // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half, 1))
    args = np.arange(total_steps + 1)[:, None] * freqs[None, :]
    table = np.concatenate([np.sin(args), np.cos(args)], axis=1)[:, :width]
    table.setflags(write=False)
    return table


@functools.lru_cache(maxsize=64)
def position_features(T):
    """Relative-position channels cos/sin(pi k u), u = frame / (T - 1)."""
    u = np.arange(T) / max(T - 1, 1)
    k = np.arange(1, POS_FREQS + 1)
    ang = np.pi * u[:, None] * k[None, :]
    feats = np.concatenate([np.cos(ang), np.sin(ang)], axis=1)
    feats.setflags(write=False)
    return feats


def _as_leaves(params):
    if isinstance(params, DenoiserParams):
        return params.leaves(requires_grad=False), params.config
    return params, None


def _gated_stack(p, prefix, h, layers):
    for layer in range(layers):
        pre = f"{prefix}.{layer}"
        z = tc.conv1d(h, p[f"{pre}.conv_w"], p[f"{pre}.conv_b"], dilation=2**layer)
        width = h.shape[1]
        gate = tc.tanh(z[:, :width]) * tc.sigmoid(z[:, width:])
        h = h + gate @ p[f"{pre}.out_w"] + p[f"{pre}.out_b"]
    return h


def _layers(p, prefix):
    return len({k.split(".")[1] for k in p if k.startswith(prefix + ".") and k.split(".")[1].isdigit()})


def encode(params, features):
    """Features (T, D) -> (conditioning (T, H), auxiliary probabilities (T, C))."""
    p, _ = _as_leaves(params)
    feats = np.asarray(features, dtype=np.float64)
    if not np.all(np.isfinite(feats)):
        raise ValueError("encode: non-finite features")
    h = tc.Value(feats) @ p["enc.in_w"] + p["enc.in_b"]
    h = _gated_stack(p, "enc", h, _layers(p, "enc"))
    aux = tc.softmax(h @ p["enc.aux_w"] + p["enc.aux_b"], axis=1)
    return h, aux


def decode(params, y_t, t, cond_masked, total_steps=None):
    """Noisy labels (T, C) at step ``t`` plus masked conditioning -> probabilities (T, C)."""
    p, cfg = _as_leaves(params)
    if total_steps is None:
        total_steps = cfg.total_steps if cfg is not None else 1000
    if not 1 <= t <= total_steps:
        raise ValueError(f"diffusion step {t} outside [1, {total_steps}]")
    y_t = tc.as_value(y_t)
    cond_masked = tc.as_value(cond_masked)
    T = y_t.shape[0]
    Hd = p["dec.y_w"].shape[1]
    y = y_t @ p["dec.y_w"] + p["dec.y_b"]
    z = tc.concat([y, cond_masked, tc.Value(position_features(T))], axis=1)
    h = z @ p["dec.in_w"] + p["dec.in_b"]
    emb = tc.Value(step_table(total_steps, Hd)[t : t + 1])
    h = h + (emb @ p["dec.step_w"] + p["dec.step_b"])
    h = _gated_stack(p, "dec", h, _layers(p, "dec"))
    return tc.softmax(h @ p["dec.out_w"] + p["dec.out_b"], axis=1)


def save_checkpoint(params, path):
    cfg = params.config
    header = _HEADER.pack(
        CKPT_MAGIC,
        CKPT_VERSION,
        cfg.feat_dim,
        cfg.num_classes,
        cfg.enc_layers,
        cfg.dec_layers,
        cfg.hidden,
        cfg.dec_hidden,
        cfg.total_steps,
    )
    flat = params.flat().astype("<f8")
    Path(path).write_bytes(header + struct.pack("<Q", flat.size) + flat.tobytes())


def load_checkpoint(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size + 8:
        raise ValueError(f"{path}: truncated checkpoint")
    magic, version, *dims = _HEADER.unpack_from(raw)
    if magic != CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    cfg = DenoiserConfig(*dims)
    (n,) = struct.unpack_from("<Q", raw, _HEADER.size)
    flat = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size + 8)
    shapes = param_shapes(cfg)
    expected = sum(int(np.prod(s)) for _, s in shapes)
    if n != expected or flat.size != n:
        raise ValueError(f"{path}: expected {expected} parameters, found {flat.size}")
    arrays = OrderedDict()
    pos = 0
    for name, shape in shapes:
        size = int(np.prod(shape))
        arrays[name] = flat[pos : pos + size].reshape(shape).astype(np.float64)
        pos += size
    return DenoiserParams(cfg, arrays)
