"""Residual MLP over time bins with hand-written forward/backward passes.

The network is: input projection -> n residual blocks -> output layer, where
each block is Linear -> BatchNorm -> ReLU -> Dropout wrapped in an identity
skip.  Everything runs in float64 and gradients are computed analytically,
including the flow through train-mode batch statistics and dropout masks, so
they can be checked against central finite differences.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import bin_midpoints

BN_EPS = 1e-5
BN_MOMENTUM = 0.1

HEADS = ("cat", "mtlr")


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    hidden_dim: int = 32
    n_blocks: int = 2
    dropout_rate: float = 0.2
    head: str = "cat"
    k_bins: int = 10

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_dim < 1 or self.n_blocks < 0:
            raise ValueError("dimensions must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}")
        if self.k_bins < 2:
            raise ValueError("k_bins must be at least 2")

    @property
    def out_dim(self) -> int:
        # the mtlr head derives bin k's mass from k..k-1 suffix sums, so it
        # needs one output fewer than the number of bins
        return self.k_bins if self.head == "cat" else self.k_bins - 1


@dataclass(eq=False)
class ModelParams:
    """Named tensor store; running BatchNorm statistics are not trainable."""

    config: ModelConfig
    tensors: dict[str, np.ndarray]
    updates: int = 0

    @staticmethod
    def is_trainable(name: str) -> bool:
        return not name.endswith((".mean", ".var"))

    def trainable_names(self) -> list[str]:
        return [n for n in self.tensors if self.is_trainable(n)]

    def n_parameters(self) -> int:
        return int(sum(self.tensors[n].size for n in self.trainable_names()))

    def copy(self) -> "ModelParams":
        return ModelParams(
            config=self.config,
            tensors={k: v.copy() for k, v in self.tensors.items()},
            updates=self.updates,
        )


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Scaled-uniform weight init (bound 1/sqrt(fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}

    def linear(name, fan_in, fan_out):
        bound = 1.0 / math.sqrt(fan_in)
        tensors[f"{name}.w"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        tensors[f"{name}.b"] = np.zeros(fan_out)

    linear("input", config.input_dim, config.hidden_dim)
    for b in range(config.n_blocks):
        linear(f"block{b}.linear", config.hidden_dim, config.hidden_dim)
        tensors[f"block{b}.bn.scale"] = np.ones(config.hidden_dim)
        tensors[f"block{b}.bn.shift"] = np.zeros(config.hidden_dim)
        tensors[f"block{b}.bn.mean"] = np.zeros(config.hidden_dim)
        tensors[f"block{b}.bn.var"] = np.ones(config.hidden_dim)
    linear("output", config.hidden_dim, config.out_dim)
    return ModelParams(config=config, tensors=tensors, updates=0)


@dataclass(eq=False)
class _BlockCache:
    x: np.ndarray          # block input
    xhat: np.ndarray       # normalized pre-activation
    inv_std: np.ndarray    # 1/sqrt(batch var + eps)
    gate: np.ndarray       # relu mask on scale*xhat + shift
    mask: np.ndarray | None
    keep: float
    batch_mean: np.ndarray
    batch_var: np.ndarray


@dataclass(eq=False)
class ForwardCache:
    x0: np.ndarray
    blocks: list[_BlockCache] = field(default_factory=list)
    h_final: np.ndarray | None = None


def forward(params: ModelParams, x: np.ndarray, mode: str = "train",
            seed: int | None = None):
    """Run the network; returns (logits, cache) in train mode, (logits, None) in eval.

    Train mode uses batch statistics (batch size >= 2 required), draws
    dropout masks from ``seed`` and updates the running statistics in place.
    Eval mode is a pure function of (params, x).
    """
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    cfg = params.config
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cfg.input_dim:
        raise ValueError(f"expected input of shape (n, {cfg.input_dim})")
    train = mode == "train"
    if train and x.shape[0] < 2:
        raise ValueError("train-mode forward needs batch size >= 2 for batch statistics")
    rng = None
    if train and cfg.dropout_rate > 0.0:
        if seed is None:
            raise ValueError("train-mode forward with dropout needs a seed")
        rng = np.random.default_rng(seed)

    t = params.tensors
    h = x @ t["input.w"] + t["input.b"]
    cache = ForwardCache(x0=x) if train else None
    keep = 1.0 - cfg.dropout_rate

    for b in range(cfg.n_blocks):
        z = h @ t[f"block{b}.linear.w"] + t[f"block{b}.linear.b"]
        if train:
            mean = z.mean(axis=0)
            var = z.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (z - mean) * inv_std
            t[f"block{b}.bn.mean"] *= 1.0 - BN_MOMENTUM
            t[f"block{b}.bn.mean"] += BN_MOMENTUM * mean
            t[f"block{b}.bn.var"] *= 1.0 - BN_MOMENTUM
            t[f"block{b}.bn.var"] += BN_MOMENTUM * var
        else:
            mean = t[f"block{b}.bn.mean"]
            var = t[f"block{b}.bn.var"]
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (z - mean) * inv_std
        y = t[f"block{b}.bn.scale"] * xhat + t[f"block{b}.bn.shift"]
        gate = y > 0
        a = np.where(gate, y, 0.0)
        mask = None
        if train and cfg.dropout_rate > 0.0:
            mask = rng.random(a.shape) >= cfg.dropout_rate
            d = a * mask / keep
        else:
            d = a
        if train:
            cache.blocks.append(_BlockCache(
                x=h, xhat=xhat, inv_std=inv_std, gate=gate, mask=mask,
                keep=keep, batch_mean=mean, batch_var=var,
            ))
        h = h + d

    logits = h @ t["output.w"] + t["output.b"]
    if train:
        cache.h_final = h
        params.updates += 1
        return logits, cache
    return logits, None


def backward(params: ModelParams, cache: ForwardCache,
             grad_logits: np.ndarray) -> dict[str, np.ndarray]:
    """Exact gradients of sum(grad_logits * logits) w.r.t. every trainable tensor."""
    cfg = params.config
    t = params.tensors
    g = np.asarray(grad_logits, dtype=np.float64)
    n = cache.x0.shape[0]
    if g.shape != (n, cfg.out_dim):
        raise ValueError(f"grad_logits must have shape ({n}, {cfg.out_dim})")

    grads: dict[str, np.ndarray] = {}
    grads["output.w"] = cache.h_final.T @ g
    grads["output.b"] = g.sum(axis=0)
    dh = g @ t["output.w"].T

    for b in range(cfg.n_blocks - 1, -1, -1):
        blk = cache.blocks[b]
        dd = dh  # gradient reaching the dropout output on the residual branch
        if blk.mask is not None:
            da = dd * blk.mask / blk.keep
        else:
            da = dd
        dy = np.where(blk.gate, da, 0.0)
        grads[f"block{b}.bn.scale"] = (dy * blk.xhat).sum(axis=0)
        grads[f"block{b}.bn.shift"] = dy.sum(axis=0)
        dxhat = dy * t[f"block{b}.bn.scale"]
        # batch-statistics backward: mean and variance both depend on z
        m = dxhat.shape[0]
        dz = (blk.inv_std / m) * (
            m * dxhat
            - dxhat.sum(axis=0)
            - blk.xhat * (dxhat * blk.xhat).sum(axis=0)
        )
        grads[f"block{b}.linear.w"] = blk.x.T @ dz
        grads[f"block{b}.linear.b"] = dz.sum(axis=0)
        dh = dh + dz @ t[f"block{b}.linear.w"].T

    grads["input.w"] = cache.x0.T @ dh
    grads["input.b"] = dh.sum(axis=0)
    return grads


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cat_head(logits: np.ndarray) -> np.ndarray:
    """Stable softmax over k bin logits."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite logits")
    return _softmax(z)


def mtlr_head(phi: np.ndarray) -> np.ndarray:
    """Bin masses from k-1 outputs via suffix sums.

    Bin k carries exp(phi_k + ... + phi_{K-1}) and the final bin carries
    exp(0); normalizing is a stable softmax over those K suffix sums.
    """
    f = np.asarray(phi, dtype=np.float64)
    if not np.all(np.isfinite(f)):
        raise ValueError("non-finite head inputs")
    squeeze = f.ndim == 1
    f = np.atleast_2d(f)
    suffix = np.cumsum(f[:, ::-1], axis=1)[:, ::-1]
    z = np.concatenate([suffix, np.zeros((f.shape[0], 1))], axis=1)
    p = _softmax(z)
    return p[0] if squeeze else p


def _softmax_backward(pmf: np.ndarray, grad_pmf: np.ndarray) -> np.ndarray:
    inner = (pmf * grad_pmf).sum(axis=-1, keepdims=True)
    return pmf * (grad_pmf - inner)


def cat_head_backward(pmf: np.ndarray, grad_pmf: np.ndarray) -> np.ndarray:
    """Chain a pmf gradient through the cat head back to the logits."""
    return _softmax_backward(np.asarray(pmf, dtype=np.float64),
                             np.asarray(grad_pmf, dtype=np.float64))


def mtlr_head_backward(pmf: np.ndarray, grad_pmf: np.ndarray) -> np.ndarray:
    """Chain a pmf gradient through the mtlr head back to the k-1 outputs."""
    p = np.atleast_2d(np.asarray(pmf, dtype=np.float64))
    g = np.atleast_2d(np.asarray(grad_pmf, dtype=np.float64))
    dz = _softmax_backward(p, g)
    # suffix-sum z_k = phi_k + ... + phi_{K-1}: d/dphi_j accumulates dz_1..dz_j
    dphi = np.cumsum(dz, axis=1)[:, :-1]
    if np.asarray(grad_pmf).ndim == 1:
        return dphi[0]
    return dphi


def apply_head(head: str, raw: np.ndarray) -> np.ndarray:
    if head == "cat":
        return cat_head(raw)
    if head == "mtlr":
        return mtlr_head(raw)
    raise ValueError(f"unknown head {head!r}")


def head_backward(head: str, pmf: np.ndarray, grad_pmf: np.ndarray) -> np.ndarray:
    if head == "cat":
        return cat_head_backward(pmf, grad_pmf)
    if head == "mtlr":
        return mtlr_head_backward(pmf, grad_pmf)
    raise ValueError(f"unknown head {head!r}")


def predict_risk(pmf: np.ndarray):
    """Risk score 1 - sum_k p_k * midpoint_k, confined to [1/2k, (2k-1)/2k]."""
    p = np.asarray(pmf, dtype=np.float64)
    squeeze = p.ndim == 1
    p = np.atleast_2d(p)
    mids = bin_midpoints(p.shape[1])
    risk = 1.0 - p @ mids
    return float(risk[0]) if squeeze else risk


def predict_survival(pmf: np.ndarray, k: int):
    """Probability of surviving past bin ``k``: 1 - cdf(k), clamped to [0, 1]."""
    p = np.asarray(pmf, dtype=np.float64)
    squeeze = p.ndim == 1
    p = np.atleast_2d(p)
    if not 1 <= k <= p.shape[1]:
        raise ValueError(f"bin index {k} outside 1..{p.shape[1]}")
    s = np.clip(1.0 - p[:, :k].sum(axis=1), 0.0, 1.0)
    return float(s[0]) if squeeze else s


CHECKPOINT_FORMAT = "binsurv-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: ModelParams, meta: dict | None = None) -> None:
    """Serialize params as JSON: version tag, config, shapes, row-major values.

    repr-based float encoding makes the file byte-identical across reruns of
    the same training job.
    """
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": {
            "input_dim": params.config.input_dim,
            "hidden_dim": params.config.hidden_dim,
            "n_blocks": params.config.n_blocks,
            "dropout_rate": params.config.dropout_rate,
            "head": params.config.head,
            "k_bins": params.config.k_bins,
        },
        "updates": params.updates,
        "tensors": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in params.tensors.items()
        },
        "meta": meta or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns (params, meta)."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a binsurv checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    cfg = ModelConfig(**payload["config"])
    tensors = {
        name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in payload["tensors"].items()
    }
    params = ModelParams(config=cfg, tensors=tensors, updates=int(payload["updates"]))
    return params, payload.get("meta", {})
