"""Shared-MLP + pooling head with hand-written backprop.

Each pair row goes through ``Linear -> BatchNorm -> ReLU`` layers, then the
rows belonging to one point are pooled (sum, avg or max) into that point's
representation. Batch-norm statistics in train mode are taken over every
pair row in the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import OpfrError

POOLINGS = ("sum", "avg", "max")
BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass(frozen=True)
class MlpSpec:
    widths: Tuple[int, ...] = (9, 30, 30, 30)
    batch_norm: Tuple[bool, ...] = ()
    pooling: str = "sum"
    use_bias: bool = True

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 1 or any(w < 1 for w in widths):
            raise ValueError(f"invalid layer widths {self.widths}")
        object.__setattr__(self, "widths", widths)
        bn = self.batch_norm
        if isinstance(bn, bool):
            bn = (bn,) * self.n_layers
        elif len(bn) == 0:
            bn = (True,) * self.n_layers
        bn = tuple(bool(b) for b in bn)
        if len(bn) != self.n_layers:
            raise ValueError(f"batch_norm needs {self.n_layers} flags, got {len(bn)}")
        object.__setattr__(self, "batch_norm", bn)
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]


def param_count(spec: MlpSpec) -> int:
    """Learnable parameters: weights, biases, batch-norm scale and shift."""
    total = 0
    for l in range(spec.n_layers):
        fan_in, fan_out = spec.widths[l], spec.widths[l + 1]
        total += fan_in * fan_out + (fan_out if spec.use_bias else 0)
        if spec.batch_norm[l]:
            total += 2 * fan_out
    return total


@dataclass
class MlpParams:
    spec: MlpSpec
    weights: List[np.ndarray]
    biases: List[Optional[np.ndarray]]
    gammas: List[Optional[np.ndarray]]
    betas: List[Optional[np.ndarray]]
    running_mean: List[Optional[np.ndarray]]
    running_var: List[Optional[np.ndarray]]

    def learnable(self) -> Dict[str, np.ndarray]:
        """Named views of every learnable array (updates write through)."""
        out = {}
        for l in range(self.spec.n_layers):
            out[f"W{l}"] = self.weights[l]
            if self.biases[l] is not None:
                out[f"b{l}"] = self.biases[l]
            if self.gammas[l] is not None:
                out[f"gamma{l}"] = self.gammas[l]
                out[f"beta{l}"] = self.betas[l]
        return out

    def copy(self) -> "MlpParams":
        def cp(xs):
            return [None if x is None else x.copy() for x in xs]
        return MlpParams(self.spec, cp(self.weights), cp(self.biases), cp(self.gammas),
                         cp(self.betas), cp(self.running_mean), cp(self.running_var))


def init_params(spec: MlpSpec, seed: int = 0) -> MlpParams:
    """Uniform fan-in initialisation, U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    rng = np.random.default_rng(seed)
    W, b, g, be, rm, rv = [], [], [], [], [], []
    for l in range(spec.n_layers):
        fan_in, fan_out = spec.widths[l], spec.widths[l + 1]
        bound = 1.0 / np.sqrt(fan_in)
        W.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        b.append(rng.uniform(-bound, bound, size=fan_out) if spec.use_bias else None)
        if spec.batch_norm[l]:
            g.append(np.ones(fan_out))
            be.append(np.zeros(fan_out))
            rm.append(np.zeros(fan_out))
            rv.append(np.ones(fan_out))
        else:
            g.append(None); be.append(None); rm.append(None); rv.append(None)
    return MlpParams(spec, W, b, g, be, rm, rv)


@dataclass
class ForwardCache:
    mode: str
    batch_shape: Tuple[int, ...]
    layers: List[dict] = field(default_factory=list)
    pooled_from: Optional[np.ndarray] = None   # (B, K, C) activations before pooling


def _as_batch(pairs: np.ndarray, spec: MlpSpec):
    x = np.asarray(pairs, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3:
        raise ValueError(f"pairs must be (K, D) or (B, K, D), got shape {x.shape}")
    if x.shape[-1] != spec.in_dim:
        raise ValueError(f"pair features have {x.shape[-1]} columns, spec expects {spec.in_dim}")
    if x.shape[1] < 1:
        raise ValueError("need at least one pair row per point")
    return x, single


def opfr_forward_cached(pairs, params: MlpParams, mode: str = "eval",
                        update_stats: bool = False) -> Tuple[np.ndarray, ForwardCache]:
    """Forward pass returning (pooled output, cache for :func:`opfr_backward`)."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    spec = params.spec
    x, single = _as_batch(pairs, spec)
    B, K, D = x.shape
    cache = ForwardCache(mode, (B, K))
    a = x.reshape(B * K, D)
    for l in range(spec.n_layers):
        rec = {"x": a}
        z = a @ params.weights[l]
        if params.biases[l] is not None:
            z = z + params.biases[l]
        if spec.batch_norm[l]:
            if mode == "train":
                mu = z.mean(axis=0)
                zc = z - mu
                var = np.einsum("ij,ij->j", zc, zc) / zc.shape[0]
                if update_stats:
                    params.running_mean[l] *= 1 - BN_MOMENTUM
                    params.running_mean[l] += BN_MOMENTUM * mu
                    n = z.shape[0]
                    unbiased = var * n / max(n - 1, 1)
                    params.running_var[l] *= 1 - BN_MOMENTUM
                    params.running_var[l] += BN_MOMENTUM * unbiased
            else:
                mu, var = params.running_mean[l], params.running_var[l]
                zc = z - mu
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            zh = zc * inv_std
            rec["zh"], rec["inv_std"] = zh, inv_std
            y = zh * params.gammas[l] + params.betas[l]
        else:
            y = z
        a = np.maximum(y, 0.0)
        rec["active"] = y > 0
        cache.layers.append(rec)
    h = a.reshape(B, K, -1)
    cache.pooled_from = h
    if spec.pooling == "sum":
        out = h.sum(axis=1)
    elif spec.pooling == "avg":
        out = h.mean(axis=1)
    else:
        out = h.max(axis=1)
    return (out[0] if single else out), cache


def opfr_forward(pairs, params: MlpParams, mode: str = "eval") -> np.ndarray:
    """Pooled representation for (K, D) pair rows, or (B, K, D) batches."""
    return opfr_forward_cached(pairs, params, mode)[0]


def opfr_backward(cache: Optional[ForwardCache], params: MlpParams,
                  upstream) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """Gradients of ``sum(upstream * output)``.

    Returns ``(param_grads, input_grad)``; ``param_grads`` is keyed like
    :meth:`MlpParams.learnable` and ``input_grad`` has the input's shape.
    """
    if cache is None or cache.pooled_from is None:
        raise OpfrError("opfr_backward needs the cache from a forward pass")
    spec = params.spec
    B, K = cache.batch_shape
    g = np.asarray(upstream, dtype=np.float64).reshape(B, -1)
    h = cache.pooled_from
    if spec.pooling == "sum":
        dh = np.broadcast_to(g[:, None, :], h.shape)
    elif spec.pooling == "avg":
        dh = np.broadcast_to(g[:, None, :] / K, h.shape)
    else:
        # gradient goes to the first row attaining the max
        arg = h.argmax(axis=1)
        dh = np.zeros_like(h)
        np.put_along_axis(dh, arg[:, None, :], g[:, None, :], axis=1)
    da = dh.reshape(B * K, -1)
    grads: Dict[str, np.ndarray] = {}
    for l in reversed(range(spec.n_layers)):
        rec = cache.layers[l]
        dy = da * rec["active"]
        if spec.batch_norm[l]:
            zh, inv_std = rec["zh"], rec["inv_std"]
            grads[f"gamma{l}"] = np.einsum("ij,ij->j", dy, zh)
            grads[f"beta{l}"] = dy.sum(axis=0)
            dzh = dy * params.gammas[l]
            if cache.mode == "train":
                n = dzh.shape[0]
                dz = inv_std / n * (n * dzh - dzh.sum(axis=0) - zh * np.einsum("ij,ij->j", dzh, zh))
            else:
                dz = dzh * inv_std
        else:
            dz = dy
        grads[f"W{l}"] = rec["x"].T @ dz
        if params.biases[l] is not None:
            grads[f"b{l}"] = dz.sum(axis=0)
        da = dz @ params.weights[l].T
    dx = da.reshape(B, K, -1)
    return grads, dx
