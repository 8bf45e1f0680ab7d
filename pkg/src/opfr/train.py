"""Toy classification training for the OPFR head.

The head is plumbing around :mod:`opfr.model`: per-point OPFR vectors are
mean-pooled over a cloud's interest points and fed to a linear classifier.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from threadpoolctl import threadpool_limits

from .cfgen import cloud_pair_features
from .errors import OpfrError
from .model import MlpParams, MlpSpec, init_params, opfr_backward, opfr_forward_cached
from .sampling import SamplingConfig
from .synth import ToyDataset

LABEL_SMOOTHING = 0.3
# which of the 9 pair-feature columns each input variant keeps
CHANNELS = {
    "all": slice(0, 9),
    "xyz": slice(0, 3),
    "no_curv": slice(0, 6),
}


def smoothed_targets(labels: np.ndarray, n_classes: int, eps: float) -> np.ndarray:
    """(1 - eps) on the true class, eps / (C - 1) spread over the others."""
    t = np.full((len(labels), n_classes), eps / (n_classes - 1))
    t[np.arange(len(labels)), labels] = 1.0 - eps
    return t


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def smoothed_cross_entropy(logits: np.ndarray, labels: np.ndarray,
                           eps: float = LABEL_SMOOTHING) -> Tuple[float, np.ndarray]:
    """Mean label-smoothed cross-entropy and its gradient w.r.t. the logits."""
    n, C = logits.shape
    t = smoothed_targets(labels, C, eps)
    lsm = log_softmax(logits)
    loss = -np.sum(t * lsm) / n
    grad = (np.exp(lsm) - t) / n
    return float(loss), grad


@dataclass
class Classifier:
    mlp: MlpParams
    head_w: np.ndarray     # (feat_dim, n_classes)
    head_b: np.ndarray

    def learnable(self) -> Dict[str, np.ndarray]:
        d = dict(self.mlp.learnable())
        d["head_w"] = self.head_w
        d["head_b"] = self.head_b
        return d


def init_classifier(spec: MlpSpec, n_classes: int, seed: int) -> Classifier:
    mlp = init_params(spec, seed)
    rng = np.random.default_rng([seed, 1])
    bound = 1.0 / np.sqrt(spec.out_dim)
    return Classifier(mlp, rng.uniform(-bound, bound, size=(spec.out_dim, n_classes)),
                      rng.uniform(-bound, bound, size=n_classes))


def classifier_forward(model: Classifier, feats: np.ndarray, mode: str, update_stats=False):
    """``feats`` is (S, M, K, D): S clouds, M interest points, K pairs each."""
    S, M, K, D = feats.shape
    r, cache = opfr_forward_cached(feats.reshape(S * M, K, D), model.mlp, mode, update_stats)
    pooled = r.reshape(S, M, -1).mean(axis=1)
    logits = pooled @ model.head_w + model.head_b
    return logits, (cache, pooled, (S, M))


def classifier_backward(model: Classifier, aux, dlogits: np.ndarray) -> Dict[str, np.ndarray]:
    cache, pooled, (S, M) = aux
    grads = {"head_w": pooled.T @ dlogits, "head_b": dlogits.sum(axis=0)}
    dpooled = dlogits @ model.head_w.T
    dr = np.repeat(dpooled / M, M, axis=0)
    g, _ = opfr_backward(cache, model.mlp, dr)
    grads.update(g)
    return grads


@dataclass
class AdamW:
    """Adam with decoupled weight decay (PyTorch default hyper-parameters)."""

    lr: float = 1e-3
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], lr=None):
        lr = self.lr if lr is None else lr
        b1, b2 = self.betas
        self.t += 1
        for name in sorted(params):
            p, g = params[name], grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p *= 1 - lr * self.weight_decay
            p -= lr * mhat / (np.sqrt(vhat) + self.eps)


def select_interest_points(n_points: int, m: int, rng: np.random.Generator) -> np.ndarray:
    return np.sort(rng.choice(n_points, size=min(m, n_points), replace=False))


def featurize(samples: Sequence, cfg: SamplingConfig, points_per_cloud: int,
              seed: int) -> np.ndarray:
    """Raw pair features of a fixed random subset of interest points per cloud.

    Returns (S, M, K, 9).
    """
    out = []
    for s, (cloud, _) in enumerate(samples):
        feats = cloud_pair_features(cloud, cfg).features
        rng = np.random.default_rng([seed, s])
        out.append(feats[select_interest_points(len(cloud), points_per_cloud, rng)])
    return np.stack(out)


@dataclass
class EpochMetrics:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    test_acc: float

    def line(self) -> str:
        return (f"epoch {self.epoch:3d}  lr {self.lr:.2e}  loss {self.train_loss:.6f}  "
                f"train_acc {self.train_acc:.4f}  test_acc {self.test_acc:.4f}")


@dataclass
class TrainResult:
    model: Classifier
    history: List[EpochMetrics]
    channels: str

    @property
    def final_test_acc(self) -> float:
        return self.history[-1].test_acc

    @property
    def best_test_acc(self) -> float:
        return max(h.test_acc for h in self.history)


def evaluate(model: Classifier, feats: np.ndarray, labels: np.ndarray,
             batch_size: int = 64) -> float:
    correct = 0
    for lo in range(0, len(labels), batch_size):
        logits, _ = classifier_forward(model, feats[lo:lo + batch_size], "eval")
        correct += int(np.sum(logits.argmax(axis=1) == labels[lo:lo + batch_size]))
    return correct / len(labels)


def lr_at(epoch: int, epochs: int, base_lr: float) -> float:
    """Multi-step schedule: x0.1 at 60% and again at 80% of training."""
    lr = base_lr
    for frac in (0.6, 0.8):
        if epoch >= int(frac * epochs):
            lr *= 0.1
    return lr


def train_classifier(train_feats: np.ndarray, train_labels: np.ndarray,
                     test_feats: np.ndarray, test_labels: np.ndarray, n_classes: int,
                     spec: MlpSpec, channels: str = "all", epochs: int = 50,
                     batch_size: int = 16, lr: float = 3e-3, weight_decay: float = 0.01,
                     seed: int = 7, log=None) -> TrainResult:
    if len(train_labels) == 0:
        raise OpfrError("empty training set")
    if len(np.unique(train_labels)) < 2:
        raise OpfrError("training needs at least two classes")
    sl = CHANNELS[channels]
    tr = np.ascontiguousarray(train_feats[..., sl])
    te = np.ascontiguousarray(test_feats[..., sl])
    if tr.shape[-1] != spec.in_dim:
        raise OpfrError(f"channels {channels!r} give {tr.shape[-1]} inputs, spec expects {spec.in_dim}")
    model = init_classifier(spec, n_classes, seed)
    opt = AdamW(lr=lr, weight_decay=weight_decay)
    rng = np.random.default_rng([seed, 2])
    history = []
    for epoch in range(epochs):
        cur_lr = lr_at(epoch, epochs, lr)
        perm = rng.permutation(len(train_labels))
        tot_loss, correct = 0.0, 0
        for lo in range(0, len(perm), batch_size):
            idx = perm[lo:lo + batch_size]
            if len(idx) < 2:
                continue
            logits, aux = classifier_forward(model, tr[idx], "train", update_stats=True)
            loss, dlogits = smoothed_cross_entropy(logits, train_labels[idx])
            grads = classifier_backward(model, aux, dlogits)
            opt.step(model.learnable(), grads, cur_lr)
            tot_loss += loss * len(idx)
            correct += int(np.sum(logits.argmax(axis=1) == train_labels[idx]))
        m = EpochMetrics(epoch + 1, cur_lr, tot_loss / len(perm), correct / len(perm),
                         evaluate(model, te, test_labels))
        history.append(m)
        if log is not None:
            log(m.line())
    return TrainResult(model, history, channels)


@dataclass(frozen=True)
class ToyConfig:
    epochs: int = 50
    seed: int = 7
    n_per_class: int = 200
    points_per_cloud: int = 16
    batch_size: int = 16
    lr: float = 3e-3
    pooling: str = "sum"
    channels: str = "all"
    width: int = 30
    layers: int = 3
    batch_norm: bool = True


def toy_features(dataset: ToyDataset, cfg: SamplingConfig, points_per_cloud: int, seed: int):
    tr = featurize(dataset.train, cfg, points_per_cloud, seed)
    te = featurize(dataset.test, cfg, points_per_cloud, seed + 1)
    ytr = np.array([y for _, y in dataset.train])
    yte = np.array([y for _, y in dataset.test])
    return tr, ytr, te, yte


def train_toy(dataset: ToyDataset, toy: ToyConfig = ToyConfig(),
              sampling: SamplingConfig = SamplingConfig(), features=None,
              log=None) -> TrainResult:
    """Train the OPFR head on a toy dataset; bitwise reproducible for a fixed seed."""
    if len(dataset.train) == 0:
        raise OpfrError("empty dataset")
    with threadpool_limits(1):
        if features is None:
            features = toy_features(dataset, sampling, toy.points_per_cloud, toy.seed)
        tr, ytr, te, yte = features
        in_dim = CHANNELS[toy.channels].stop - CHANNELS[toy.channels].start
        spec = MlpSpec((in_dim,) + (toy.width,) * toy.layers, toy.batch_norm, toy.pooling)
        return train_classifier(tr, ytr, te, yte, len(dataset.class_names), spec,
                                channels=toy.channels, epochs=toy.epochs,
                                batch_size=toy.batch_size, lr=toy.lr, seed=toy.seed, log=log)
