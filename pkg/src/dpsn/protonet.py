"""Two-layer embedding network trained with the prototypical softmax loss.

Everything is plain numpy in float64: forward pass, analytic gradients
(including the path through the class prototypes) and an Adam optimiser.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from dpsn.errors import ConfigError, DataError, TrainingError

PARAM_NAMES = ("W1", "b1", "W2", "b2")
_TINY = np.finfo(np.float64).tiny


@dataclass(eq=False)
class TransformNet:
    """embedding = W2 @ relu(W1 @ x + b1) + b2"""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(cls, input_dim: int, hidden: int = 256, output: int = 64, rng=None) -> "TransformNet":
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(rng)

        def glorot(fan_out, fan_in):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_out, fan_in))

        W1 = glorot(hidden, input_dim)
        W2 = glorot(output, hidden)
        return cls(W1, np.zeros(hidden), W2, np.zeros(output))

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def output_dim(self) -> int:
        return self.W2.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "TransformNet":
        return TransformNet(*(p.copy() for p in self.params().values()))

    def check(self) -> None:
        h, d = self.W1.shape
        if self.b1.shape != (h,) or self.W2.shape[1] != h or self.b2.shape != (self.W2.shape[0],):
            raise DataError("inconsistent layer shapes")
        if not all(np.all(np.isfinite(p)) for p in self.params().values()):
            raise DataError("non-finite network parameters")

    def to_dict(self) -> dict:
        return {
            "shapes": {k: list(v.shape) for k, v in self.params().items()},
            "params": {k: v.ravel().tolist() for k, v in self.params().items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransformNet":
        arrays = [np.array(d["params"][k], dtype=np.float64).reshape(d["shapes"][k]) for k in PARAM_NAMES]
        net = cls(*arrays)
        net.check()
        return net


def forward(net: TransformNet, x) -> np.ndarray:
    """Embed a single feature vector (D,) or a batch (N, D)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.input_dim:
        raise DataError(f"feature dimension {x.shape[-1]} != network input dimension {net.input_dim}")
    hidden = np.maximum(x @ net.W1.T + net.b1, 0.0)
    return hidden @ net.W2.T + net.b2


@dataclass(frozen=True, eq=False)
class Prototypes:
    centers: np.ndarray  # (K, output_dim), row k = class k

    @property
    def n_classes(self) -> int:
        return self.centers.shape[0]


def _stack_support(support) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = [], []
    for k, group in enumerate(support):
        group = np.atleast_2d(np.asarray(group, dtype=np.float64))
        if group.shape[0] == 0 or group.size == 0:
            raise DataError(f"class {k} has no support samples")
        xs.append(group)
        ys.append(np.full(group.shape[0], k))
    return np.concatenate(xs), np.concatenate(ys)


def _centers(emb: np.ndarray, labels: np.ndarray, n_classes: int) -> np.ndarray:
    return np.stack([emb[labels == k].mean(axis=0) for k in range(n_classes)])


def compute_prototypes(net: TransformNet, support: Sequence) -> Prototypes:
    """Class centers from per-class support lists (index = class code)."""
    x, y = _stack_support(support)
    return Prototypes(_centers(forward(net, x), y, len(support)))


def sq_distances(emb: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = np.atleast_2d(emb)[:, None, :] - centers[None, :, :]
    return np.einsum("qkd,qkd->qk", diff, diff)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def class_probs(net: TransformNet, protos: Prototypes, x) -> np.ndarray:
    """Softmax over negative squared distances to each prototype."""
    x = np.asarray(x, dtype=np.float64)
    p = np.exp(_log_softmax(-sq_distances(forward(net, x), protos.centers)))
    return p[0] if x.ndim == 1 else p


def predict(net: TransformNet, protos: Prototypes, x):
    """Nearest-prototype class; ties go to the lowest class index."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.argmin(sq_distances(forward(net, x), protos.centers), axis=1)
    return int(labels[0]) if x.ndim == 1 else labels


def episode_loss(net: TransformNet, support: Sequence, queries) -> tuple[float, dict[str, np.ndarray]]:
    """Mean negative log-probability of the queries and its exact gradient.

    ``queries`` is a sequence of ``(feature_vector, class)`` pairs. Prototypes
    are recomputed from ``support`` with the same network, so gradients flow
    through them as well.
    """
    xs, ys = _stack_support(support)
    xq = np.stack([np.asarray(q[0], dtype=np.float64) for q in queries])
    yq = np.array([q[1] for q in queries], dtype=np.int64)
    n_s = len(ys)
    return _episode_loss(net, np.concatenate([xs, xq]), ys, np.arange(n_s), n_s + np.arange(len(yq)), yq,
                         len(support))


def _episode_loss(net, x, ys, s_rows, q_rows, yq, n_classes):
    """Loss/gradient with support rows ``x[s_rows]`` (classes ``ys``) and query
    rows ``x[q_rows]`` (classes ``yq``); each row of ``x`` is embedded once."""
    if np.any((yq < 0) | (yq >= n_classes)):
        raise DataError("query class missing from support")
    if x.shape[-1] != net.input_dim:
        raise DataError(f"feature dimension {x.shape[-1]} != network input dimension {net.input_dim}")
    pre = x @ net.W1.T + net.b1
    hidden = np.maximum(pre, 0.0)
    emb = hidden @ net.W2.T + net.b2

    centers = _centers(emb[s_rows], ys, n_classes)
    diff = emb[q_rows][:, None, :] - centers[None, :, :]  # (Q, K, E)
    logp = _log_softmax(-np.einsum("qkd,qkd->qk", diff, diff))
    n_q = len(yq)
    loss = float(-logp[np.arange(n_q), yq].mean())

    # dL/d(sq distance) = (onehot - p) / Q
    g = -np.exp(logp)
    g[np.abs(g) < _TINY] = 0.0  # keep subnormals out of the parameter updates
    g[np.arange(n_q), yq] += 1.0
    g /= n_q
    d_centers = -2.0 * np.einsum("qk,qkd->kd", g, diff)
    counts = np.bincount(ys, minlength=n_classes)
    d_emb = np.zeros_like(emb)
    np.add.at(d_emb, s_rows, d_centers[ys] / counts[ys, None])
    np.add.at(d_emb, q_rows, 2.0 * np.einsum("qk,qkd->qd", g, diff))

    d_hidden = (d_emb @ net.W2) * (pre > 0)
    grads = {
        "W1": d_hidden.T @ x,
        "b1": d_hidden.sum(axis=0),
        "W2": d_emb.T @ hidden,
        "b2": d_emb.sum(axis=0),
    }
    return loss, grads


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    learning_rate: float = 0.002
    lr_decay: float = 1e-5
    beta1: float = 0.7
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    queries_per_class: int | None = None  # None: every batch sample is a query
    batch_per_class: int | None = None  # None: the whole class each epoch
    hidden_dim: int = 256
    output_dim: int = 64
    l2_normalize: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")
        for name in ("queries_per_class", "batch_per_class"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        try:
            return cls(**known)
        except TypeError as exc:
            raise ConfigError(f"bad training config: {exc}") from None


@dataclass
class Adam:
    lr: float
    decay: float
    beta1: float
    beta2: float
    eps: float
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def update(self, net: TransformNet, grads: dict[str, np.ndarray]) -> None:
        lr = self.lr / (1.0 + self.decay * self.step)
        self.step += 1
        t = self.step
        step_size = lr / (1 - self.beta1**t)
        v_scale = 1.0 / np.sqrt(1 - self.beta2**t)
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * (g * g)
            denom = np.sqrt(v)
            denom *= v_scale
            denom += self.eps
            np.divide(m, denom, out=denom)
            denom *= step_size
            getattr(net, name).__isub__(denom)


def l2_normalize_rows(features: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(features, axis=-1, keepdims=True)
    return features / np.where(norms > 0, norms, 1.0)


def prepare_features(features, cfg: TrainConfig) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    return l2_normalize_rows(features) if cfg.l2_normalize else features


def train(features, labels, cfg: TrainConfig, n_classes: int | None = None,
          loss_log: list | None = None) -> tuple[TransformNet, Prototypes]:
    """Fit the embedding network episodically, then build final prototypes.

    Each epoch draws a per-class batch, forms prototypes from it, picks
    ``queries_per_class`` queries per class from the same batch and takes one
    Adam step on the episode loss. Per-epoch losses go to ``loss_log``.
    """
    x = prepare_features(features, cfg)
    labels = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != labels.size:
        raise DataError("features and labels are misaligned")
    n_classes = int(labels.max()) + 1 if n_classes is None else n_classes
    by_class = [np.flatnonzero(labels == k) for k in range(n_classes)]
    for k, idx in enumerate(by_class):
        if idx.size == 0:
            raise DataError(f"class {k} has no training samples")

    rng = np.random.default_rng(cfg.seed)
    net = TransformNet.init(x.shape[1], cfg.hidden_dim, cfg.output_dim, rng)
    opt = Adam(cfg.learning_rate, cfg.lr_decay, cfg.beta1, cfg.beta2, cfg.adam_epsilon)

    for epoch in range(cfg.epochs):
        s_rows, ys, q_rows, yq = [], [], [], []
        for k, idx in enumerate(by_class):
            batch = idx
            if cfg.batch_per_class is not None and cfg.batch_per_class < idx.size:
                batch = np.sort(rng.choice(idx, cfg.batch_per_class, replace=False))
            n_q = batch.size if cfg.queries_per_class is None else min(cfg.queries_per_class, batch.size)
            s_rows.append(batch)
            ys.append(np.full(batch.size, k))
            q_rows.append(rng.choice(batch, n_q, replace=False))
            yq.append(np.full(n_q, k))
        loss, grads = _episode_loss(net, x, np.concatenate(ys), np.concatenate(s_rows),
                                    np.concatenate(q_rows), np.concatenate(yq), n_classes)
        if not np.isfinite(loss) or not all(np.isfinite(g.sum()) for g in grads.values()):
            norms = ", ".join(f"|{k}|={np.linalg.norm(v):.3g}" for k, v in net.params().items())
            raise TrainingError(f"non-finite loss at epoch {epoch}: {norms}")
        if loss_log is not None:
            loss_log.append(loss)
        opt.update(net, grads)

    protos = Prototypes(_centers(forward(net, x), labels, n_classes))
    return net, protos


@dataclass(eq=False)
class ProtoModel:
    """A trained network, its prototypes and the settings that produced them."""

    net: TransformNet
    protos: Prototypes
    classes: tuple
    config: TrainConfig

    def embed(self, features) -> np.ndarray:
        return forward(self.net, prepare_features(features, self.config))

    def predict(self, features):
        return predict(self.net, self.protos, prepare_features(features, self.config))

    def probs(self, features) -> np.ndarray:
        return class_probs(self.net, self.protos, prepare_features(features, self.config))

    def net_dict(self) -> dict:
        return {**self.net.to_dict(), "config": asdict(self.config)}

    def prototypes_dict(self) -> dict:
        return {"classes": list(self.classes), "centers": self.protos.centers.tolist()}

    @classmethod
    def from_dicts(cls, net_doc: dict, proto_doc: dict) -> "ProtoModel":
        net = TransformNet.from_dict(net_doc)
        centers = np.array(proto_doc["centers"], dtype=np.float64)
        if centers.ndim != 2 or centers.shape[1] != net.output_dim:
            raise DataError("prototype dimension does not match the network output")
        return cls(net, Prototypes(centers), tuple(proto_doc["classes"]),
                   TrainConfig.from_dict(net_doc.get("config", {})))

    def save(self, net_path, proto_path) -> None:
        Path(net_path).write_text(json.dumps(self.net_dict()) + "\n")
        Path(proto_path).write_text(json.dumps(self.prototypes_dict()) + "\n")

    @classmethod
    def load(cls, net_path, proto_path) -> "ProtoModel":
        return cls.from_dicts(json.loads(Path(net_path).read_text()), json.loads(Path(proto_path).read_text()))
