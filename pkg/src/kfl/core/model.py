"""Small ReLU MLP split into a feature extractor and a label predictor.

Weights are stored as ``(W, b)`` pairs with ``W`` of shape ``(fan_in, fan_out)``
so a batch ``X`` of shape ``(N, d)`` maps through ``X @ W + b``. Every
extractor layer is ReLU-activated, including the feature layer; predictor
hidden layers are ReLU and its last layer feeds a softmax.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

Layer = tuple[np.ndarray, np.ndarray]


@dataclass
class LocalModel:
    extractor: list[Layer]
    predictor: list[Layer]

    @property
    def input_dim(self) -> int:
        return self.extractor[0][0].shape[0]

    @property
    def feature_dim(self) -> int:
        return self.extractor[-1][0].shape[1]

    @property
    def num_classes(self) -> int:
        return self.predictor[-1][0].shape[1]

    @property
    def hidden_dims(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w, _ in self.extractor[:-1])

    @property
    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in self.extractor + self.predictor)

    def copy(self) -> "LocalModel":
        return LocalModel([(w.copy(), b.copy()) for w, b in self.extractor],
                          [(w.copy(), b.copy()) for w, b in self.predictor])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for layer in self.extractor + self.predictor
                               for a in layer])

    def with_flat(self, vec: np.ndarray) -> "LocalModel":
        out = self.copy()
        pos = 0
        for layer in out.extractor + out.predictor:
            for a in layer:
                a[...] = vec[pos:pos + a.size].reshape(a.shape)
                pos += a.size
        return out


def mlp_param_count(dims: Sequence[int]) -> int:
    return sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))


def _glorot(fan_in: int, fan_out: int, rng: np.random.Generator) -> Layer:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out)), np.zeros(fan_out)


def init_model(input_dim: int, hidden_dims: Sequence[int], feature_dim: int,
               num_classes: int, rng: np.random.Generator,
               predictor_hidden: Sequence[int] = ()) -> LocalModel:
    ext_dims = [input_dim, *hidden_dims, feature_dim]
    pred_dims = [feature_dim, *predictor_hidden, num_classes]
    extractor = [_glorot(i, o, rng) for i, o in zip(ext_dims[:-1], ext_dims[1:])]
    predictor = [_glorot(i, o, rng) for i, o in zip(pred_dims[:-1], pred_dims[1:])]
    return LocalModel(extractor, predictor)


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def extract(model: LocalModel, X: np.ndarray) -> np.ndarray:
    a = X
    for w, b in model.extractor:
        a = _relu(a @ w + b)
    return a


def predict_log_proba(model: LocalModel, Z: np.ndarray) -> np.ndarray:
    a = Z
    for w, b in model.predictor[:-1]:
        a = _relu(a @ w + b)
    w, b = model.predictor[-1]
    return _log_softmax(a @ w + b)


def forward(model: LocalModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Features and class probabilities for one sample ``(d,)`` or a batch ``(N, d)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != model.input_dim:
        raise ValueError(f"input has {X.shape[1]} features, model expects {model.input_dim}")
    Z = extract(model, X)
    P = np.exp(predict_log_proba(model, Z))
    if single:
        return Z[0], P[0]
    return Z, P


def predict(model: LocalModel, X: np.ndarray) -> np.ndarray:
    return predict_log_proba(model, extract(model, X)).argmax(axis=1)


@dataclass
class LossBreakdown:
    total: float
    empirical: float
    knowledge: float
    missing_prototypes: int = 0


def loss_and_grads(model: LocalModel, X: np.ndarray, y: np.ndarray,
                   prototypes: Optional[np.ndarray] = None, knowledge_weight: float = 0.0,
                   ) -> tuple[LossBreakdown, list[Layer], list[Layer]]:
    """Knowledge-aided loss ``CE + lambda * L`` and its gradients for both parts.

    ``prototypes`` is a ``(C, p)`` array; NaN rows mark classes without a
    prototype, whose samples contribute nothing to the knowledge term.
    Only the extractor sees the knowledge term since it does not depend on
    the predictor.
    """
    n = X.shape[0]
    acts = [X]
    pre = []
    for w, b in model.extractor:
        z = acts[-1] @ w + b
        pre.append(z)
        acts.append(_relu(z))
    feats = acts[-1]

    p_acts = [feats]
    p_pre = []
    for w, b in model.predictor[:-1]:
        z = p_acts[-1] @ w + b
        p_pre.append(z)
        p_acts.append(_relu(z))
    w_out, b_out = model.predictor[-1]
    logp = _log_softmax(p_acts[-1] @ w_out + b_out)
    empirical = float(-logp[np.arange(n), y].mean())

    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    pred_grads: list[Layer] = [None] * len(model.predictor)
    pred_grads[-1] = (p_acts[-1].T @ delta, delta.sum(axis=0))
    upstream = delta @ w_out.T
    for i in range(len(model.predictor) - 2, -1, -1):
        upstream = upstream * (p_pre[i] > 0)
        w, _ = model.predictor[i]
        pred_grads[i] = (p_acts[i].T @ upstream, upstream.sum(axis=0))
        upstream = upstream @ w.T
    d_feat = upstream

    knowledge = 0.0
    missing = 0
    if prototypes is not None and knowledge_weight != 0.0:
        targets = prototypes[y]
        have = ~np.isnan(targets).any(axis=1)
        missing = int(n - have.sum())
        diff = np.where(have[:, None], feats - np.nan_to_num(targets), 0.0)
        knowledge = float(0.5 * np.sum(diff * diff) / n)
        d_feat = d_feat + knowledge_weight * diff / n

    ext_grads: list[Layer] = [None] * len(model.extractor)
    upstream = d_feat
    for i in range(len(model.extractor) - 1, -1, -1):
        upstream = upstream * (pre[i] > 0)
        w, _ = model.extractor[i]
        ext_grads[i] = (acts[i].T @ upstream, upstream.sum(axis=0))
        if i:
            upstream = upstream @ w.T

    breakdown = LossBreakdown(empirical + knowledge_weight * knowledge, empirical,
                              knowledge, missing)
    return breakdown, ext_grads, pred_grads
