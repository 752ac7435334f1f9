"""Concept activation vectors trained by SGD, and concept sensitivity scores.

A concept vector is the unit normal of a logistic-regression boundary that
separates concept-positive from concept-negative feature vectors. Its
influence on a class is the directional derivative of that class's softmax
probability (or logit) along the vector, taken through a linear head.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, FormatError, IoError
from .imgio import Tensor, load_tensor, write_tensor

logger = logging.getLogger(__name__)

MIN_ACCURACY = 0.6
SENSITIVITY_MODES = ("probability", "logit")


@dataclass(frozen=True)
class CavConfig:
    lr: float = 0.01
    epochs: int = 100
    l2: float = 1e-4
    seed: int = 0


@dataclass(frozen=True)
class ConceptVector:
    concept_name: str
    v: np.ndarray = field(repr=False, compare=False)
    train_accuracy: float
    seed: int
    status: str = "ok"

    def __post_init__(self):
        v = np.array(self.v, dtype=np.float64).ravel()
        norm = np.linalg.norm(v)
        if v.size == 0 or not np.isfinite(norm) or norm == 0.0:
            raise ValueError("concept vector must be finite and non-zero")
        v = v / norm
        v.setflags(write=False)
        object.__setattr__(self, "v", v)

    @property
    def dim(self) -> int:
        return self.v.size

    @property
    def degenerate(self) -> bool:
        return self.status != "ok"

    def sidecar(self) -> dict:
        return {
            "concept_name": self.concept_name,
            "dim": self.dim,
            "train_accuracy": self.train_accuracy,
            "seed": self.seed,
            "status": self.status,
        }


@dataclass(frozen=True)
class LinearHead:
    """Classifier head ``logits = W f + b`` with ``W`` of shape ``(C, F)``."""

    W: np.ndarray = field(repr=False, compare=False)
    b: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        W = np.array(self.W, dtype=np.float64)
        b = np.array(self.b, dtype=np.float64).ravel()
        if W.ndim != 2 or W.shape[0] < 2:
            raise DimensionMismatch(f"head weights must be [C>=2, F], got {W.shape}")
        if b.shape != (W.shape[0],):
            raise DimensionMismatch(f"bias has {b.size} entries for {W.shape[0]} classes")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("head parameters must be finite")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    @classmethod
    def from_tensor(cls, t: Tensor) -> "LinearHead":
        """Packed layout ``[C, F + 1]``: weights with the bias as last column."""
        if len(t.dims) != 2 or t.dims[1] < 2:
            raise FormatError(f"head tensor must be [C, F+1], got dims {t.dims}")
        arr = t.data.astype(np.float64)
        return cls(arr[:, :-1], arr[:, -1])

    def to_tensor(self) -> Tensor:
        return Tensor.from_array(np.hstack([self.W, self.b[:, None]]))


@dataclass(frozen=True)
class ConceptScore:
    concept_name: str
    tcav_fraction: float
    mean_sensitivity: float
    n_inputs: int

    def to_dict(self) -> dict:
        return {
            "concept_name": self.concept_name,
            "tcav_fraction": self.tcav_fraction,
            "mean_sensitivity": self.mean_sensitivity,
            "n_inputs": self.n_inputs,
        }


def _features(x, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise DimensionMismatch(f"{what}: expected [n, F] features, got shape {x.shape}")
    return x


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


def train_cav(positives, negatives, config: CavConfig = CavConfig(), concept_name: str = "concept") -> ConceptVector:
    """Fit a logistic separator by plain SGD and return its unit normal.

    Features are z-scored with statistics pooled over both sets; the learned
    weights are mapped back through that scaling so the vector lives in the
    raw feature space. The sign is fixed so positives project higher.
    """
    pos = _features(positives, "positives")
    neg = _features(negatives, "negatives")
    if pos.shape[1] != neg.shape[1]:
        raise DimensionMismatch(f"positives have F={pos.shape[1]}, negatives F={neg.shape[1]}")
    if len(pos) < 2 or len(neg) < 2:
        raise ValueError("need at least two positive and two negative examples")

    x = np.vstack([pos, neg])
    y = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0] = 1.0
    z = (x - mean) / scale

    rng = np.random.default_rng(config.seed)
    w = np.zeros(z.shape[1])
    b = 0.0
    for _ in range(config.epochs):
        for i in rng.permutation(len(z)):
            err = _sigmoid(float(z[i] @ w + b)) - y[i]
            w -= config.lr * (err * z[i] + config.l2 * w)
            b -= config.lr * err

    accuracy = float(np.mean(((z @ w + b) > 0) == (y == 1)))
    v = w / scale
    if np.linalg.norm(v) == 0.0:
        v = pos.mean(axis=0) - neg.mean(axis=0)
    if np.linalg.norm(v) == 0.0:
        v = np.zeros(z.shape[1])
        v[0] = 1.0
    if pos.mean(axis=0) @ v < neg.mean(axis=0) @ v:
        v = -v

    status = "ok"
    if accuracy < MIN_ACCURACY:
        status = "degenerate"
        logger.warning("concept %r: training accuracy %.3f below %.2f", concept_name, accuracy, MIN_ACCURACY)
    return ConceptVector(concept_name, v, accuracy, config.seed, status)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check(head: LinearHead, v: ConceptVector, dim: int, class_index: int):
    if head.dim != dim or v.dim != dim:
        raise DimensionMismatch(f"features F={dim}, head F={head.dim}, concept F={v.dim}")
    if not 0 <= class_index < head.n_classes:
        raise DimensionMismatch(f"class {class_index} outside head's {head.n_classes} classes")


def sensitivities(features, head: LinearHead, class_index: int, v: ConceptVector, mode: str = "probability") -> np.ndarray:
    """Per-input directional derivative along ``v``, vectorized over rows."""
    f = _features(features, "features")
    _check(head, v, f.shape[1], class_index)
    wv = head.W @ v.v
    if mode == "logit":
        return np.full(len(f), wv[class_index])
    if mode != "probability":
        raise ValueError(f"unknown sensitivity mode {mode!r}")
    p = softmax(f @ head.W.T + head.b)
    # d p_c / d v = p_c * (w_c - sum_j p_j w_j) . v
    return p[:, class_index] * (wv[class_index] - p @ wv)


def concept_sensitivity(feature, head: LinearHead, class_index: int, v: ConceptVector, mode: str = "probability") -> float:
    f = np.asarray(feature, dtype=np.float64)
    if f.ndim != 1:
        raise DimensionMismatch(f"expected a single feature vector, got shape {f.shape}")
    return float(sensitivities(f, head, class_index, v, mode)[0])


def tcav_score(features, head: LinearHead, class_index: int, v: ConceptVector, mode: str = "probability") -> ConceptScore:
    """Fraction of inputs with strictly positive sensitivity, plus the mean sensitivity."""
    s = sensitivities(features, head, class_index, v, mode)
    if len(s) < 1:
        raise ValueError("need at least one input")
    return ConceptScore(v.concept_name, float(np.sum(s > 0) / len(s)), float(np.mean(s)), int(len(s)))


def _paths(path) -> tuple[Path, Path]:
    p = Path(path)
    stem = p.with_suffix("") if p.suffix in (".mnt", ".json") else p
    return stem.with_suffix(".mnt"), stem.with_suffix(".json")


def save_cav(cav: ConceptVector, path) -> tuple[Path, Path]:
    """Write the vector as MNT1 and the metadata as a JSON sidecar next to it."""
    vec_path, meta_path = _paths(path)
    write_tensor(Tensor.from_array(cav.v), vec_path)
    try:
        meta_path.write_text(json.dumps(cav.sidecar(), indent=2) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {meta_path}: {exc}") from exc
    return vec_path, meta_path


def load_cav(path) -> ConceptVector:
    """Load from either the ``.mnt`` vector or its ``.json`` sidecar path."""
    vec_path, meta_path = _paths(path)
    t = load_tensor(vec_path)
    try:
        meta = json.loads(meta_path.read_text())
    except OSError as exc:
        raise IoError(f"cannot read {meta_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"bad sidecar {meta_path}: {exc}") from exc
    try:
        return ConceptVector(
            meta["concept_name"], t.data.ravel(), float(meta["train_accuracy"]), int(meta["seed"]), meta.get("status", "ok")
        )
    except KeyError as exc:
        raise FormatError(f"sidecar {meta_path} lacks {exc}") from exc
