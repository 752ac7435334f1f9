"""MC-Dropout uncertainty: predictive / epistemic / aleatoric decomposition.

Entropies use the natural log and are divided by ``ln C``, so every entropy
measure lies in [0, 1] whatever the class count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSimplex

SIMPLEX_TOL = 1e-6
DEFAULT_THRESHOLD = 0.5
DEFAULT_DROPOUT = 0.3


@dataclass(frozen=True)
class McSampleMatrix:
    """``T`` softmax rows over ``C`` classes from stochastic forward passes."""

    samples: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        s = np.array(self.samples, dtype=np.float64)
        if s.ndim != 2:
            raise InvalidSimplex(f"samples must be a [T, C] matrix, got shape {s.shape}")
        t, c = s.shape
        if t < 2:
            raise InvalidSimplex(f"need at least 2 passes, got {t}")
        if c < 2:
            raise InvalidSimplex(f"need at least 2 classes, got {c}")
        if not np.all(np.isfinite(s)) or s.min() < 0.0 or s.max() > 1.0:
            raise InvalidSimplex("probabilities must lie in [0, 1]")
        worst = np.abs(s.sum(axis=1) - 1.0).max()
        if worst > SIMPLEX_TOL:
            raise InvalidSimplex(f"row sums deviate from 1 by up to {worst:.3g}")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def T(self) -> int:
        return self.samples.shape[0]

    @property
    def C(self) -> int:
        return self.samples.shape[1]

    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)


def _as_matrix(m) -> McSampleMatrix:
    return m if isinstance(m, McSampleMatrix) else McSampleMatrix(m)


def entropy(p: np.ndarray) -> np.ndarray:
    """Shannon entropy in nats along the last axis, with 0 ln 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    logs = np.log(np.where(p > 0, p, 1.0))
    return -np.sum(p * logs, axis=-1)


def _unit(x) -> float:
    # ln C normalization can land an ulp outside [0, 1]
    return float(min(max(x, 0.0), 1.0))


def predictive_uncertainty(m) -> float:
    m = _as_matrix(m)
    return _unit(entropy(m.mean()) / math.log(m.C))


def epistemic_uncertainty(m, aggregate: str = "mean") -> float:
    """Population variance across passes per class, then mean (or sum) over classes."""
    m = _as_matrix(m)
    # shifting by the first pass leaves the variance alone and makes equal rows give exactly 0
    var = (m.samples - m.samples[0]).var(axis=0)
    if aggregate == "mean":
        return float(var.mean())
    if aggregate == "sum":
        return float(var.sum())
    raise ValueError(f"unknown epistemic aggregate {aggregate!r}")


def aleatoric_uncertainty(m) -> float:
    m = _as_matrix(m)
    return _unit(entropy(m.samples).mean() / math.log(m.C))


@dataclass(frozen=True)
class UncertaintyReport:
    predictive: float
    epistemic: float
    aleatoric: float
    mutual_information: float
    mean_prediction: tuple
    predicted_class: int
    confidence: float
    reliable: bool
    threshold: float = DEFAULT_THRESHOLD

    @property
    def flag(self) -> str:
        return "RELIABLE" if self.reliable else "UNCERTAIN"

    def to_dict(self) -> dict:
        return {
            "predictive": self.predictive,
            "epistemic": self.epistemic,
            "aleatoric": self.aleatoric,
            "mutual_information": self.mutual_information,
            "mean_prediction": list(self.mean_prediction),
            "predicted_class": self.predicted_class,
            "confidence": self.confidence,
            "reliable": self.reliable,
            "flag": self.flag,
            "threshold": self.threshold,
        }


def is_reliable(predictive: float, threshold: float = DEFAULT_THRESHOLD) -> bool:
    """Only predictive uncertainty strictly above the threshold is unreliable."""
    return predictive <= threshold


def decompose(m, threshold: float = DEFAULT_THRESHOLD, epistemic_aggregate: str = "mean") -> UncertaintyReport:
    m = _as_matrix(m)
    mean = m.mean()
    predictive = predictive_uncertainty(m)
    aleatoric = aleatoric_uncertainty(m)
    cls = int(np.argmax(mean))
    return UncertaintyReport(
        predictive=predictive,
        epistemic=epistemic_uncertainty(m, epistemic_aggregate),
        aleatoric=aleatoric,
        mutual_information=predictive - aleatoric,
        mean_prediction=tuple(float(x) for x in mean),
        predicted_class=cls,
        confidence=float(mean[cls]),
        reliable=is_reliable(predictive, threshold),
        threshold=threshold,
    )


# Reference stochastic classifier. Weights are closed-form constants so the
# sampler needs no parameter file:
#   W1[j, i] = cos(0.7 (j+1)(i+1) + 0.3) * 2 / sqrt(F)      hidden x input
#   b1[j]    = 0.1 sin(j+1)
#   W2[c, j] = sin(1.3 (c+1)(j+1) + 0.5) * 3 / sqrt(HIDDEN) class x hidden
#   b2[c]    = 0
# Hidden activation is ReLU; inverted dropout acts on the hidden layer.
HIDDEN = 32
REFERENCE_CLASSES = 8


def reference_weights(n_inputs: int, hidden: int = HIDDEN, n_classes: int = REFERENCE_CLASSES):
    j = np.arange(1, hidden + 1)[:, None]
    i = np.arange(1, n_inputs + 1)[None, :]
    w1 = np.cos(0.7 * j * i + 0.3) * 2.0 / math.sqrt(n_inputs)
    b1 = 0.1 * np.sin(np.arange(1, hidden + 1))
    c = np.arange(1, n_classes + 1)[:, None]
    jj = np.arange(1, hidden + 1)[None, :]
    w2 = np.sin(1.3 * c * jj + 0.5) * 3.0 / math.sqrt(hidden)
    b2 = np.zeros(n_classes)
    return w1, b1, w2, b2


def reference_sampler(features, T: int = 10, seed: int = 0, dropout: float = DEFAULT_DROPOUT) -> McSampleMatrix:
    """``T`` softmax rows from the fixed perceptron with dropout kept active.

    Each call owns its generator, so equal ``(features, T, seed)`` give equal
    matrices regardless of what else is running.
    """
    if T < 2:
        raise ValueError("T must be >= 2")
    if not 0.0 <= dropout < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    x = np.asarray(features, dtype=np.float64).ravel()
    w1, b1, w2, b2 = reference_weights(x.size)
    hidden = np.maximum(w1 @ x + b1, 0.0)
    rng = np.random.default_rng(seed)
    keep = rng.random((T, hidden.size)) >= dropout
    dropped = hidden[None, :] * keep / (1.0 - dropout)
    logits = dropped @ w2.T + b2
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return McSampleMatrix(e / e.sum(axis=1, keepdims=True))
