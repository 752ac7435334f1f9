"""Full-pipeline orchestration and the canonical JSON report."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .abcde import RiskThresholds, analyze_abcde
from .attention import ConvDump, AttentionMap, attention_map, border_alignment, lesion_alignment
from .errors import DimensionMismatch, LesionLensError
from .fastcav import ConceptVector, LinearHead, softmax, tcav_score
from .imgio import RasterImage
from .segmentation import segment_lesion
from .uncertainty import McSampleMatrix, decompose

SCHEMA_VERSION = 1
SCHEMA_PATH = Path(__file__).with_name("schema") / "report.schema.json"
DEFAULT_SEED = 42
ISIC_LABELS = ("MEL", "NV", "BCC", "AK", "BKL", "DF", "VASC", "SCC")
SEED_STAGES = ("kmeans", "welzl", "sgd", "dropout")
SIGNIFICANT_DIGITS = 9


class StageError(Exception):
    """Wraps a package error with the name of the pipeline stage that raised it."""

    def __init__(self, stage: str, error: LesionLensError):
        super().__init__(f"{stage}: {error}")
        self.stage = stage
        self.error = error


class stage:
    """``with stage("segmentation"): ...`` tags any package error with the stage."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, LesionLensError):
            raise StageError(self.name, exc) from exc
        return False


def derive_seed(base: int, name: str) -> int:
    """Fan one user seed out into independent per-stage seeds."""
    ss = np.random.SeedSequence([int(base), SEED_STAGES.index(name)])
    return int(ss.generate_state(1)[0])


@dataclass(frozen=True)
class AnalysisConfig:
    seed: int = DEFAULT_SEED
    lesion_is_dark: bool = True
    morph_radius: int = 3
    asymmetry_aggregate: str = "mean"
    color_space: str = "rgb"
    thresholds: RiskThresholds = field(default_factory=RiskThresholds)
    border_dilation: int = 5
    uncertainty_threshold: float = 0.5
    epistemic_aggregate: str = "mean"
    sensitivity_mode: str = "probability"
    labels: tuple = ISIC_LABELS

    def seeds(self) -> dict:
        return {name: derive_seed(self.seed, name) for name in SEED_STAGES}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["labels"] = list(self.labels)
        d["derived_seeds"] = self.seeds()
        return d


def class_name(labels: Sequence[str], index: int) -> str:
    return labels[index] if 0 <= index < len(labels) else f"class_{index}"


def analyze(
    img: RasterImage,
    config: AnalysisConfig = AnalysisConfig(),
    image_path: str = "",
    conv: Optional[ConvDump] = None,
    mc_samples: Optional[McSampleMatrix] = None,
    features: Optional[np.ndarray] = None,
    head: Optional[LinearHead] = None,
    cavs: Sequence[ConceptVector] = (),
    concept_class: Optional[int] = None,
) -> tuple[dict, dict]:
    """Run every stage whose inputs are present.

    Returns ``(report, artifacts)``: the JSON-ready report dict and the
    intermediate objects (mask, heatmap) callers may want to render.
    Stage failures surface as :class:`StageError`.
    """
    seeds = config.seeds()
    with stage("segmentation"):
        mask = segment_lesion(img, config.lesion_is_dark, config.morph_radius)
    with stage("abcde"):
        abcde = analyze_abcde(
            img,
            mask,
            seed=seeds["kmeans"],
            welzl_seed=seeds["welzl"],
            asymmetry_aggregate=config.asymmetry_aggregate,
            color_space=config.color_space,
            thresholds=config.thresholds,
        )

    heatmap: Optional[AttentionMap] = None
    alignment = None
    if conv is not None:
        with stage("attention"):
            heatmap = attention_map(conv, img.width, img.height)
            alignment = {
                "class_index": conv.class_index,
                "lesion": lesion_alignment(heatmap, mask),
                "border": border_alignment(heatmap, mask, config.border_dilation),
            }

    uncertainty = None
    prediction = None
    if mc_samples is not None:
        with stage("uncertainty"):
            u = decompose(mc_samples, config.uncertainty_threshold, config.epistemic_aggregate)
        uncertainty = u.to_dict()
        prediction = {
            "class_index": u.predicted_class,
            "class_name": class_name(config.labels, u.predicted_class),
            "confidence": u.confidence,
        }

    concepts = None
    resolved_class = None
    if features is not None and head is not None and cavs:
        with stage("concepts"):
            feats = np.atleast_2d(np.asarray(features, dtype=np.float64))
            if concept_class is not None:
                resolved_class = concept_class
            elif prediction is not None:
                resolved_class = prediction["class_index"]
            else:
                if feats.shape[1] != head.dim:
                    raise DimensionMismatch(f"features F={feats.shape[1]}, head F={head.dim}")
                resolved_class = int(np.argmax(softmax(feats.mean(axis=0) @ head.W.T + head.b)))
            concepts = [
                tcav_score(feats, head, resolved_class, cav, config.sensitivity_mode).to_dict()
                for cav in cavs
            ]
            concepts = [
                {**c, "class_index": resolved_class, "train_accuracy": cav.train_accuracy, "status": cav.status}
                for c, cav in zip(concepts, cavs)
            ]

    report = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "image_path": image_path,
        "image": {"width": img.width, "height": img.height, "channels": img.channels},
        "prediction": prediction,
        "lesion": {"area": mask.area, "centroid": list(mask.centroid)},
        "abcde": abcde.to_dict(),
        "alignment": alignment,
        "uncertainty": uncertainty,
        "concepts": concepts,
        "config": config.to_dict(),
    }
    return report, {"mask": mask, "heatmap": heatmap}


def _canonical(value):
    if isinstance(value, dict):
        return {str(k): _canonical(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(f"{float(value):.{SIGNIFICANT_DIGITS}g}")
    return value


def dumps_report(report: dict) -> str:
    """Deterministic JSON: insertion key order, floats at 9 significant digits."""
    return json.dumps(_canonical(report), indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def load_schema() -> dict:
    return json.loads(SCHEMA_PATH.read_text())
