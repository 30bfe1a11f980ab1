from .gs import GsCurve, GsPoint, gs_curve
from .linkability import LinkabilityReport, linkability, linkage_scores, unlinkability
from .privacy import privacy_leakage, zero_leakage_boundary
from .retrieval import RetrievalReport, retrieval_metrics
from .scores import ScenarioConfig, ScoreSet, UndefinedEER, eer, gar_at_far, roc, score_distributions

__all__ = [
    "GsCurve",
    "GsPoint",
    "LinkabilityReport",
    "RetrievalReport",
    "ScenarioConfig",
    "ScoreSet",
    "UndefinedEER",
    "eer",
    "gar_at_far",
    "gs_curve",
    "linkability",
    "linkage_scores",
    "privacy_leakage",
    "retrieval_metrics",
    "roc",
    "score_distributions",
    "unlinkability",
    "zero_leakage_boundary",
]
