"""Scoring: normalisation, alignment, WER, cpWER, DER and report statistics."""

from .align import GAP, Alignment, WerCounts, align_words, edit_distance
from .der import DerBreakdown, HorizonDer, compute_der, der_over_horizons
from .normalize import normalize_text, spell_number_nl, strip_punctuation
from .stats import (
    CorrelationResult,
    SummaryStats,
    TestResult,
    pearson_r,
    summarize_quartiles,
    wilcoxon_signed_rank,
)
from .wer import FillerStats, compute_cpwer, compute_wer, filler_hit_rate, wer_alignment

__all__ = [
    "GAP", "Alignment", "WerCounts", "align_words", "edit_distance",
    "DerBreakdown", "HorizonDer", "compute_der", "der_over_horizons",
    "normalize_text", "spell_number_nl", "strip_punctuation",
    "CorrelationResult", "SummaryStats", "TestResult",
    "pearson_r", "summarize_quartiles", "wilcoxon_signed_rank",
    "FillerStats", "compute_cpwer", "compute_wer", "filler_hit_rate", "wer_alignment",
]
