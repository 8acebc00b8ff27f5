"""Dictionary-attack layer: matching, thresholds, coverage search, clustering."""

from .kmeans import kmeans
from .matching import (
    CombinedProblem,
    EmbeddingGallery,
    VerificationProblem,
    coverage_fitness,
    distance,
    match,
    match_matrix,
    msc,
    pairwise_distances,
)
from .search import (
    CoverageEntry,
    CoverageReport,
    CoverageSearchError,
    centroid_coverage,
    clustered_coverage_search,
    greedy_coverage,
    latent_checksum,
)
from .thresholds import (
    PairScores,
    ThresholdWarning,
    combined_rates,
    combined_threshold_grid,
    far_frr,
    normalize_scores,
    threshold_at_eer,
    threshold_at_far,
)

__all__ = [
    "CombinedProblem",
    "CoverageEntry",
    "CoverageReport",
    "CoverageSearchError",
    "EmbeddingGallery",
    "PairScores",
    "ThresholdWarning",
    "VerificationProblem",
    "centroid_coverage",
    "clustered_coverage_search",
    "combined_rates",
    "combined_threshold_grid",
    "coverage_fitness",
    "distance",
    "far_frr",
    "greedy_coverage",
    "kmeans",
    "latent_checksum",
    "match",
    "match_matrix",
    "msc",
    "normalize_scores",
    "pairwise_distances",
    "threshold_at_eer",
    "threshold_at_far",
]
