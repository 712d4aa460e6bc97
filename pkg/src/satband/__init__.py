"""Saliency-guided wavelet image coding and satisfaction-driven bandwidth allocation."""

__version__ = "0.1.0"

from .allocator import (  # noqa: E402
    MAX_ABS,
    TOTAL_ABS,
    TOTAL_ONE_SIDED,
    Allocation,
    BandwidthAllocator,
    Customer,
    Scenario,
    allocate_baseline,
    allocate_bruteforce,
    allocate_metaheuristic,
    evaluate_objective,
)
from .codec import SaliencyWaveletCodec, decode_image, encode_image, quality_metrics  # noqa: E402
from .imaging import RasterImage, read_image, write_image  # noqa: E402
from .ranking import ObjectRanker, Repository, rank_objects, scm, spm_similarity  # noqa: E402
from .saliency import Box, SaliencyAnnotation  # noqa: E402
from .satisfaction import (  # noqa: E402
    KNNSatisfaction,
    ParametricSatisfaction,
    QualityInputs,
    image_quality,
    required_bandwidth,
)
from .wavelet import haar_forward, haar_inverse  # noqa: E402

__all__ = [
    "MAX_ABS", "TOTAL_ABS", "TOTAL_ONE_SIDED", "Allocation", "BandwidthAllocator", "Customer", "Scenario",
    "allocate_baseline", "allocate_bruteforce", "allocate_metaheuristic", "evaluate_objective",
    "SaliencyWaveletCodec", "decode_image", "encode_image", "quality_metrics",
    "RasterImage", "read_image", "write_image",
    "ObjectRanker", "Repository", "rank_objects", "scm", "spm_similarity",
    "Box", "SaliencyAnnotation",
    "KNNSatisfaction", "ParametricSatisfaction", "QualityInputs", "image_quality", "required_bandwidth",
    "haar_forward", "haar_inverse",
]
