"""Zero-shot classification fusion engine operating on embedding bundles.

The engine fuses an image-conditioned class distribution with a
caption-conditioned one, anchored to the image model's Top-K classes, with
an adaptive per-sample caption weight. It also carries the surrounding
apparatus: prototype construction and scoring, a binary bundle format, an
evaluation harness with reclassification analysis and ablation sweeps, and
a CLI.
"""

from .bundle import (
    DatasetManifest,
    EmbeddingBundle,
    read_bundle,
    validate_bundle_file,
    write_bundle,
)
from .errors import (
    BadMagicError,
    BundleError,
    ChecksumMismatchError,
    DimensionMismatchError,
    EmptyClassError,
    EmptyInputError,
    IcefuseError,
    InvalidAxisError,
    InvalidSpecError,
    InvariantViolationError,
    NonFiniteError,
    UnsupportedVersionError,
    ZeroVectorError,
)
from .evaluation import (
    AblationGrid,
    EvalReport,
    MethodResult,
    QuadrantCounts,
    SampleRecord,
    ablate,
    evaluate,
    quadrant_report,
    top_k_accuracy,
)
from .fusion import (
    IceConfig,
    IcePrediction,
    adaptive_lambda,
    caption_score,
    ice_predict,
    top_k_indices,
)
from .prototypes import (
    ClassPrototypeSet,
    Reduction,
    build_prototypes,
    score_image,
    score_rows,
)
from .synth import SynthSpec, synth_bundle
from .vecmath import centroid, cosine, normalize, softmax, stddev

__version__ = "0.1.0"

__all__ = [
    "AblationGrid",
    "BadMagicError",
    "BundleError",
    "ChecksumMismatchError",
    "ClassPrototypeSet",
    "DatasetManifest",
    "DimensionMismatchError",
    "EmbeddingBundle",
    "EmptyClassError",
    "EmptyInputError",
    "EvalReport",
    "IceConfig",
    "IcePrediction",
    "IcefuseError",
    "InvalidAxisError",
    "InvalidSpecError",
    "InvariantViolationError",
    "MethodResult",
    "NonFiniteError",
    "QuadrantCounts",
    "Reduction",
    "SampleRecord",
    "SynthSpec",
    "UnsupportedVersionError",
    "ZeroVectorError",
    "ablate",
    "adaptive_lambda",
    "build_prototypes",
    "caption_score",
    "centroid",
    "cosine",
    "evaluate",
    "ice_predict",
    "normalize",
    "quadrant_report",
    "read_bundle",
    "score_image",
    "score_rows",
    "softmax",
    "stddev",
    "synth_bundle",
    "top_k_accuracy",
    "top_k_indices",
    "validate_bundle_file",
    "write_bundle",
]
