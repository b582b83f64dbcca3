"""Fusion and refinement toolkit for land-cover segmentation rasters.

Operates on probability/logit rasters produced by any upstream classifier:
expert binary override of a confused class pair, windowed Bayesian logit
smoothing, a full evaluation suite, plus the tiling and raster I/O plumbing
around them.
"""

from .errors import (
    ChecksumMismatchError,
    ConfigError,
    CoverageError,
    FmlcError,
    MalformedHeaderError,
    MalformedTiffError,
    ShapeMismatchError,
    TensorFormatError,
    TiffCapacityError,
    TiffError,
    TruncatedPayloadError,
    UnsupportedTiffError,
    ValidationError,
)
from .fusion import (
    FusionRule,
    PipelineResult,
    detect_confusion,
    expert_override,
    run_pipeline,
    run_pipeline_detailed,
    rules_from_json,
    rules_to_json,
)
from .metrics import (
    ConfusionMatrix,
    MetricReport,
    binary_ce_loss,
    confusion,
    metrics,
    multiclass_ce_loss,
    render_confusion_table,
    render_report,
)
from .raster import (
    DEFAULT_LOGIT_EPS,
    BinaryProbMap,
    LabelMap,
    LogitMap,
    MultiBandRaster,
    ProbabilityMap,
    argmax_labels,
    as_binary_prob_map,
    as_logit_map,
    as_probability_map,
    as_raster,
    probs_to_logits,
    sigmoid,
    softmax,
)
from .smoothing import (
    MrfParams,
    SmoothingParams,
    blend,
    label_disagreement_count,
    mrf_energy,
    smooth,
    smooth_logits,
    window_stats,
)
from .synth import (
    SceneSpec,
    count_single_pixel_islands,
    generate_scene,
    naive_smooth_reference,
    naive_window_stats,
)
from .tensor_io import read_tensor, write_tensor
from .tiff_io import (
    GeoTag,
    TiffTagSet,
    read_geo_tags,
    read_label_tiff,
    read_tag_set,
    read_tiff,
    write_label_tiff,
)
from .tiling import (
    NormalizationStats,
    TileSpec,
    compute_stats,
    destandardize,
    load_stats,
    save_stats,
    standardize,
    stitch,
    tile,
    tile_origins,
)

__version__ = "0.1.0"
