"""Curation and evaluation toolkit for spine segmentation slice datasets.

The pieces, in pipeline order: volume slicing (`volume_io`), defective
mask repair (`restore`), class-balance filtration (`filtration`),
segmentation metrics (`metrics`) and the reference loss kernel
(`losses`).  The `cli` module chains them over a manifest.
"""

from .errors import (
    EmptyMaskError,
    EmptySurfaceError,
    ExcessPayloadError,
    MalformedLineError,
    MissingKeyError,
    NotNormalizedError,
    PerturbationOutOfRangeError,
    ShapeMismatchError,
    SpinesegError,
    TruncatedPayloadError,
    UncoveredIntensityError,
    UnknownLevelError,
    UnsupportedValueError,
    ZeroWeightError,
)
from .filtration import (
    ClassStats,
    DatasetSummary,
    ManifestEntry,
    class_census,
    class_weights,
    filter_imbalanced,
    filter_redundant,
    imbalance_ratio,
    summarize,
)
from .losses import (
    LossParams,
    combined_grad,
    combined_loss,
    dice_grad,
    dice_loss,
    export_test_vectors,
    finite_diff_grad,
    focal_grad,
    focal_loss,
    generate_test_vectors,
    one_hot,
    verify_test_vectors,
)
from .manifest import Manifest, read_manifest, write_manifest
from .metrics import (
    ConfusionCounts,
    MetricConfig,
    MetricReport,
    asd,
    confusion,
    dice,
    evaluate_pair,
    extract_surface,
    f1,
    iou,
    mean_dice,
    mean_iou,
    nsd,
    precision,
    recall,
)
from .restore import (
    AptaResult,
    PaletteRules,
    apta,
    ensure_red_presence,
    fix_disagreeing_borders,
    labels_to_rgb,
    propagate_neighbor_colors,
    remove_outlines,
    replace_color_ranges,
    replace_singletons,
    rgb_to_labels,
)
from .volume_io import (
    SliceSpec,
    Volume,
    VolumeHeader,
    decode_label_raster,
    encode_label_raster,
    extract_slices,
    load_volume,
    make_volume,
    parse_header,
    read_raster,
    read_volume,
    save_volume,
    write_raster,
    write_volume,
)

__version__ = "0.1.0"
