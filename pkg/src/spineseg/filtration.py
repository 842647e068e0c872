"""Class statistics and the two-step dataset filtration.

Step 1 drops slices that do not carry all four classes; step 2 drops
slices whose class imbalance exceeds a threshold.  Entries are never
deleted: a verdict records why a slice left the kept set, so the decision
stays auditable in the manifest.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMaskError, UnsupportedValueError, ZeroWeightError
from .volume_io import SliceSpec

NUM_CLASSES = 4

SERIES_NAMES = ("T1", "T2", "T2_SPACE")

KEPT = "kept"
DROPPED_REDUNDANT = "dropped_redundant"
DROPPED_IMBALANCED = "dropped_imbalanced"

DOMINANT_FRACTION = "dominant_fraction"
MAX_OVER_MIN = "max_over_min"

DEFAULT_THRESHOLD = 0.55


@dataclass(frozen=True)
class ClassStats:
    """Pixel counts per class for one mask."""

    counts: tuple[int, int, int, int]

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def present_classes(self) -> frozenset[int]:
        return frozenset(i for i, n in enumerate(self.counts) if n > 0)


@dataclass
class ManifestEntry:
    """One (image slice, mask slice) pair tracked through the pipeline."""

    image_ref: str
    mask_ref: str
    series: str
    slice_index: int
    slice_spec: SliceSpec = field(default_factory=SliceSpec)
    restored_ref: str = ""
    stats: ClassStats | None = None
    weights: tuple[float, float, float, float] | None = None
    verdict: str = KEPT
    converged: bool | None = None
    split: str = ""  # carried through for downstream use, no policy imposed
    error: str = ""


def class_census(labels: np.ndarray) -> ClassStats:
    """Count pixels per class in a 0..3 label raster."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise UnsupportedValueError(f"label raster must be 2D, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise UnsupportedValueError("label raster must be integer typed")
    if arr.size and (arr.min() < 0 or arr.max() >= NUM_CLASSES):
        raise UnsupportedValueError(
            f"labels outside 0..{NUM_CLASSES - 1}: min {arr.min()}, max {arr.max()}"
        )
    counts = np.bincount(arr.ravel(), minlength=NUM_CLASSES)
    return ClassStats(counts=tuple(int(n) for n in counts))


def class_weights(stats: ClassStats) -> tuple[float, float, float, float]:
    """Per-class pixel share: count over total."""
    total = stats.total
    if total == 0:
        raise EmptyMaskError("cannot weight a mask with zero pixels")
    return tuple(n / total for n in stats.counts)


def imbalance_ratio(weights, mode: str = DOMINANT_FRACTION) -> float:
    """One imbalance number for a weight vector.

    ``dominant_fraction`` is the share of the heaviest class;
    ``max_over_min`` divides the heaviest share by the lightest and
    requires every class to be present.
    """
    w = [float(x) for x in weights]
    if mode == DOMINANT_FRACTION:
        return max(w)
    if mode == MAX_OVER_MIN:
        if min(w) == 0.0:
            raise ZeroWeightError("max_over_min undefined with a zero class weight")
        return max(w) / min(w)
    raise UnsupportedValueError(f"unknown imbalance mode {mode!r}")


def filter_redundant(entries) -> list[ManifestEntry]:
    """Step 1: drop entries whose mask misses at least one class."""
    out = []
    for entry in entries:
        if entry.stats is not None and len(entry.stats.present_classes) < NUM_CLASSES:
            out.append(dataclasses.replace(entry, verdict=DROPPED_REDUNDANT))
        else:
            out.append(dataclasses.replace(entry))
    return out


def filter_imbalanced(entries, threshold: float = DEFAULT_THRESHOLD,
                      mode: str = DOMINANT_FRACTION) -> list[ManifestEntry]:
    """Step 2: among kept entries, drop those strictly above the threshold.

    An entry sitting exactly on the threshold stays.  Entries already
    dropped keep their verdict, which makes the pass idempotent.
    """
    out = []
    for entry in entries:
        entry = dataclasses.replace(entry)
        if entry.verdict == KEPT and entry.weights is not None:
            if imbalance_ratio(entry.weights, mode) > threshold:
                entry.verdict = DROPPED_IMBALANCED
        out.append(entry)
    return out


def reset_verdicts(entries) -> list[ManifestEntry]:
    """Return entries with every verdict back to kept (for forced reruns)."""
    return [dataclasses.replace(e, verdict=KEPT) for e in entries]


@dataclass
class SeriesSummary:
    total: int = 0
    kept: int = 0
    dropped_redundant: int = 0
    dropped_imbalanced: int = 0
    failed: int = 0
    max_ratio_initial: float | None = None
    max_ratio_kept: float | None = None

    @property
    def ratio_reduction(self) -> float | None:
        if self.max_ratio_initial is None or self.max_ratio_kept is None:
            return None
        return self.max_ratio_initial - self.max_ratio_kept


@dataclass
class DatasetSummary:
    per_series: dict[str, SeriesSummary]
    mode: str

    @property
    def overall(self) -> SeriesSummary:
        agg = SeriesSummary()
        ratios_initial = []
        ratios_kept = []
        for s in self.per_series.values():
            agg.total += s.total
            agg.kept += s.kept
            agg.dropped_redundant += s.dropped_redundant
            agg.dropped_imbalanced += s.dropped_imbalanced
            agg.failed += s.failed
            if s.max_ratio_initial is not None:
                ratios_initial.append(s.max_ratio_initial)
            if s.max_ratio_kept is not None:
                ratios_kept.append(s.max_ratio_kept)
        agg.max_ratio_initial = max(ratios_initial) if ratios_initial else None
        agg.max_ratio_kept = max(ratios_kept) if ratios_kept else None
        return agg


def summarize(entries, mode: str = DOMINANT_FRACTION) -> DatasetSummary:
    """Per-series retention tallies and imbalance extremes.

    Counts satisfy kept + dropped_redundant + dropped_imbalanced + failed
    == total for every series.  Ratio extremes cover entries that have
    weights; ``max_ratio_initial`` looks at all of them, ``max_ratio_kept``
    only at survivors.
    """
    per: dict[str, SeriesSummary] = {}
    for entry in entries:
        s = per.setdefault(entry.series, SeriesSummary())
        s.total += 1
        if entry.error:
            s.failed += 1
            continue
        if entry.verdict == KEPT:
            s.kept += 1
        elif entry.verdict == DROPPED_REDUNDANT:
            s.dropped_redundant += 1
        elif entry.verdict == DROPPED_IMBALANCED:
            s.dropped_imbalanced += 1
        else:
            raise UnsupportedValueError(f"unknown verdict {entry.verdict!r}")
        if entry.weights is not None:
            try:
                ratio = imbalance_ratio(entry.weights, mode)
            except ZeroWeightError:
                ratio = None
            if ratio is not None:
                if s.max_ratio_initial is None or ratio > s.max_ratio_initial:
                    s.max_ratio_initial = ratio
                if entry.verdict == KEPT and (s.max_ratio_kept is None or ratio > s.max_ratio_kept):
                    s.max_ratio_kept = ratio
    return DatasetSummary(per_series=per, mode=mode)
