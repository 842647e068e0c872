"""One-vs-rest segmentation metrics for 4-class label rasters.

Overlap metrics come from per-class confusion counts; surface metrics use
boundary point sets under 4-connectivity with out-of-bounds treated as
background for the class in question.

Zero-denominator policy: a class absent from both masks scores 1.0 on
every overlap metric; a class present in exactly one mask scores 0.0
where the metric is defined.  Surface metrics with an empty surface are
reported as undefined (None), never silently zeroed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import distance_transform_edt

from .errors import EmptySurfaceError, ShapeMismatchError, UnsupportedValueError

NUM_CLASSES = 4

# column order used by every serialized report
METRIC_COLUMNS = ("iou", "dice", "asd", "nsd", "precision", "recall", "f1")


@dataclass(frozen=True)
class MetricConfig:
    tau: float = 1.0
    spacing: tuple[float, float] = (1.0, 1.0)  # (row, col) pixel pitch
    include_background: bool = True


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int


@dataclass(frozen=True)
class SurfacePoints:
    """Boundary pixels of one class, lexicographically ordered (row, col)."""

    points: np.ndarray
    spacing: tuple[float, float]

    def __len__(self) -> int:
        return int(self.points.shape[0])


@dataclass
class ClassReport:
    class_index: int
    iou: float
    dice: float
    asd: float | None
    nsd: float | None
    precision: float
    recall: float
    f1: float


@dataclass
class MetricReport:
    classes: tuple[ClassReport, ...]
    mean_iou: float
    mean_dice: float


def _check_pair(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred)
    g = np.asarray(gt)
    if p.shape != g.shape:
        raise ShapeMismatchError(f"shape {p.shape} vs {g.shape}")
    if p.ndim != 2:
        raise UnsupportedValueError(f"label rasters must be 2D, got {p.ndim}D")
    return p, g


def confusion(pred: np.ndarray, gt: np.ndarray, c: int) -> ConfusionCounts:
    """One-vs-rest confusion counts for class c."""
    p, g = _check_pair(pred, gt)
    pp = p == c
    gg = g == c
    tp = int(np.count_nonzero(pp & gg))
    fp = int(np.count_nonzero(pp & ~gg))
    fn = int(np.count_nonzero(~pp & gg))
    tn = int(np.count_nonzero(~pp & ~gg))
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def _absent_both(c: ConfusionCounts) -> bool:
    return c.tp + c.fp + c.fn == 0


def iou(c: ConfusionCounts) -> float:
    if _absent_both(c):
        return 1.0
    return c.tp / (c.tp + c.fp + c.fn)


def dice(c: ConfusionCounts) -> float:
    if _absent_both(c):
        return 1.0
    return 2 * c.tp / (2 * c.tp + c.fp + c.fn)


def precision(c: ConfusionCounts) -> float:
    if _absent_both(c):
        return 1.0
    if c.tp + c.fp == 0:
        return 0.0
    return c.tp / (c.tp + c.fp)


def recall(c: ConfusionCounts) -> float:
    if _absent_both(c):
        return 1.0
    if c.tp + c.fn == 0:
        return 0.0
    return c.tp / (c.tp + c.fn)


def f1(c: ConfusionCounts) -> float:
    # harmonic mean of precision and recall, evaluated on raw counts so
    # the identity with dice holds bitwise
    if _absent_both(c):
        return 1.0
    return 2 * c.tp / (2 * c.tp + c.fp + c.fn)


def _included_classes(cfg: MetricConfig) -> range:
    return range(NUM_CLASSES) if cfg.include_background else range(1, NUM_CLASSES)


def mean_iou(pred: np.ndarray, gt: np.ndarray,
             cfg: MetricConfig | None = None) -> float:
    cfg = cfg or MetricConfig()
    vals = [iou(confusion(pred, gt, c)) for c in _included_classes(cfg)]
    return float(np.mean(vals))


def mean_dice(pred: np.ndarray, gt: np.ndarray,
              cfg: MetricConfig | None = None) -> float:
    cfg = cfg or MetricConfig()
    vals = [dice(confusion(pred, gt, c)) for c in _included_classes(cfg)]
    return float(np.mean(vals))


def _surface_mask(mask: np.ndarray, c: int) -> np.ndarray:
    binary = mask == c
    padded = np.pad(binary, 1, mode="constant", constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    ) & binary
    return binary & ~interior


def extract_surface(mask: np.ndarray, c: int,
                    cfg: MetricConfig | None = None) -> SurfacePoints:
    """Boundary pixels of class c: members with a 4-neighbor not in c.

    Out-of-bounds positions count as "not class c", so image-border pixels
    of the class are always part of the surface.
    """
    cfg = cfg or MetricConfig()
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise UnsupportedValueError(f"label rasters must be 2D, got {arr.ndim}D")
    pts = np.argwhere(_surface_mask(arr, c))  # argwhere is already lexicographic
    return SurfacePoints(points=pts.astype(np.int64), spacing=cfg.spacing)


def _distances_to_surface(surface: np.ndarray, query_pts: np.ndarray,
                          spacing: tuple[float, float]) -> np.ndarray:
    """Min distance from each query point to the True pixels of surface."""
    dt = distance_transform_edt(~surface, sampling=spacing)
    return dt[query_pts[:, 0], query_pts[:, 1]].astype(np.float64)


def asd(pred: np.ndarray, gt: np.ndarray, c: int,
        cfg: MetricConfig | None = None) -> float:
    """Symmetric average surface distance for class c.

    Sums nearest-surface distances in both directions and divides by the
    total number of surface points.
    """
    cfg = cfg or MetricConfig()
    p, g = _check_pair(pred, gt)
    sp = _surface_mask(p, c)
    sg = _surface_mask(g, c)
    pred_pts = np.argwhere(sp)
    gt_pts = np.argwhere(sg)
    if len(pred_pts) == 0 or len(gt_pts) == 0:
        raise EmptySurfaceError(f"class {c}: empty surface, distance undefined")
    d_pg = _distances_to_surface(sg, pred_pts, cfg.spacing)
    d_gp = _distances_to_surface(sp, gt_pts, cfg.spacing)
    return float((d_pg.sum() + d_gp.sum()) / (len(pred_pts) + len(gt_pts)))


def nsd(pred: np.ndarray, gt: np.ndarray, c: int,
        cfg: MetricConfig | None = None) -> float:
    """Fraction of ground-truth surface points within tau of the prediction.

    One-sided with a strict < tau test.  An empty prediction surface
    against a non-empty ground truth scores 0.0; an empty ground-truth
    surface is undefined.
    """
    cfg = cfg or MetricConfig()
    p, g = _check_pair(pred, gt)
    sp = _surface_mask(p, c)
    sg = _surface_mask(g, c)
    gt_pts = np.argwhere(sg)
    if len(gt_pts) == 0:
        raise EmptySurfaceError(f"class {c}: empty ground-truth surface")
    if not sp.any():
        return 0.0
    d = _distances_to_surface(sp, gt_pts, cfg.spacing)
    return float(np.count_nonzero(d < cfg.tau) / len(gt_pts))


def evaluate_pair(pred: np.ndarray, gt: np.ndarray,
                  cfg: MetricConfig | None = None) -> MetricReport:
    """Every metric for every class, plus the two means.

    Surface metrics that are undefined for a class (empty surface on the
    relevant side) appear as None in that class's report.
    """
    cfg = cfg or MetricConfig()
    reports = []
    for c in range(NUM_CLASSES):
        counts = confusion(pred, gt, c)
        try:
            asd_val = asd(pred, gt, c, cfg)
        except EmptySurfaceError:
            asd_val = None
        try:
            nsd_val = nsd(pred, gt, c, cfg)
        except EmptySurfaceError:
            nsd_val = None
        reports.append(ClassReport(
            class_index=c,
            iou=iou(counts),
            dice=dice(counts),
            asd=asd_val,
            nsd=nsd_val,
            precision=precision(counts),
            recall=recall(counts),
            f1=f1(counts),
        ))
    return MetricReport(
        classes=tuple(reports),
        mean_iou=mean_iou(pred, gt, cfg),
        mean_dice=mean_dice(pred, gt, cfg),
    )
