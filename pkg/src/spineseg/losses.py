"""Reference loss kernel: focal, soft dice and their combination.

Pure float64 numpy, written for exactness rather than speed: this is the
ground truth the training code must agree with.  Gradients come in two
independent routes, a closed-form evaluation and a central-difference
oracle, so either one can check the other.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    NotNormalizedError,
    PerturbationOutOfRangeError,
    ShapeMismatchError,
    UnsupportedValueError,
)

NUM_CLASSES = 4

NORMALIZATION_TOL = 1e-6


@dataclass(frozen=True)
class LossParams:
    """Knobs for the combined loss.

    ``alpha_mix`` blends focal against dice; ``alpha_class`` is the
    per-class focal weight vector; ``prob_floor`` clamps the log argument.
    """

    gamma: float = 4.0
    alpha_mix: float = 0.6
    alpha_class: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    epsilon: float = 1e-6
    prob_floor: float = 1e-7


# alternate published reading of the focusing exponent, kept selectable
# so configurations can reproduce runs trained with the weak setting
LOW_GAMMA_PRESET = LossParams(gamma=0.4)

PRESETS = {
    "default": LossParams(),
    "low_gamma": LOW_GAMMA_PRESET,
}


def _as_f64(arr) -> np.ndarray:
    return np.asarray(arr, dtype=np.float64)


def _check_shapes(pred: np.ndarray, true: np.ndarray) -> None:
    if pred.shape != true.shape:
        raise ShapeMismatchError(f"shape {pred.shape} vs {true.shape}")
    if pred.ndim != 3 or pred.shape[2] != NUM_CLASSES:
        raise UnsupportedValueError(
            f"expected (h, w, {NUM_CLASSES}) tensors, got shape {pred.shape}"
        )


def validate_probs(pred) -> np.ndarray:
    """Check a (h, w, 4) probability tensor: values in [0, 1], rows sum to 1."""
    arr = _as_f64(pred)
    if arr.ndim != 3 or arr.shape[2] != NUM_CLASSES:
        raise UnsupportedValueError(
            f"expected a (h, w, {NUM_CLASSES}) tensor, got shape {arr.shape}"
        )
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise UnsupportedValueError("probabilities must lie in [0, 1]")
    sums = arr.sum(axis=2)
    if arr.size and np.abs(sums - 1.0).max() > NORMALIZATION_TOL:
        worst = float(np.abs(sums - 1.0).max())
        raise NotNormalizedError(
            f"per-pixel channel sums stray from 1 by up to {worst:g}"
        )
    return arr


def validate_onehot(true) -> np.ndarray:
    """Check a (h, w, 4) one-hot tensor: exact 0/1 entries, rows sum to 1."""
    arr = _as_f64(true)
    if arr.ndim != 3 or arr.shape[2] != NUM_CLASSES:
        raise UnsupportedValueError(
            f"expected a (h, w, {NUM_CLASSES}) tensor, got shape {arr.shape}"
        )
    if arr.size:
        if not np.isin(arr, (0.0, 1.0)).all():
            raise UnsupportedValueError("one-hot tensor must contain only 0 and 1")
        if not (arr.sum(axis=2) == 1.0).all():
            raise UnsupportedValueError("one-hot rows must sum to exactly 1")
    return arr


def one_hot(labels: np.ndarray) -> np.ndarray:
    """Expand a (h, w) label raster into a (h, w, 4) one-hot tensor."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise UnsupportedValueError(f"label raster must be 2D, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() >= NUM_CLASSES):
        raise UnsupportedValueError("labels outside the class range")
    return np.eye(NUM_CLASSES, dtype=np.float64)[arr.astype(np.int64)]


def _focal_raw(pred: np.ndarray, true: np.ndarray, params: LossParams) -> float:
    # raw formula without tensor validation; the finite-difference oracle
    # needs to evaluate slightly denormalized inputs
    clamped = np.maximum(pred, params.prob_floor)
    alpha = np.asarray(params.alpha_class, dtype=np.float64).reshape(1, 1, NUM_CLASSES)
    site = -alpha * (1.0 - pred) ** params.gamma * true * np.log(clamped)
    pixels = pred.shape[0] * pred.shape[1]
    return float(site.sum() / pixels)


def focal_loss(pred, true, params: LossParams | None = None) -> float:
    """Mean focal loss over pixels.

    Each pixel contributes its true-class term weighted by alpha_class and
    the (1 - p)^gamma focusing factor; the log argument is clamped at
    prob_floor.
    """
    params = params or LossParams()
    p = validate_probs(pred)
    t = validate_onehot(true)
    _check_shapes(p, t)
    if p.shape[0] * p.shape[1] == 0:
        raise UnsupportedValueError("cannot average over zero pixels")
    return _focal_raw(p, t, params)


def _dice_raw(pred: np.ndarray, true: np.ndarray, params: LossParams) -> float:
    inter = float((true * pred).sum())
    denom = float(true.sum() + pred.sum())
    return 1.0 - (2.0 * inter + params.epsilon) / (denom + params.epsilon)


def dice_loss(pred, true, params: LossParams | None = None,
              per_class: bool = False) -> float:
    """Global soft dice loss; empty tensors give loss 0 via the epsilon.

    ``per_class=True`` averages one dice term per channel instead of
    pooling all channels into one global sum.
    """
    params = params or LossParams()
    p = _as_f64(pred)
    t = _as_f64(true)
    _check_shapes(p, t)
    if not per_class:
        return _dice_raw(p, t, params)
    vals = []
    for c in range(NUM_CLASSES):
        inter = float((t[..., c] * p[..., c]).sum())
        denom = float(t[..., c].sum() + p[..., c].sum())
        vals.append(1.0 - (2.0 * inter + params.epsilon) / (denom + params.epsilon))
    return float(np.mean(vals))


def combined_loss(pred, true, params: LossParams | None = None) -> float:
    """alpha_mix times focal plus (1 - alpha_mix) times dice."""
    params = params or LossParams()
    if not 0.0 <= params.alpha_mix <= 1.0:
        raise UnsupportedValueError(f"alpha_mix must lie in [0, 1], got {params.alpha_mix}")
    return params.alpha_mix * focal_loss(pred, true, params) \
        + (1.0 - params.alpha_mix) * dice_loss(pred, true, params)


def _combined_raw(pred: np.ndarray, true: np.ndarray, params: LossParams) -> float:
    return params.alpha_mix * _focal_raw(pred, true, params) \
        + (1.0 - params.alpha_mix) * _dice_raw(pred, true, params)


_RAW_EVALUATORS = {
    "focal": _focal_raw,
    "dice": _dice_raw,
    "combined": _combined_raw,
}


def focal_grad(pred, true, params: LossParams | None = None) -> np.ndarray:
    """Closed-form partials of focal_loss with respect to each pred site."""
    params = params or LossParams()
    p = validate_probs(pred)
    t = validate_onehot(true)
    _check_shapes(p, t)
    alpha = np.asarray(params.alpha_class, dtype=np.float64).reshape(1, 1, NUM_CLASSES)
    clamped = np.maximum(p, params.prob_floor)
    log_term = np.log(clamped)
    inv = np.where(p > params.prob_floor, 1.0 / clamped, 0.0)  # clamp kills the log slope
    if params.gamma == 0.0:
        focus = np.ones_like(p)
        dfocus = np.zeros_like(p)
    else:
        focus = (1.0 - p) ** params.gamma
        dfocus = params.gamma * (1.0 - p) ** (params.gamma - 1.0)
    pixels = p.shape[0] * p.shape[1]
    return -alpha * t * (-dfocus * log_term + focus * inv) / pixels


def dice_grad(pred, true, params: LossParams | None = None) -> np.ndarray:
    """Closed-form partials of the global soft dice loss."""
    params = params or LossParams()
    p = _as_f64(pred)
    t = _as_f64(true)
    _check_shapes(p, t)
    inter = float((t * p).sum())
    denom = float(t.sum() + p.sum()) + params.epsilon
    num = 2.0 * inter + params.epsilon
    return -(2.0 * t * denom - num) / (denom * denom)


def combined_grad(pred, true, params: LossParams | None = None) -> np.ndarray:
    params = params or LossParams()
    return params.alpha_mix * focal_grad(pred, true, params) \
        + (1.0 - params.alpha_mix) * dice_grad(pred, true, params)


def finite_diff_grad(loss_name: str, pred, true,
                     params: LossParams | None = None, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient oracle over every pred site.

    Perturbs the raw tensors without renormalizing, so the result is the
    partial of the written formula.  Every pred entry must sit at least h
    inside [prob_floor, 1 - prob_floor] or the step would cross the clamp.
    """
    params = params or LossParams()
    if h <= 0:
        raise UnsupportedValueError(f"step h must be positive, got {h}")
    if loss_name not in _RAW_EVALUATORS:
        raise UnsupportedValueError(f"unknown loss {loss_name!r}")
    p = _as_f64(pred).copy()
    t = _as_f64(true)
    _check_shapes(p, t)
    if p.size and (
        (p - h <= params.prob_floor).any() or (p + h >= 1.0 - params.prob_floor).any()
    ):
        raise PerturbationOutOfRangeError(
            "a +-h step would leave the open interval (prob_floor, 1 - prob_floor)"
        )
    fn = _RAW_EVALUATORS[loss_name]
    grad = np.zeros_like(p)
    it = np.nditer(p, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = p[idx]
        p[idx] = orig + h
        hi = fn(p, t, params)
        p[idx] = orig - h
        lo = fn(p, t, params)
        p[idx] = orig
        grad[idx] = (hi - lo) / (2.0 * h)
    return grad


def generate_test_vectors(seed: int, count: int,
                          params: LossParams | None = None) -> list[dict]:
    """Deterministic list of loss test vectors.

    Each record carries a seeded pred/true pair (4x4 and 8x8 alternating),
    the parameters, and the three loss values at full float precision.
    """
    if count < 1:
        raise UnsupportedValueError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    params = params or LossParams()
    records = []
    for index in range(count):
        side = 4 if index % 2 == 0 else 8
        raw = rng.uniform(0.1, 1.1, size=(side, side, NUM_CLASSES))
        pred = raw / raw.sum(axis=2, keepdims=True)
        labels = rng.integers(0, NUM_CLASSES, size=(side, side))
        true = one_hot(labels)
        records.append({
            "index": index,
            "seed": seed,
            "height": side,
            "width": side,
            "gamma": params.gamma,
            "alpha_mix": params.alpha_mix,
            "alpha_class": list(params.alpha_class),
            "epsilon": params.epsilon,
            "prob_floor": params.prob_floor,
            "pred": pred.ravel().tolist(),
            "true": true.ravel().astype(int).tolist(),
            "focal": focal_loss(pred, true, params),
            "dice": dice_loss(pred, true, params),
            "combined": combined_loss(pred, true, params),
        })
    return records


def export_test_vectors(path, seed: int, count: int,
                        params: LossParams | None = None) -> list[dict]:
    """Write test vectors as one JSON record per line; returns the records.

    The same seed, count and parameters produce a byte-identical file.
    """
    records = generate_test_vectors(seed, count, params)
    with open(path, "w", encoding="ascii") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return records


def verify_test_vectors(path, tol: float = 1e-12) -> list[str]:
    """Recompute every vector in a file; returns human-readable mismatches."""
    problems = []
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    for lineno, line in enumerate(lines):
        rec = json.loads(line)
        shape = (rec["height"], rec["width"], NUM_CLASSES)
        pred = np.asarray(rec["pred"], dtype=np.float64).reshape(shape)
        true = np.asarray(rec["true"], dtype=np.float64).reshape(shape)
        params = LossParams(
            gamma=rec["gamma"],
            alpha_mix=rec["alpha_mix"],
            alpha_class=tuple(rec["alpha_class"]),
            epsilon=rec["epsilon"],
            prob_floor=rec["prob_floor"],
        )
        for name, fn in (("focal", focal_loss), ("dice", dice_loss), ("combined", combined_loss)):
            got = fn(pred, true, params)
            want = rec[name]
            if abs(got - want) > tol:
                problems.append(
                    f"vector {rec.get('index', lineno)}: {name} expected {want!r}, got {got!r}"
                )
    return problems
