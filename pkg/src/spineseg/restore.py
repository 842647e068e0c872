"""Local pixel rules that repair defective RGB segmentation masks.

Exported masks arrive with up to 16 off-palette shades, stray outlines,
singleton pixels and rows whose horizontal neighbors disagree.  The repair
pass drives every pixel to one of four canonical colors (black, red,
green, blue) and then to a class label 0..3.

All rules read a snapshot of the input and write a fresh output, so the
result never depends on scan order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UncoveredIntensityError, UnsupportedValueError

BLACK = (0, 0, 0)
RED = (255, 0, 0)
GREEN = (0, 255, 0)
BLUE = (0, 0, 255)

# class order doubles as the tie-break order for majority votes
CLASS_COLORS = (BLACK, RED, GREEN, BLUE)

FOUR = "four"
EIGHT = "eight"

_OFFSETS = {
    FOUR: ((-1, 0), (1, 0), (0, -1), (0, 1)),
    EIGHT: ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)),
}

_SENTINEL = -1  # packed code for out-of-bounds positions


@dataclass(frozen=True)
class PaletteRules:
    """Inclusive max-channel intensity ranges for the three shade bins.

    A non-black, non-canonical pixel lands in exactly one bin by the
    maximum of its RGB channels: dark shades become red, mid shades green,
    light shades blue.  Ranges must be disjoint and must not contain 0
    (0 is reserved for black).
    """

    dark_range: tuple[int, int] = (1, 84)
    mid_range: tuple[int, int] = (85, 169)
    light_range: tuple[int, int] = (170, 255)

    def validate(self) -> None:
        ranges = (self.dark_range, self.mid_range, self.light_range)
        for lo, hi in ranges:
            if not (0 < lo <= hi <= 255):
                raise UnsupportedValueError(f"bad shade range ({lo}, {hi})")
        for i in range(len(ranges)):
            for j in range(i + 1, len(ranges)):
                a, b = ranges[i], ranges[j]
                if a[0] <= b[1] and b[0] <= a[1]:
                    raise UnsupportedValueError(f"overlapping shade ranges {a} and {b}")


@dataclass
class AptaResult:
    """Outcome of a full repair run.

    ``labels`` is the final class raster even when the fixed-point loop
    ran out of rounds; ``converged`` tells the two cases apart.
    """

    labels: np.ndarray
    converged: bool
    rounds: int


def validate_rgb_mask(mask: np.ndarray) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise UnsupportedValueError(
            f"expected a (h, w, 3) uint8 mask, got shape {arr.shape} dtype {arr.dtype}"
        )
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise UnsupportedValueError(f"mask has empty extent: {arr.shape}")
    return arr


def _offsets(nb: str):
    try:
        return _OFFSETS[nb]
    except KeyError:
        raise UnsupportedValueError(f"unknown connectivity {nb!r}") from None


def _pack(mask: np.ndarray) -> np.ndarray:
    m = mask.astype(np.int32)
    return (m[..., 0] << 16) | (m[..., 1] << 8) | m[..., 2]


def _unpack(codes: np.ndarray) -> np.ndarray:
    out = np.empty(codes.shape + (3,), dtype=np.uint8)
    out[..., 0] = (codes >> 16) & 0xFF
    out[..., 1] = (codes >> 8) & 0xFF
    out[..., 2] = codes & 0xFF
    return out


def _pack_color(color) -> int:
    r, g, b = color
    return (int(r) << 16) | (int(g) << 8) | int(b)


def _shifted(codes: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Neighbor codes at offset (dy, dx), sentinel where out of bounds."""
    h, w = codes.shape
    out = np.full((h, w), _SENTINEL, dtype=codes.dtype)
    ys = slice(max(0, -dy), min(h, h - dy))
    xs = slice(max(0, -dx), min(w, w - dx))
    src_ys = slice(max(0, dy), min(h, h + dy))
    src_xs = slice(max(0, dx), min(w, w + dx))
    out[ys, xs] = codes[src_ys, src_xs]
    return out


def _tie_key(code: int) -> tuple[int, int]:
    # canonical colors sort by class order; anything else after, by value
    canonical = [_pack_color(c) for c in CLASS_COLORS]
    if code in canonical:
        return (canonical.index(code), code)
    return (len(canonical), code)


def _majority(codes: np.ndarray, nb: str) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel most common neighbor color and the neighbor tally.

    Ties go to the color earliest in the class order.  Pixels with no
    in-bounds neighbor report a sentinel majority and tally 0.
    """
    shifts = [_shifted(codes, dy, dx) for dy, dx in _offsets(nb)]
    colors = sorted(np.unique(codes).tolist(), key=_tie_key)
    h, w = codes.shape
    counts = np.zeros((len(colors), h, w), dtype=np.int16)
    for i, color in enumerate(colors):
        for sh in shifts:
            counts[i] += sh == color
    total = counts.sum(axis=0)
    best = np.argmax(counts, axis=0)  # first max wins, order is the tie-break
    lut = np.asarray(colors, dtype=np.int64)
    majority = lut[best]
    majority = np.where(total > 0, majority, _SENTINEL)
    return majority, total


def replace_color_ranges(mask: np.ndarray, rules: PaletteRules | None = None) -> np.ndarray:
    """Snap every off-palette shade to its canonical color by intensity bin."""
    mask = validate_rgb_mask(mask)
    rules = rules or PaletteRules()
    rules.validate()
    peak = mask.max(axis=2).astype(np.int64)
    codes = _pack(mask)
    canonical = np.zeros(codes.shape, dtype=bool)
    for color in CLASS_COLORS:
        canonical |= codes == _pack_color(color)
    out = mask.copy()
    pending = ~canonical
    for (lo, hi), color in (
        (rules.dark_range, RED),
        (rules.mid_range, GREEN),
        (rules.light_range, BLUE),
    ):
        hit = pending & (peak >= lo) & (peak <= hi)
        out[hit] = color
        pending &= ~hit
    if pending.any():
        bad = int(peak[pending].flat[0])
        raise UncoveredIntensityError(
            f"intensity {bad} falls outside every configured shade range"
        )
    return out


def propagate_neighbor_colors(mask: np.ndarray, nb: str = EIGHT) -> np.ndarray:
    """Adopt the first adjacent color that matches the pixel's own.

    A neighbor qualifies only when its color already equals the pixel's,
    so the adopted value is the pixel's value and the pass is a fixed
    point on every input; it stays in the sequence as the uniformity step.
    """
    codes = _pack(validate_rgb_mask(mask))
    adopted = np.full(codes.shape, _SENTINEL, dtype=np.int64)
    for dy, dx in _offsets(nb):
        sh = _shifted(codes, dy, dx)
        take = (adopted == _SENTINEL) & (sh == codes)
        adopted[take] = sh[take]
    out = np.where(adopted != _SENTINEL, adopted, codes)
    return _unpack(out)


def remove_outlines(mask: np.ndarray, nb: str = EIGHT) -> np.ndarray:
    """Replace each pixel that differs from its neighbors' majority color.

    Equivalent to a mode filter over the neighborhood (self excluded) with
    ties broken by class order; pixels with no neighbors are kept.
    """
    codes = _pack(validate_rgb_mask(mask))
    majority, total = _majority(codes, nb)
    out = np.where(total > 0, majority, codes)
    return _unpack(out)


def fix_disagreeing_borders(mask: np.ndarray, nb: str = EIGHT) -> np.ndarray:
    """Fix pixels whose left and right neighbors both disagree with them.

    The trigger looks only at the horizontal pair (in-bounds members at
    the image border); the replacement is the most common color over the
    configured neighborhood.
    """
    codes = _pack(validate_rgb_mask(mask))
    left = _shifted(codes, 0, -1)
    right = _shifted(codes, 0, 1)
    in_bounds = (left != _SENTINEL).astype(np.int8) + (right != _SENTINEL).astype(np.int8)
    disagree = ((left != _SENTINEL) & (left != codes)).astype(np.int8)
    disagree += ((right != _SENTINEL) & (right != codes)).astype(np.int8)
    trigger = (in_bounds > 0) & (disagree == in_bounds)
    majority, total = _majority(codes, nb)
    out = np.where(trigger & (total > 0), majority, codes)
    return _unpack(out)


def replace_singletons(mask: np.ndarray, nb: str = EIGHT) -> np.ndarray:
    """Give pixels with no same-colored neighbor the local majority color."""
    codes = _pack(validate_rgb_mask(mask))
    same = np.zeros(codes.shape, dtype=np.int16)
    for dy, dx in _offsets(nb):
        same += _shifted(codes, dy, dx) == codes
    majority, total = _majority(codes, nb)
    singleton = (same == 0) & (total > 0)
    out = np.where(singleton, majority, codes)
    return _unpack(out)


def ensure_red_presence(mask: np.ndarray) -> np.ndarray:
    """If green or blue appear without any red, recolor them all red."""
    mask = validate_rgb_mask(mask)
    codes = _pack(mask)
    has_red = bool((codes == _pack_color(RED)).any())
    gb = (codes == _pack_color(GREEN)) | (codes == _pack_color(BLUE))
    if has_red or not gb.any():
        return mask.copy()
    out = mask.copy()
    out[gb] = RED
    return out


def rgb_to_labels(mask: np.ndarray,
                  class_colors: tuple = CLASS_COLORS) -> np.ndarray:
    """Map canonical colors to class indices by position in class_colors."""
    codes = _pack(validate_rgb_mask(mask))
    labels = np.full(codes.shape, -1, dtype=np.int16)
    for idx, color in enumerate(class_colors):
        labels[codes == _pack_color(color)] = idx
    if (labels < 0).any():
        bad = _unpack(codes[labels < 0][:1].reshape(1, 1))[0, 0]
        raise UnsupportedValueError(f"non-canonical color {tuple(bad.tolist())} in mask")
    return labels.astype(np.uint8)


def labels_to_rgb(labels: np.ndarray,
                  class_colors: tuple = CLASS_COLORS) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise UnsupportedValueError(f"label raster must be 2D, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() >= len(class_colors)):
        raise UnsupportedValueError("labels outside the class range")
    lut = np.asarray(class_colors, dtype=np.uint8)
    return lut[arr.astype(np.int64)]


def apta(mask: np.ndarray, rules: PaletteRules | None = None, nb: str = EIGHT,
         max_rounds: int = 16) -> AptaResult:
    """Run the full repair: steps 1-6 once, then steps 2-5 to a fixed point.

    Stops as soon as one round of the 2-5 loop leaves the mask unchanged.
    If max_rounds rounds all changed something, the last iterate is still
    returned with ``converged=False``.
    """
    if max_rounds < 1:
        raise UnsupportedValueError(f"max_rounds must be >= 1, got {max_rounds}")
    cur = replace_color_ranges(mask, rules)
    cur = propagate_neighbor_colors(cur, nb)
    cur = remove_outlines(cur, nb)
    cur = fix_disagreeing_borders(cur, nb)
    cur = replace_singletons(cur, nb)
    cur = ensure_red_presence(cur)
    converged = False
    rounds = 0
    for _ in range(max_rounds):
        prev = cur
        cur = propagate_neighbor_colors(cur, nb)
        cur = remove_outlines(cur, nb)
        cur = fix_disagreeing_borders(cur, nb)
        cur = replace_singletons(cur, nb)
        rounds += 1
        if np.array_equal(prev, cur):
            converged = True
            break
    return AptaResult(labels=rgb_to_labels(cur), converged=converged, rounds=rounds)
