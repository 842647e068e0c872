"""Synthetic spine-like fixtures for tests and demos.

Real inputs are exported label volumes whose PNG masks arrive defective:
up to 16 off-palette shades, no pure red, stray singletons and outline
artifacts.  The builders here reproduce that defect class on demand, at
any size, from a seed.

Layout convention: vertebra bands (dark shades) alternating with disc
bands (light shades), one canal band (mid shade) among them.  All bands
run border to border and never touch each other; the repair rules keep
straight full-extent edges in place but erode corners and contact lines,
so any other layout takes dozens of rounds to settle.
"""

from __future__ import annotations

import numpy as np

from .volume_io import Volume, make_volume

# how the synthetic exporter colors label values 0..15; max-channel
# intensities fall in the dark bin for 1..9 (vertebra analogues), the mid
# bin for 10 (canal) and the light bin for 11..15 (disc analogues).
# No entry is a canonical color: the masks arrive entirely off palette.
EXPORT_PALETTE = (
    (0, 0, 0),
    (60, 20, 20), (40, 40, 10), (70, 30, 5), (25, 60, 30), (80, 15, 45),
    (35, 35, 35), (55, 70, 20), (15, 25, 65), (84, 42, 21),
    (120, 120, 40),
    (200, 200, 60), (230, 190, 80), (175, 210, 90), (250, 250, 250), (190, 80, 170),
)

DARK_LABELS = tuple(range(1, 10))
CANAL_LABEL = 10
LIGHT_LABELS = tuple(range(11, 16))


def palette_to_rgb(labels: np.ndarray) -> np.ndarray:
    lut = np.asarray(EXPORT_PALETTE, dtype=np.uint8)
    return lut[np.asarray(labels, dtype=np.int64)]


def _draw_bands(rng: np.random.Generator, height: int, width: int,
                with_light: bool, sparse: bool) -> np.ndarray:
    # bands run the full height and every pair is separated by >= 2
    # background columns; bands that stop mid-image or lean on a neighbor
    # grow unstable corners that the majority filter erodes one pixel per
    # round, and convergence crawls
    labels = np.zeros((height, width), dtype=np.uint8)
    dark_cycle = list(rng.permutation(DARK_LABELS))
    light_cycle = list(rng.permutation(LIGHT_LABELS))
    col = int(rng.integers(2, 4))  # leading background margin
    slot = 0
    drawn_dark = 0
    canal_drawn = False
    while col < width - 4:
        if sparse and slot >= 2:
            break  # one narrow band pair only, the rest stays background
        if slot % 2 == 0:
            band_w = 3 if sparse else int(rng.integers(5, 9))
            label = dark_cycle[drawn_dark % len(dark_cycle)]
            drawn_dark += 1
        elif slot == 3 and not canal_drawn:
            band_w = int(rng.integers(3, 6))
            label = CANAL_LABEL
            canal_drawn = True
        elif with_light:
            band_w = 2 if sparse else int(rng.integers(3, 6))
            label = light_cycle[int(rng.integers(0, len(light_cycle)))]
        else:
            slot += 1
            col += int(rng.integers(2, 4))  # wider gap instead of a disc
            continue
        end = min(col + band_w, width)
        if end == width - 1:
            end = width  # a lone trailing background column gets absorbed
        labels[:, col:end] = label
        col = end + int(rng.integers(2, 4))
        slot += 1
    return labels


def _inject_defects(rng: np.random.Generator, labels: np.ndarray) -> None:
    # defect sites never overlap, and runs only land where the five
    # columns around them agree; a run any closer to a band edge donates
    # three votes to the edge pixels beside it, ties them toward
    # background, and the resulting notch eats the edge one pixel a round
    height, width = labels.shape
    dirty = np.zeros((height, width), dtype=bool)
    # singleton pixels of a foreign nonzero shade; background singletons
    # near a band edge count double in the edge tally (one band vote
    # gone, one background vote added) and tie it into a blinker, and
    # border rows stay clean because corners hold a majority of one
    for _ in range(int(rng.integers(3, 9))):
        for _ in range(40):
            r = int(rng.integers(2, height - 2))
            c = int(rng.integers(0, width))
            if dirty[max(0, r - 1):r + 2, max(0, c - 1):c + 2].any():
                continue
            foreign = int(rng.integers(1, 16))
            if foreign == labels[r, c]:
                foreign = (foreign % 15) + 1
            labels[r, c] = foreign
            dirty[max(0, r - 1):r + 2, max(0, c - 1):c + 2] = True
            break
    # short vertical runs whose left and right neighbors disagree with them
    for _ in range(int(rng.integers(1, 4))):
        run = int(rng.integers(3, 7))
        for _ in range(40):
            r = int(rng.integers(0, max(1, height - run)))
            c = int(rng.integers(2, width - 2))
            r0, r1 = max(0, r - 1), min(height, r + run + 1)
            window = labels[r0:r1, c - 2:c + 3]
            if dirty[r0:r1, c - 2:c + 3].any() or (window != window.flat[0]).any():
                continue
            foreign = int(rng.integers(1, 16))
            if foreign == labels[r, c]:
                foreign = (foreign % 15) + 1
            labels[r:r + run, c] = foreign
            dirty[r0:r1, c - 2:c + 3] = True
            break
    # a full-height recolor of one structured column; interior columns
    # heal back, edge columns flip to background in a single round
    for _ in range(int(rng.integers(1, 3))):
        for _ in range(40):
            c = int(rng.integers(1, width - 1))
            if labels[:, c].max() == 0 or dirty[:, max(0, c - 1):c + 2].any():
                continue
            labels[:, c] = (int(labels[height // 2, c]) % 15) + 1
            dirty[:, max(0, c - 1):c + 2] = True
            break


def make_defective_labels(seed_or_rng, height: int = 40, width: int = 48,
                          with_dark: bool = True, with_light: bool = True,
                          sparse: bool = False, defects: bool = True,
                          orientation: str = "vertical") -> np.ndarray:
    """One synthetic exporter output in label form, values 0..15."""
    rng = np.random.default_rng(seed_or_rng) if isinstance(seed_or_rng, int) \
        else seed_or_rng
    if orientation not in ("vertical", "horizontal"):
        raise ValueError(f"unknown orientation {orientation!r}")
    span = (height, width) if orientation == "vertical" else (width, height)
    labels = _draw_bands(rng, *span, with_light, sparse)
    if not with_dark:
        # degenerate export without any vertebra shade: remap dark bands
        # to light ones so the red-presence rule has to fire downstream
        for lbl in DARK_LABELS:
            labels[labels == lbl] = LIGHT_LABELS[lbl % len(LIGHT_LABELS)]
    if defects:
        _inject_defects(rng, labels)
    if orientation == "horizontal":
        labels = np.ascontiguousarray(labels.T)
    return labels


def make_defective_mask(seed_or_rng, height: int = 40, width: int = 48,
                        **kwargs) -> np.ndarray:
    """A defective RGB mask straight from the synthetic exporter."""
    return palette_to_rgb(make_defective_labels(seed_or_rng, height, width, **kwargs))


def defective_mask_set(seed: int, count: int, height: int = 40,
                       width: int = 48) -> list[np.ndarray]:
    """A mixed batch of defective masks: mostly full layouts, a few
    sparse ones and a few with no dark shade at all."""
    rng = np.random.default_rng(seed)
    masks = []
    for index in range(count):
        kwargs = {}
        if index % 10 == 7:
            kwargs["with_dark"] = False
        elif index % 10 == 8:
            kwargs["sparse"] = True
        elif index % 10 == 9:
            kwargs["with_light"] = False
        elif index % 3 == 0:
            kwargs["orientation"] = "horizontal"
        masks.append(make_defective_mask(rng, height, width, **kwargs))
    return masks


def make_case_volumes(seed: int, slices: int = 4, height: int = 40,
                      width: int = 48) -> tuple[Volume, Volume]:
    """An (image, mask) volume pair for one synthetic case.

    Slices vary on purpose: most carry all four classes, one is sparse
    (background dominated) and one misses the disc shade, so the
    filtration stage has real work on every case.
    """
    rng = np.random.default_rng(seed)
    mask_slices = []
    for index in range(slices):
        kwargs = {}
        if slices > 2 and index == slices - 1:
            kwargs["sparse"] = True
        elif slices > 3 and index == slices - 2:
            kwargs["with_light"] = False
        mask_slices.append(make_defective_labels(rng, height, width, **kwargs))
    mask_vox = np.stack(mask_slices).astype(np.uint8)
    # image: smooth gradient, brighter over foreground, plus noise
    rows = np.linspace(200.0, 800.0, height)[None, :, None]
    image = np.broadcast_to(rows, (slices, height, width)).copy()
    image += (mask_vox > 0) * 600.0
    image += rng.normal(0.0, 40.0, size=image.shape)
    image_vox = np.clip(image, -1000, 3000).astype(np.int16)
    spacing = (0.5, 0.5, 3.3)
    return (
        make_volume(image_vox, "MET_SHORT", spacing),
        make_volume(mask_vox, "MET_UCHAR", spacing),
    )


def make_random_volume(seed_or_rng, element_type: str) -> Volume:
    """Random voxels of one element type, for round-trip checks."""
    rng = np.random.default_rng(seed_or_rng) if isinstance(seed_or_rng, int) \
        else seed_or_rng
    dims = tuple(int(d) for d in rng.integers(2, 6, size=3))  # (nz, ny, nx)
    if element_type == "MET_UCHAR":
        vox = rng.integers(0, 256, size=dims).astype(np.uint8)
    elif element_type == "MET_SHORT":
        vox = rng.integers(-1000, 3000, size=dims).astype(np.int16)
    elif element_type == "MET_USHORT":
        vox = rng.integers(0, 4000, size=dims).astype(np.uint16)
    elif element_type == "MET_FLOAT":
        vox = rng.standard_normal(size=dims).astype(np.float32)
    else:
        raise ValueError(f"unknown element type {element_type!r}")
    spacing = tuple(round(float(s), 3) for s in rng.uniform(0.3, 4.0, size=3))
    return make_volume(vox, element_type, spacing)
