"""Synthetic shape dataset and file interop with curation workspaces.

The trainer never imports the curation package.  It speaks three file
formats: manifest JSONL with a header line, grayscale label rasters at
levels 0/85/170/255, and 8-bit image rasters.  The synthetic generator
draws spine-like scenes so a small network can overfit quickly: a block
column (class 1), thin bars in the gaps (class 3) and a wavy vertical
band (class 2) on background (class 0), with intensities keyed to class.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

NUM_CLASSES = 4

LABEL_LEVELS = (0, 85, 170, 255)

MANIFEST_FORMAT = "spineseg-manifest"
MANIFEST_VERSION = 1

# per-class mean intensity of the synthetic image channel
_CLASS_INTENSITY = (0.08, 0.85, 0.45, 0.65)


def encode_mask(classes: np.ndarray) -> np.ndarray:
    """Class raster 0..3 to uint8 gray levels 0/85/170/255."""
    arr = np.asarray(classes)
    if arr.size and (arr.min() < 0 or arr.max() >= NUM_CLASSES):
        raise ValueError("class labels outside 0..3")
    return (arr * 85).astype(np.uint8)


def decode_mask(gray: np.ndarray) -> np.ndarray:
    """Uint8 gray raster back to class labels; unknown levels are an error."""
    arr = np.asarray(gray)
    known = np.isin(arr, LABEL_LEVELS)
    if not known.all():
        bad = sorted(set(arr[~known].ravel().tolist()))
        raise ValueError(f"unknown gray levels {bad}; expected {list(LABEL_LEVELS)}")
    return (arr // 85).astype(np.int64)


@dataclass
class TensorPairs:
    """In-memory dataset: images (n, 1, h, w) float32, masks (n, h, w) int64."""

    images: torch.Tensor
    masks: torch.Tensor

    def __len__(self) -> int:
        return self.images.shape[0]

    def subset(self, indices) -> "TensorPairs":
        idx = torch.as_tensor(list(indices), dtype=torch.long)
        return TensorPairs(self.images[idx], self.masks[idx])


def _draw_scene(rng: np.random.Generator, size: int) -> np.ndarray:
    mask = np.zeros((size, size), dtype=np.int64)
    scale = size / 64.0

    # block column: four stacked rectangles with gaps
    x1 = int((8 + rng.integers(0, 5)) * scale)
    x2 = x1 + int((12 + rng.integers(0, 5)) * scale)
    y = int(rng.integers(1, 4) * scale)
    gaps = []
    for _ in range(4):
        h = int((9 + rng.integers(0, 3)) * scale)
        mask[y:y + h, x1:x2] = 1
        gaps.append((y + h, int((4 + rng.integers(0, 2)) * scale)))
        y = y + h + gaps[-1][1]

    # thin bars inside the gaps, slightly wider than the blocks
    for gy, gh in gaps:
        if gy + gh >= size:
            break
        pad = max(1, gh // 4)
        end = max(gy + gh - pad, gy + pad + 1)
        mask[gy + pad:end,
             max(0, x1 - int(2 * scale)):min(size, x2 + int(2 * scale))] = 3

    # wavy vertical band to the right of the column
    cx = int((42 + rng.integers(0, 6)) * scale)
    width = int((5 + rng.integers(0, 3)) * scale)
    amp = rng.uniform(1.5, 4.0) * scale
    phase = rng.uniform(0.0, 2 * np.pi)
    rows = np.arange(size)
    centers = cx + amp * np.sin(2 * np.pi * rows / (32.0 * scale) + phase)
    for row, center in zip(rows, centers):
        lo = int(round(center - width / 2))
        hi = lo + width
        mask[row, max(0, lo):min(size, hi)] = 2
    return mask


def _render_image(rng: np.random.Generator, mask: np.ndarray) -> np.ndarray:
    levels = np.asarray(_CLASS_INTENSITY, dtype=np.float32)[mask]
    noise = rng.normal(0.0, 0.04, size=mask.shape).astype(np.float32)
    shift = np.float32(rng.uniform(-0.03, 0.03))
    return np.clip(levels + noise + shift, 0.0, 1.0)


def make_pair(seed: int, index: int, size: int = 64):
    """One deterministic (image, mask) pair; rng keyed on (seed, index)."""
    rng = np.random.default_rng((seed, index))
    mask = _draw_scene(rng, size)
    image = _render_image(rng, mask)
    return image, mask


def synthetic_dataset(seed: int, count: int = 32, size: int = 64) -> TensorPairs:
    """Seeded dataset where every mask contains all four classes."""
    images = np.zeros((count, 1, size, size), dtype=np.float32)
    masks = np.zeros((count, size, size), dtype=np.int64)
    for index in range(count):
        image, mask = make_pair(seed, index, size)
        images[index, 0] = image
        masks[index] = mask
    return TensorPairs(torch.from_numpy(images), torch.from_numpy(masks))


def _entry_dict(name: str, index: int, split: str, mask: np.ndarray) -> dict:
    counts = np.bincount(mask.ravel(), minlength=NUM_CLASSES)
    total = int(counts.sum())
    gray_ref = f"restored/{name}.png"
    return {
        "image_ref": f"slices/images/{name}.png",
        # the synthetic labels are born canonical, so the raw mask ref
        # points at the same grayscale file the restored ref does
        "mask_ref": gray_ref,
        "series": "SYN",
        "slice_index": index,
        "slice_spec": {
            "axis": "sagittal_default",
            "rotate_quarter_turns": 0,
            "flip_horizontal": False,
            "flip_vertical": False,
        },
        "restored_ref": gray_ref,
        "counts": [int(c) for c in counts],
        "weights": [float(c) / total for c in counts],
        "verdict": "kept",
        "converged": True,
        "split": split,
        "error": "",
    }


def write_workspace(root, seed: int, count: int = 32, size: int = 64,
                    val_count: int = 8) -> Path:
    """Write a synthetic dataset as a curation-style workspace.

    Lays out slices/images, restored grayscale masks and a filter-stage
    manifest whose last ``val_count`` entries carry the val split.
    """
    if not 0 < val_count < count:
        raise ValueError(f"val_count {val_count} must split {count} entries")
    root = Path(root)
    (root / "slices/images").mkdir(parents=True, exist_ok=True)
    (root / "restored").mkdir(parents=True, exist_ok=True)
    entries = []
    for index in range(count):
        image, mask = make_pair(seed, index, size)
        name = f"shape_s{index:03d}"
        split = "val" if index >= count - val_count else "train"
        Image.fromarray((image * 255).round().astype(np.uint8), mode="L").save(
            root / "slices/images" / f"{name}.png")
        Image.fromarray(encode_mask(mask), mode="L").save(
            root / "restored" / f"{name}.png")
        entries.append(_entry_dict(name, index, split, mask))
    header = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "stage": "filter",
        "entry_count": len(entries),
    }
    lines = [json.dumps(header)]
    lines.extend(json.dumps(e) for e in entries)
    (root / "manifest.jsonl").write_text("\n".join(lines) + "\n", encoding="ascii")
    return root


def read_manifest(path) -> tuple[str, list[dict]]:
    """Parse a manifest file; returns (stage, entries) after header checks."""
    lines = [ln for ln in Path(path).read_text(encoding="ascii").splitlines()
             if ln.strip()]
    if not lines:
        raise ValueError("empty manifest")
    header = json.loads(lines[0])
    if header.get("format") != MANIFEST_FORMAT:
        raise ValueError("not a manifest file")
    if header.get("version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {header.get('version')}")
    entries = [json.loads(ln) for ln in lines[1:]]
    if header.get("entry_count") != len(entries):
        raise ValueError("manifest header entry count disagrees with body")
    return header.get("stage", ""), entries


def kept_entries(entries: list[dict]) -> list[dict]:
    return [e for e in entries
            if e.get("verdict") == "kept" and not e.get("error")
            and e.get("restored_ref")]


def load_workspace(root, split: str | None = None) -> tuple[TensorPairs, list[dict]]:
    """Load kept entries of a workspace into tensors.

    ``split`` narrows to entries whose split field matches; None takes
    every kept entry regardless of split.
    """
    root = Path(root)
    _, entries = read_manifest(root / "manifest.jsonl")
    chosen = [e for e in kept_entries(entries)
              if split is None or e.get("split") == split]
    if not chosen:
        raise ValueError(f"no kept entries for split {split!r}")
    images, masks = [], []
    for entry in chosen:
        image = np.asarray(Image.open(root / entry["image_ref"]), dtype=np.float32)
        gray = np.asarray(Image.open(root / entry["restored_ref"]))
        images.append(image[None, :, :] / 255.0)
        masks.append(decode_mask(gray))
    pairs = TensorPairs(
        torch.from_numpy(np.stack(images)),
        torch.from_numpy(np.stack(masks)),
    )
    return pairs, chosen
