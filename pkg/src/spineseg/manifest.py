"""Manifest persistence: one JSON record per line, fixed key order.

The first line is a header record carrying the pipeline stage; every
following line is one slice entry.  Writing the same state twice yields
byte-identical files, which is what makes pipeline reruns checkable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import UnsupportedValueError
from .filtration import ClassStats, ManifestEntry
from .volume_io import SliceSpec

FORMAT_NAME = "spineseg-manifest"
FORMAT_VERSION = 1

STAGE_EXTRACT = "extract"
STAGE_RESTORE = "restore"
STAGE_FILTER = "filter"

STAGE_ORDER = (STAGE_EXTRACT, STAGE_RESTORE, STAGE_FILTER)


@dataclass
class Manifest:
    stage: str = STAGE_EXTRACT
    entries: list[ManifestEntry] = field(default_factory=list)

    def stage_index(self) -> int:
        return STAGE_ORDER.index(self.stage)


def _spec_to_dict(spec: SliceSpec) -> dict:
    return {
        "axis": spec.axis,
        "rotate_quarter_turns": spec.rotate_quarter_turns,
        "flip_horizontal": spec.flip_horizontal,
        "flip_vertical": spec.flip_vertical,
    }


def _spec_from_dict(d: dict) -> SliceSpec:
    return SliceSpec(
        axis=d["axis"],
        rotate_quarter_turns=d["rotate_quarter_turns"],
        flip_horizontal=d["flip_horizontal"],
        flip_vertical=d["flip_vertical"],
    )


def entry_to_dict(entry: ManifestEntry) -> dict:
    return {
        "image_ref": entry.image_ref,
        "mask_ref": entry.mask_ref,
        "series": entry.series,
        "slice_index": entry.slice_index,
        "slice_spec": _spec_to_dict(entry.slice_spec),
        "restored_ref": entry.restored_ref,
        "counts": None if entry.stats is None else list(entry.stats.counts),
        "weights": None if entry.weights is None else list(entry.weights),
        "verdict": entry.verdict,
        "converged": entry.converged,
        "split": entry.split,
        "error": entry.error,
    }


def entry_from_dict(d: dict) -> ManifestEntry:
    counts = d.get("counts")
    weights = d.get("weights")
    return ManifestEntry(
        image_ref=d["image_ref"],
        mask_ref=d["mask_ref"],
        series=d["series"],
        slice_index=d["slice_index"],
        slice_spec=_spec_from_dict(d["slice_spec"]),
        restored_ref=d.get("restored_ref", ""),
        stats=None if counts is None else ClassStats(counts=tuple(counts)),
        weights=None if weights is None else tuple(weights),
        verdict=d.get("verdict", "kept"),
        converged=d.get("converged"),
        split=d.get("split", ""),
        error=d.get("error", ""),
    )


def dumps_manifest(manifest: Manifest) -> str:
    if manifest.stage not in STAGE_ORDER:
        raise UnsupportedValueError(f"unknown stage {manifest.stage!r}")
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "stage": manifest.stage,
        "entry_count": len(manifest.entries),
    }
    lines = [json.dumps(header)]
    lines.extend(json.dumps(entry_to_dict(e)) for e in manifest.entries)
    return "\n".join(lines) + "\n"


def loads_manifest(text: str) -> Manifest:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise UnsupportedValueError("empty manifest")
    header = json.loads(lines[0])
    if header.get("format") != FORMAT_NAME:
        raise UnsupportedValueError("not a manifest file")
    if header.get("version") != FORMAT_VERSION:
        raise UnsupportedValueError(f"unsupported manifest version {header.get('version')}")
    entries = [entry_from_dict(json.loads(ln)) for ln in lines[1:]]
    if header.get("entry_count") != len(entries):
        raise UnsupportedValueError(
            f"manifest header promises {header.get('entry_count')} entries, found {len(entries)}"
        )
    return Manifest(stage=header["stage"], entries=entries)


def write_manifest(path, manifest: Manifest) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dumps_manifest(manifest))


def read_manifest(path) -> Manifest:
    with open(path, "r", encoding="ascii") as fh:
        return loads_manifest(fh.read())
