"""Command implementations behind the CLI.

Every command works against a workspace directory whose manifest is the
single source of truth: extract creates it, restore enriches it, filter
assigns verdicts, evaluate and report read it.  Commands refuse to run
out of order and never overwrite verdict history unless forced.

All outputs are deterministic: rerunning a command over the same inputs
writes byte-identical files.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path, PurePosixPath

import json

import numpy as np

from . import filtration, losses, metrics
from .config import as_bool, as_float, as_int, as_int_pair, env_overrides, load_config
from .errors import SpinesegError
from .filtration import ManifestEntry, class_census, class_weights
from .manifest import (
    Manifest,
    STAGE_EXTRACT,
    STAGE_FILTER,
    STAGE_RESTORE,
    read_manifest,
    write_manifest,
)
from .metrics import MetricConfig, evaluate_pair
from .phantoms import EXPORT_PALETTE
from .restore import PaletteRules, apta
from .volume_io import (
    SliceSpec,
    decode_label_raster,
    encode_label_raster,
    extract_slices,
    load_volume,
    read_raster,
    write_raster,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_PARITY = 3

CLASS_NAMES = ("background", "vertebrae", "canal", "disc")

DEFAULTS = {
    "extract.axis": "sagittal_default",
    "extract.rotate_quarter_turns": "0",
    "extract.flip_horizontal": "false",
    "extract.flip_vertical": "false",
    "restore.connectivity": "eight",
    "restore.max_rounds": "16",
    "restore.dark_range": "1 84",
    "restore.mid_range": "85 169",
    "restore.light_range": "170 255",
    "filter.threshold": "0.55",
    "filter.imbalance_mode": "dominant_fraction",
    "metrics.tau": "1.0",
    "metrics.include_background": "true",
    "loss.preset": "default",
    "loss.gamma": "",
    "loss.alpha_mix": "",
    "loss.seed": "7",
    "loss.count": "6",
    "run.workers": "1",
}


class CommandError(Exception):
    """A command failure with its process exit code."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def resolve_settings(config_path=None, flag_values=None) -> "Settings":
    """Merge defaults, config file, environment and flags (flags win)."""
    merged = dict(DEFAULTS)
    if config_path is not None:
        try:
            merged.update(load_config(config_path))
        except OSError as exc:
            raise CommandError(EXIT_IO, f"cannot read config: {exc}") from exc
        except SpinesegError as exc:
            raise CommandError(EXIT_VALIDATION, f"bad config: {exc}") from exc
    merged.update(env_overrides(DEFAULTS.keys()))
    for key, value in (flag_values or {}).items():
        if value is not None:
            merged[key] = str(value)
    return Settings(values=merged)


@dataclass
class Settings:
    values: dict

    def _get(self, key: str) -> str:
        return self.values.get(key, DEFAULTS.get(key, ""))

    def slice_spec(self, stem: str | None = None) -> SliceSpec:
        def pick(field: str) -> str:
            if stem is not None:
                override = self.values.get(f"extract.override.{stem}.{field}")
                if override is not None:
                    return override
            return self._get(f"extract.{field}")

        return SliceSpec(
            axis=pick("axis"),
            rotate_quarter_turns=as_int(pick("rotate_quarter_turns"),
                                        "extract.rotate_quarter_turns"),
            flip_horizontal=as_bool(pick("flip_horizontal"), "extract.flip_horizontal"),
            flip_vertical=as_bool(pick("flip_vertical"), "extract.flip_vertical"),
        )

    def palette_rules(self) -> PaletteRules:
        return PaletteRules(
            dark_range=as_int_pair(self._get("restore.dark_range"), "restore.dark_range"),
            mid_range=as_int_pair(self._get("restore.mid_range"), "restore.mid_range"),
            light_range=as_int_pair(self._get("restore.light_range"), "restore.light_range"),
        )

    def connectivity(self) -> str:
        return self._get("restore.connectivity")

    def max_rounds(self) -> int:
        return as_int(self._get("restore.max_rounds"), "restore.max_rounds")

    def threshold(self) -> float:
        return as_float(self._get("filter.threshold"), "filter.threshold")

    def imbalance_mode(self) -> str:
        return self._get("filter.imbalance_mode")

    def metric_config(self) -> MetricConfig:
        return MetricConfig(
            tau=as_float(self._get("metrics.tau"), "metrics.tau"),
            include_background=as_bool(self._get("metrics.include_background"),
                                       "metrics.include_background"),
        )

    def loss_params(self) -> losses.LossParams:
        preset = self._get("loss.preset")
        if preset not in losses.PRESETS:
            raise CommandError(EXIT_VALIDATION, f"unknown loss preset {preset!r}")
        params = losses.PRESETS[preset]
        gamma = self._get("loss.gamma")
        alpha_mix = self._get("loss.alpha_mix")
        if gamma:
            params = dataclasses.replace(params, gamma=as_float(gamma, "loss.gamma"))
        if alpha_mix:
            params = dataclasses.replace(params,
                                         alpha_mix=as_float(alpha_mix, "loss.alpha_mix"))
        return params

    def loss_seed(self) -> int:
        return as_int(self._get("loss.seed"), "loss.seed")

    def loss_count(self) -> int:
        return as_int(self._get("loss.count"), "loss.count")

    def workers(self) -> int:
        n = as_int(self._get("run.workers"), "run.workers")
        if n < 1:
            raise CommandError(EXIT_VALIDATION, f"run.workers must be >= 1, got {n}")
        return n


@dataclass
class Workspace:
    root: Path
    manifest_override: Path | None = None

    @property
    def manifest_path(self) -> Path:
        if self.manifest_override is not None:
            return self.manifest_override
        return self.root / "manifest.jsonl"

    @property
    def image_dir(self) -> Path:
        return self.root / "slices" / "images"

    @property
    def mask_dir(self) -> Path:
        return self.root / "slices" / "masks"

    @property
    def restored_dir(self) -> Path:
        return self.root / "restored"

    @property
    def report_dir(self) -> Path:
        return self.root / "reports"

    def rel(self, path: Path) -> str:
        return str(PurePosixPath(path.relative_to(self.root)))

    def resolve(self, ref: str) -> Path:
        return self.root / Path(PurePosixPath(ref))


def series_from_name(stem: str) -> str | None:
    s = stem.lower()
    if s.endswith("t2_space"):
        return "T2_SPACE"
    if s.endswith("t1"):
        return "T1"
    if s.endswith("t2"):
        return "T2"
    return None


def _read_manifest_or_fail(ws: Workspace) -> Manifest:
    if not ws.manifest_path.exists():
        raise CommandError(EXIT_IO, f"no manifest at {ws.manifest_path}")
    try:
        return read_manifest(ws.manifest_path)
    except (OSError, SpinesegError) as exc:
        raise CommandError(EXIT_IO, f"cannot read manifest: {exc}") from exc


def _parallel(worker, items, workers: int):
    """Run worker over items keeping result order stable."""
    if workers <= 1:
        return [worker(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, items))


def cmd_extract(input_dir, ws: Workspace, settings: Settings,
                force: bool = False) -> int:
    """Slice every volume pair under input_dir into the workspace."""
    input_dir = Path(input_dir)
    image_src = input_dir / "images"
    mask_src = input_dir / "masks"
    if not mask_src.is_dir() or not image_src.is_dir():
        raise CommandError(EXIT_IO,
                           f"expected {input_dir}/images and {input_dir}/masks directories")
    mask_files = sorted(mask_src.glob("*.mha"))
    if not mask_files:
        raise CommandError(EXIT_IO, f"no volumes under {mask_src}")
    if ws.manifest_path.exists() and not force:
        raise CommandError(EXIT_VALIDATION,
                           f"manifest already exists at {ws.manifest_path}; use --force to redo")
    for d in (ws.image_dir, ws.mask_dir):
        d.mkdir(parents=True, exist_ok=True)

    palette = np.asarray(EXPORT_PALETTE, dtype=np.uint8)
    entries: list[ManifestEntry] = []
    for mask_file in mask_files:
        stem = mask_file.stem
        spec = settings.slice_spec(stem)
        series = series_from_name(stem)

        def flagged(message: str) -> ManifestEntry:
            return ManifestEntry(
                image_ref="", mask_ref=str(mask_file.name), series=series or "UNKNOWN",
                slice_index=-1, slice_spec=spec, error=message,
            )

        if series is None:
            entries.append(flagged("cannot infer series from file name"))
            continue
        image_file = image_src / mask_file.name
        if not image_file.exists():
            entries.append(flagged("missing matching image volume"))
            continue
        try:
            mask_vol = load_volume(mask_file)
            image_vol = load_volume(image_file)
            mask_slices = extract_slices(mask_vol, spec, mode="mask")
            image_slices = extract_slices(image_vol, spec, mode="image")
        except SpinesegError as exc:
            entries.append(flagged(f"{type(exc).__name__}: {exc}"))
            continue
        if len(mask_slices) != len(image_slices) or any(
            m.shape != i.shape for m, i in zip(mask_slices, image_slices)
        ):
            entries.append(flagged("image and mask volumes disagree in geometry"))
            continue
        if max(int(s.max()) for s in mask_slices) >= len(palette):
            entries.append(flagged("mask label outside the export palette"))
            continue
        for index, (img, msk) in enumerate(zip(image_slices, mask_slices)):
            image_path = ws.image_dir / f"{stem}_s{index:03d}.png"
            mask_path = ws.mask_dir / f"{stem}_s{index:03d}.png"
            write_raster(image_path, img)
            write_raster(mask_path, palette[msk.astype(np.int64)])
            entries.append(ManifestEntry(
                image_ref=ws.rel(image_path),
                mask_ref=ws.rel(mask_path),
                series=series,
                slice_index=index,
                slice_spec=spec,
            ))
    write_manifest(ws.manifest_path, Manifest(stage=STAGE_EXTRACT, entries=entries))
    return EXIT_OK


def cmd_restore(ws: Workspace, settings: Settings, force: bool = False) -> int:
    """Repair every defective mask slice and census the result."""
    man = _read_manifest_or_fail(ws)
    if man.stage == STAGE_FILTER:
        if any(e.verdict != filtration.KEPT for e in man.entries) and not force:
            raise CommandError(EXIT_VALIDATION,
                               "manifest already carries verdicts; rerunning restore would"
                               " invalidate them, use --force to reset")
        man.entries = filtration.reset_verdicts(man.entries)
    rules = settings.palette_rules()
    nb = settings.connectivity()
    max_rounds = settings.max_rounds()
    ws.restored_dir.mkdir(parents=True, exist_ok=True)

    def work(entry: ManifestEntry) -> ManifestEntry:
        entry = dataclasses.replace(entry)
        if entry.error:
            return entry
        mask_path = ws.resolve(entry.mask_ref)
        try:
            rgb = read_raster(mask_path)
            if rgb.ndim != 3:
                raise SpinesegError("mask slice is not RGB")
            result = apta(rgb, rules=rules, nb=nb, max_rounds=max_rounds)
        except OSError as exc:
            entry.error = f"cannot read mask slice: {exc}"
            return entry
        except SpinesegError as exc:
            entry.error = f"{type(exc).__name__}: {exc}"
            return entry
        restored_path = ws.restored_dir / Path(entry.mask_ref).name
        write_raster(restored_path, encode_label_raster(result.labels))
        entry.restored_ref = ws.rel(restored_path)
        entry.converged = result.converged
        entry.stats = class_census(result.labels)
        entry.weights = class_weights(entry.stats)
        return entry

    man.entries = _parallel(work, man.entries, settings.workers())
    man.stage = STAGE_RESTORE
    write_manifest(ws.manifest_path, man)
    return EXIT_OK


def cmd_filter(ws: Workspace, settings: Settings, force: bool = False) -> int:
    """Assign keep/drop verdicts and write the filtration summary."""
    man = _read_manifest_or_fail(ws)
    if man.stage == STAGE_EXTRACT:
        raise CommandError(EXIT_VALIDATION, "masks are not restored yet; run restore first")
    threshold = settings.threshold()
    mode = settings.imbalance_mode()
    entries = man.entries
    if force:
        entries = filtration.reset_verdicts(entries)
    new_entries = filtration.filter_imbalanced(
        filtration.filter_redundant(entries), threshold=threshold, mode=mode)
    if man.stage == STAGE_FILTER and not force:
        changed = [
            (old.mask_ref, old.verdict, new.verdict)
            for old, new in zip(man.entries, new_entries)
            if old.verdict != new.verdict
        ]
        if changed:
            ref, old_v, new_v = changed[0]
            raise CommandError(EXIT_VALIDATION,
                               f"verdict history would change ({ref}: {old_v} -> {new_v}"
                               f" and {len(changed) - 1} more); use --force")
    man.entries = new_entries
    man.stage = STAGE_FILTER
    summary = filtration.summarize(new_entries, mode=mode)
    ws.report_dir.mkdir(parents=True, exist_ok=True)
    (ws.report_dir / "filter_summary.txt").write_text(render_summary(summary, threshold),
                                                      encoding="ascii")
    write_manifest(ws.manifest_path, man)
    return EXIT_OK


def _fmt(value, width: int = 10, digits: int = 6) -> str:
    if value is None:
        return "-".rjust(width)
    return f"{value:.{digits}f}".rjust(width)


def render_summary(summary: filtration.DatasetSummary, threshold: float) -> str:
    lines = [
        f"dataset filtration summary (mode: {summary.mode}, threshold: {threshold})",
        "",
        "series      total   kept  drop_redundant  drop_imbalanced  failed"
        "  max_ratio_initial  max_ratio_kept  reduction",
    ]

    def row(name: str, s: filtration.SeriesSummary) -> str:
        return (f"{name:<10}{s.total:>7}{s.kept:>7}{s.dropped_redundant:>16}"
                f"{s.dropped_imbalanced:>17}{s.failed:>8}"
                f"{_fmt(s.max_ratio_initial, 19)}{_fmt(s.max_ratio_kept, 16)}"
                f"{_fmt(s.ratio_reduction, 11)}")

    for name in sorted(summary.per_series):
        lines.append(row(name, summary.per_series[name]))
    lines.append(row("overall", summary.overall))
    return "\n".join(lines) + "\n"


def cmd_evaluate(ws: Workspace, pred_dir, settings: Settings,
                 force: bool = False) -> int:
    """Score prediction masks against the restored ground truth."""
    man = _read_manifest_or_fail(ws)
    if man.stage != STAGE_FILTER and not force:
        raise CommandError(EXIT_VALIDATION,
                           "dataset is not filtered yet; run filter first or pass --force")
    pred_dir = Path(pred_dir)
    if not pred_dir.is_dir():
        raise CommandError(EXIT_IO, f"prediction directory {pred_dir} not found")
    cfg = settings.metric_config()
    todo = [e for e in man.entries
            if e.verdict == filtration.KEPT and not e.error and e.restored_ref]
    if not todo:
        raise CommandError(EXIT_VALIDATION, "no kept entries to evaluate")

    def work(entry: ManifestEntry):
        pred_path = pred_dir / Path(entry.restored_ref).name
        if not pred_path.exists():
            raise CommandError(EXIT_IO, f"missing prediction {pred_path}")
        try:
            pred = decode_label_raster(read_raster(pred_path))
            gt = decode_label_raster(read_raster(ws.resolve(entry.restored_ref)))
        except (OSError, SpinesegError) as exc:
            raise CommandError(EXIT_IO, f"cannot read pair for {entry.restored_ref}: {exc}")
        return entry, evaluate_pair(pred, gt, cfg)

    results = _parallel(work, todo, settings.workers())
    ws.report_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for entry, report in results:
        for cls in report.classes:
            records.append({
                "restored_ref": entry.restored_ref,
                "series": entry.series,
                "class_index": cls.class_index,
                "class_name": CLASS_NAMES[cls.class_index],
                "iou": cls.iou,
                "dice": cls.dice,
                "asd": cls.asd,
                "nsd": cls.nsd,
                "precision": cls.precision,
                "recall": cls.recall,
                "f1": cls.f1,
            })
        records.append({
            "restored_ref": entry.restored_ref,
            "series": entry.series,
            "mean_iou": report.mean_iou,
            "mean_dice": report.mean_dice,
        })
    with open(ws.report_dir / "evaluation.jsonl", "w", encoding="ascii") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    table = render_evaluation_table(results)
    (ws.report_dir / "evaluation_table.txt").write_text(table, encoding="ascii")
    return EXIT_OK


def render_evaluation_table(results) -> str:
    """Per-series aggregate metric table.

    Cells are unweighted means of per-pair values; pairs where a surface
    metric is undefined are left out of that cell's mean and tallied in
    the trailing column.
    """
    by_series: dict[str, list] = {}
    for entry, report in results:
        by_series.setdefault(entry.series, []).append(report)
    lines = [
        "series      class             iou      dice       asd       nsd"
        "  precision    recall        f1  undefined",
    ]
    for series in sorted(by_series):
        reports = by_series[series]
        for c in range(metrics.NUM_CLASSES):
            cells = {}
            undefined = 0
            for column in metrics.METRIC_COLUMNS:
                vals = [getattr(r.classes[c], column) for r in reports]
                defined = [v for v in vals if v is not None]
                undefined += len(vals) - len(defined)
                cells[column] = float(np.mean(defined)) if defined else None
            lines.append(
                f"{series:<12}{CLASS_NAMES[c]:<12}"
                + "".join(_fmt(cells[col], 10, 4) for col in metrics.METRIC_COLUMNS)
                + f"{undefined:>11}"
            )
        miou = float(np.mean([r.mean_iou for r in reports]))
        mdice = float(np.mean([r.mean_dice for r in reports]))
        lines.append(f"{series:<12}pairs={len(reports)}  mean_iou={miou:.4f}"
                     f"  mean_dice={mdice:.4f}")
    return "\n".join(lines) + "\n"


def cmd_losscheck(settings: Settings, input_path=None, output_path=None) -> int:
    """Export or verify loss test vectors; bare runs self-check the kernel."""
    did_something = False
    if output_path is not None:
        records = losses.export_test_vectors(output_path, settings.loss_seed(),
                                             settings.loss_count(),
                                             settings.loss_params())
        print(f"wrote {len(records)} vectors to {output_path}")
        did_something = True
    if input_path is not None:
        if not Path(input_path).exists():
            raise CommandError(EXIT_IO, f"no vector file at {input_path}")
        problems = losses.verify_test_vectors(input_path)
        if problems:
            for p in problems:
                print(p)
            raise CommandError(EXIT_PARITY,
                               f"{len(problems)} vector values failed to reproduce")
        print(f"all vectors in {input_path} reproduce within 1e-12")
        did_something = True
    if not did_something:
        for line in _self_check(settings.loss_params()):
            print(line)
    return EXIT_OK


def _self_check(params: losses.LossParams) -> list[str]:
    """Derived identities of the loss kernel, recomputed on the spot."""
    out = []
    single = np.full((1, 1, 4), 0.5 / 3.0)
    single[0, 0, 1] = 0.5
    truth = losses.one_hot(np.array([[1]]))
    got = losses.focal_loss(single, truth, losses.LossParams(alpha_class=(0.6,) * 4))
    want = 0.6 * 0.5 ** 4 * -np.log(0.5)
    _self_assert(out, "focal closed form", abs(got - want) < 1e-12)

    rng = np.random.default_rng(11)
    raw = rng.uniform(0.1, 1.1, size=(4, 4, 4))
    pred = raw / raw.sum(axis=2, keepdims=True)
    true = losses.one_hot(rng.integers(0, 4, size=(4, 4)))
    ce = float(-(true * np.log(np.maximum(pred, params.prob_floor))).sum() / 16)
    flat = losses.focal_loss(pred, true, dataclasses.replace(params, gamma=0.0,
                                                             alpha_class=(1.0,) * 4))
    _self_assert(out, "gamma=0 reduces to cross entropy", abs(flat - ce) < 1e-12)

    focal = losses.focal_loss(pred, true, params)
    dice = losses.dice_loss(pred, true, params)
    for mix in (0.0, 0.25, 0.6, 1.0):
        p2 = dataclasses.replace(params, alpha_mix=mix)
        combined = losses.combined_loss(pred, true, p2)
        if abs(combined - (mix * focal + (1 - mix) * dice)) > 1e-12:
            _self_assert(out, f"linearity at alpha_mix={mix}", False)
            break
    else:
        _self_assert(out, "combined is linear in alpha_mix", True)

    analytic = losses.combined_grad(pred, true, params)
    oracle = losses.finite_diff_grad("combined", pred, true, params)
    denom = np.maximum(np.abs(oracle), 1e-8)
    rel = float((np.abs(analytic - oracle) / denom).max())
    _self_assert(out, f"gradient agreement (max rel err {rel:.2e})", rel < 1e-5)
    return out


def _self_assert(out: list[str], label: str, ok: bool) -> None:
    out.append(f"{'PASS' if ok else 'FAIL'}  {label}")
    if not ok:
        raise CommandError(EXIT_PARITY, f"loss self-check failed: {label}")


def cmd_report(ws: Workspace) -> int:
    """Collect manifest state and existing report files into one page."""
    man = _read_manifest_or_fail(ws)
    lines = [
        "pipeline report",
        "",
        f"stage: {man.stage}",
        f"entries: {len(man.entries)}",
    ]
    verdicts: dict[str, int] = {}
    failed = 0
    unconverged = 0
    for e in man.entries:
        if e.error:
            failed += 1
            continue
        verdicts[e.verdict] = verdicts.get(e.verdict, 0) + 1
        if e.converged is False:
            unconverged += 1
    for name in sorted(verdicts):
        lines.append(f"  {name}: {verdicts[name]}")
    lines.append(f"  failed: {failed}")
    lines.append(f"  not converged: {unconverged}")
    for part in ("filter_summary.txt", "evaluation_table.txt"):
        path = ws.report_dir / part
        if path.exists():
            lines.extend(["", f"--- {part} ---", path.read_text(encoding="ascii").rstrip()])
    text = "\n".join(lines) + "\n"
    ws.report_dir.mkdir(parents=True, exist_ok=True)
    (ws.report_dir / "report.txt").write_text(text, encoding="ascii")
    print(text, end="")
    return EXIT_OK
