"""Census, weighting, two-step filtration, manifests and configuration."""

import numpy as np
import pytest

import oracles
from spineseg import config, filtration, manifest
from spineseg.errors import (
    EmptyMaskError,
    UnsupportedValueError,
    ZeroWeightError,
)
from spineseg.filtration import (
    ClassStats,
    DOMINANT_FRACTION,
    DROPPED_IMBALANCED,
    DROPPED_REDUNDANT,
    KEPT,
    ManifestEntry,
    MAX_OVER_MIN,
    class_census,
    class_weights,
    filter_imbalanced,
    filter_redundant,
    imbalance_ratio,
    reset_verdicts,
    summarize,
)
from spineseg.volume_io import SliceSpec


def entry(series="T1", counts=None, verdict=KEPT, error="", index=0):
    stats = None if counts is None else ClassStats(counts=tuple(counts))
    weights = None if stats is None else class_weights(stats)
    return ManifestEntry(
        image_ref=f"slices/images/x_{index:03d}.png",
        mask_ref=f"slices/masks/x_{index:03d}.png",
        series=series,
        slice_index=index,
        stats=stats,
        weights=weights,
        verdict=verdict,
        error=error,
    )


# -------------------------------------------------------------- census


def test_census_matches_loop_oracle():
    rng = np.random.default_rng(801)
    for _ in range(20):
        labels = rng.integers(0, 4, size=(int(rng.integers(1, 9)),
                                          int(rng.integers(1, 9))))
        stats = class_census(labels)
        assert stats.counts == oracles.census(labels)
        assert stats.total == labels.size


def test_census_validation():
    with pytest.raises(UnsupportedValueError):
        class_census(np.zeros(4, dtype=np.int64))
    with pytest.raises(UnsupportedValueError):
        class_census(np.zeros((2, 2)))
    with pytest.raises(UnsupportedValueError):
        class_census(np.full((2, 2), 4))


def test_present_classes():
    assert ClassStats((5, 0, 1, 0)).present_classes == frozenset({0, 2})


def test_class_weights():
    w = class_weights(ClassStats((10, 5, 5, 0)))
    assert w == (0.5, 0.25, 0.25, 0.0)
    with pytest.raises(EmptyMaskError):
        class_weights(ClassStats((0, 0, 0, 0)))


def test_imbalance_ratio_modes():
    w = (0.5, 0.25, 0.15, 0.1)
    assert imbalance_ratio(w) == 0.5
    assert imbalance_ratio(w, MAX_OVER_MIN) == pytest.approx(5.0)
    with pytest.raises(ZeroWeightError):
        imbalance_ratio((0.5, 0.5, 0.0, 0.0), MAX_OVER_MIN)
    with pytest.raises(UnsupportedValueError):
        imbalance_ratio(w, "entropy")


# ---------------------------------------------------------- filtration


def test_redundant_step_drops_missing_classes():
    entries = [
        entry(counts=(10, 10, 10, 10)),
        entry(counts=(30, 10, 0, 0)),
        entry(counts=None),  # no census yet: left alone
    ]
    out = filter_redundant(entries)
    assert [e.verdict for e in out] == [KEPT, DROPPED_REDUNDANT, KEPT]
    assert [e.verdict for e in entries] == [KEPT, KEPT, KEPT]  # inputs untouched


def test_imbalance_step_threshold_is_strict():
    on_line = entry(counts=(55, 15, 15, 15))       # dominant exactly 0.55
    above = entry(counts=(56, 15, 15, 14))         # strictly above
    below = entry(counts=(40, 20, 20, 20))
    out = filter_imbalanced([on_line, above, below], threshold=0.55)
    assert [e.verdict for e in out] == [KEPT, DROPPED_IMBALANCED, KEPT]


def test_imbalance_step_skips_already_dropped():
    dropped = entry(counts=(99, 1, 0, 0), verdict=DROPPED_REDUNDANT)
    out = filter_imbalanced([dropped], threshold=0.1)
    assert out[0].verdict == DROPPED_REDUNDANT


def test_full_filtration_is_idempotent():
    rng = np.random.default_rng(802)
    entries = []
    for i in range(30):
        counts = tuple(int(n) for n in rng.integers(0, 50, size=4))
        if sum(counts) == 0:
            counts = (1, 1, 1, 1)
        entries.append(entry(series="T2", counts=counts, index=i))
    once = filter_imbalanced(filter_redundant(entries))
    twice = filter_imbalanced(filter_redundant(once))
    assert [e.verdict for e in once] == [e.verdict for e in twice]


def test_reset_verdicts():
    entries = [entry(counts=(99, 1, 0, 0), verdict=DROPPED_REDUNDANT)]
    assert reset_verdicts(entries)[0].verdict == KEPT


def test_max_over_min_mode_drops_differently():
    skewed = entry(counts=(40, 40, 15, 5))   # dominant 0.4, max/min 8
    out = filter_imbalanced([skewed], threshold=0.55)
    assert out[0].verdict == KEPT
    out = filter_imbalanced([skewed], threshold=6.0, mode=MAX_OVER_MIN)
    assert out[0].verdict == DROPPED_IMBALANCED


# ----------------------------------------------------------- summaries


def test_summary_conserves_counts_per_series():
    entries = [
        entry("T1", (10, 10, 10, 10)),
        entry("T1", (70, 10, 10, 10), verdict=DROPPED_IMBALANCED),
        entry("T1", (30, 10, 0, 0), verdict=DROPPED_REDUNDANT),
        entry("T1", None, error="unreadable"),
        entry("T2", (25, 25, 25, 25)),
    ]
    summary = summarize(entries)
    t1 = summary.per_series["T1"]
    assert (t1.total, t1.kept, t1.dropped_redundant,
            t1.dropped_imbalanced, t1.failed) == (4, 1, 1, 1, 1)
    assert t1.kept + t1.dropped_redundant + t1.dropped_imbalanced + t1.failed \
        == t1.total
    assert summary.per_series["T2"].total == 1
    overall = summary.overall
    assert overall.total == 5 and overall.failed == 1


def test_summary_ratio_extremes():
    entries = [
        entry("T1", (25, 25, 25, 25)),                      # ratio 0.25, kept
        entry("T1", (40, 20, 20, 20)),                      # ratio 0.40, kept
        entry("T1", (70, 10, 10, 10), verdict=DROPPED_IMBALANCED),  # 0.70
    ]
    s = summarize(entries).per_series["T1"]
    assert s.max_ratio_initial == pytest.approx(0.70)
    assert s.max_ratio_kept == pytest.approx(0.40)
    assert s.ratio_reduction == pytest.approx(0.30)


def test_summary_with_zero_weight_under_max_over_min():
    # the ratio is undefined for this entry; tallies still count it
    entries = [entry("T1", (50, 50, 0, 0), verdict=DROPPED_REDUNDANT)]
    s = summarize(entries, mode=MAX_OVER_MIN).per_series["T1"]
    assert s.total == 1 and s.dropped_redundant == 1
    assert s.max_ratio_initial is None
    assert s.ratio_reduction is None


def test_summary_rejects_unknown_verdicts():
    broken = entry("T1", (1, 1, 1, 1))
    broken.verdict = "quarantined"
    with pytest.raises(UnsupportedValueError):
        summarize([broken])


def test_error_entries_count_as_failed_even_with_verdict():
    # an error entry never reaches the verdict tallies
    bad = entry("T1", (99, 1, 0, 0), verdict="quarantined", error="boom")
    s = summarize([bad]).per_series["T1"]
    assert s.failed == 1 and s.kept == 0


# ----------------------------------------------------------- manifests


def manifest_fixture():
    entries = [
        entry("T1", (10, 10, 10, 10), index=0),
        entry("T2", (30, 10, 0, 0), verdict=DROPPED_REDUNDANT, index=1),
        entry("T2_SPACE", None, error="unreadable", index=2),
    ]
    entries[0].converged = True
    entries[0].restored_ref = "restored/x_000.png"
    return manifest.Manifest(stage=manifest.STAGE_RESTORE, entries=entries)


def test_manifest_text_round_trip():
    man = manifest_fixture()
    text = manifest.dumps_manifest(man)
    back = manifest.loads_manifest(text)
    assert back.stage == man.stage
    assert len(back.entries) == 3
    assert back.entries[0].stats == man.entries[0].stats
    assert back.entries[0].weights == man.entries[0].weights
    assert back.entries[0].converged is True
    assert back.entries[1].verdict == DROPPED_REDUNDANT
    assert back.entries[2].error == "unreadable"
    assert back.entries[2].stats is None
    # serialization is canonical: a second dump is byte-identical
    assert manifest.dumps_manifest(back) == text


def test_manifest_header_fields():
    text = manifest.dumps_manifest(manifest_fixture())
    import json

    header = json.loads(text.splitlines()[0])
    assert header == {
        "format": "spineseg-manifest",
        "version": 1,
        "stage": "restore",
        "entry_count": 3,
    }


def test_manifest_rejects_bad_headers():
    good = manifest.dumps_manifest(manifest_fixture())
    with pytest.raises(UnsupportedValueError):
        manifest.loads_manifest("")
    with pytest.raises(UnsupportedValueError):
        manifest.loads_manifest(good.replace("spineseg-manifest", "tarball"))
    with pytest.raises(UnsupportedValueError):
        manifest.loads_manifest(good.replace('"version": 1', '"version": 9'))
    lines = good.splitlines()
    with pytest.raises(UnsupportedValueError):
        manifest.loads_manifest("\n".join(lines[:-1]) + "\n")  # entry_count lies
    bad_stage = manifest.Manifest(stage="verify", entries=[])
    with pytest.raises(UnsupportedValueError):
        manifest.dumps_manifest(bad_stage)


def test_manifest_file_round_trip(tmp_path):
    path = tmp_path / "manifest.jsonl"
    man = manifest_fixture()
    manifest.write_manifest(path, man)
    again = tmp_path / "again.jsonl"
    manifest.write_manifest(again, manifest.read_manifest(path))
    assert path.read_bytes() == again.read_bytes()


def test_stage_order():
    assert manifest.STAGE_ORDER == ("extract", "restore", "filter")
    assert manifest.Manifest(stage="filter", entries=[]).stage_index() == 2


def test_slice_spec_survives_round_trip():
    e = entry("T1", (1, 1, 1, 1))
    e.slice_spec = SliceSpec(axis="axial_override", rotate_quarter_turns=3,
                             flip_horizontal=True)
    man = manifest.Manifest(stage=manifest.STAGE_EXTRACT, entries=[e])
    back = manifest.loads_manifest(manifest.dumps_manifest(man))
    assert back.entries[0].slice_spec == e.slice_spec


# -------------------------------------------------------- configuration


def test_config_parsing():
    text = """
# run knobs
filter.threshold = 0.6
restore.connectivity = four   # trailing comment

extract.axis=axial_override
"""
    values = config.parse_config_text(text)
    assert values == {
        "filter.threshold": "0.6",
        "restore.connectivity": "four",
        "extract.axis": "axial_override",
    }


def test_config_rejects_malformed_lines():
    with pytest.raises(UnsupportedValueError):
        config.parse_config_text("threshold 0.6\n")
    with pytest.raises(UnsupportedValueError):
        config.parse_config_text("= 0.6\n")


def test_env_overrides():
    environ = {
        "SPINESEG_FILTER_THRESHOLD": "0.7",
        "SPINESEG_RUN_WORKERS": "4",
        "FILTER_THRESHOLD": "0.1",  # missing prefix: ignored
    }
    got = config.env_overrides(["filter.threshold", "run.workers",
                                "metrics.tau"], environ)
    assert got == {"filter.threshold": "0.7", "run.workers": "4"}


def test_typed_getters():
    assert config.as_int("12", "k") == 12
    assert config.as_float("0.5", "k") == 0.5
    assert config.as_bool("true", "k") is True
    assert config.as_bool("no", "k") is False
    assert config.as_int_pair("3 9", "k") == (3, 9)
    for call in (
        lambda: config.as_int("twelve", "k"),
        lambda: config.as_float("half", "k"),
        lambda: config.as_bool("maybe", "k"),
        lambda: config.as_int_pair("3", "k"),
    ):
        with pytest.raises(UnsupportedValueError):
            call()


def test_config_file_loading(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("metrics.tau = 2.0\n")
    assert config.load_config(path) == {"metrics.tau": "2.0"}
