"""Repair rules, traced by hand on small masks, plus whole-pass properties."""

import numpy as np
import pytest

import oracles
from spineseg import phantoms, restore
from spineseg.errors import UncoveredIntensityError, UnsupportedValueError
from spineseg.restore import (
    BLACK,
    BLUE,
    CLASS_COLORS,
    FOUR,
    GREEN,
    PaletteRules,
    RED,
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


def rgb(rows):
    """Build a (h, w, 3) uint8 mask from a nested list of color tuples."""
    return np.array(rows, dtype=np.uint8)


def field(color, h, w):
    out = np.zeros((h, w, 3), dtype=np.uint8)
    out[:] = color
    return out


def random_canonical_mask(rng, h, w):
    lut = np.array(CLASS_COLORS, dtype=np.uint8)
    return lut[rng.integers(0, 4, size=(h, w))]


# ---------------------------------------------------------------- step 1


def test_ranges_bin_by_peak_channel():
    mask = rgb([[(10, 20, 5), (120, 120, 40), (200, 10, 10)]])
    out = replace_color_ranges(mask)
    # peak 20 is a dark shade, 120 mid, 200 light; hue never matters
    assert tuple(out[0, 0]) == RED
    assert tuple(out[0, 1]) == GREEN
    assert tuple(out[0, 2]) == BLUE


def test_ranges_leave_canonical_colors_alone():
    mask = rgb([[BLACK, RED, GREEN, BLUE]])
    out = replace_color_ranges(mask)
    # red peaks at 255, inside the light bin, yet must stay red
    assert np.array_equal(out, mask)


def test_ranges_cover_every_palette_entry():
    for label, color in enumerate(phantoms.EXPORT_PALETTE):
        mask = rgb([[color]])
        out = replace_color_ranges(mask)
        if label == 0:
            want = BLACK
        elif label in phantoms.DARK_LABELS:
            want = RED
        elif label == phantoms.CANAL_LABEL:
            want = GREEN
        else:
            want = BLUE
        assert tuple(out[0, 0]) == want, f"palette entry {label}"


def test_ranges_reject_uncovered_intensity():
    rules = PaletteRules(dark_range=(1, 50), mid_range=(85, 169),
                        light_range=(170, 255))
    mask = rgb([[(60, 10, 10)]])  # peak 60 falls in the 51..84 hole
    with pytest.raises(UncoveredIntensityError):
        replace_color_ranges(mask, rules)


def test_rules_validation():
    with pytest.raises(UnsupportedValueError):
        PaletteRules(dark_range=(0, 84)).validate()
    with pytest.raises(UnsupportedValueError):
        PaletteRules(dark_range=(90, 80)).validate()
    with pytest.raises(UnsupportedValueError):
        PaletteRules(dark_range=(1, 100), mid_range=(85, 169)).validate()
    PaletteRules().validate()


# ---------------------------------------------------------------- step 2


def test_propagate_is_a_fixed_point_everywhere():
    rng = np.random.default_rng(601)
    for _ in range(10):
        mask = random_canonical_mask(rng, int(rng.integers(1, 7)),
                                     int(rng.integers(1, 7)))
        assert np.array_equal(propagate_neighbor_colors(mask), mask)
    noise = rng.integers(0, 256, size=(5, 5, 3)).astype(np.uint8)
    assert np.array_equal(propagate_neighbor_colors(noise), noise)


# ---------------------------------------------------------------- step 3


def test_outline_filter_heals_isolated_pixel():
    mask = field(GREEN, 3, 3)
    mask[1, 1] = RED
    assert np.array_equal(remove_outlines(mask), field(GREEN, 3, 3))


def test_outline_filter_ties_follow_class_order():
    # center sees four red and four blue neighbors: red is earlier
    mask = rgb([
        [RED, RED, RED],
        [RED, BLACK, BLUE],
        [BLUE, BLUE, BLUE],
    ])
    assert tuple(remove_outlines(mask)[1, 1]) == RED
    # black outranks every other class in a tie
    mask = rgb([
        [BLACK, BLACK, BLACK],
        [BLACK, RED, GREEN],
        [GREEN, GREEN, GREEN],
    ])
    assert tuple(remove_outlines(mask)[1, 1]) == BLACK


def test_outline_filter_prefers_canonical_over_shades():
    shade = (40, 40, 10)
    mask = rgb([
        [GREEN, GREEN, GREEN],
        [GREEN, RED, shade],
        [shade, shade, shade],
    ])
    assert tuple(remove_outlines(mask)[1, 1]) == GREEN


def test_outline_filter_breaks_shade_ties_by_packed_value():
    low = (0, 20, 0)    # packs to 0x001400
    high = (10, 0, 0)   # packs to 0x0A0000
    mask = rgb([
        [high, high, high],
        [high, RED, low],
        [low, low, low],
    ])
    assert tuple(remove_outlines(mask)[1, 1]) == low


def test_outline_filter_keeps_lonely_pixel():
    mask = rgb([[RED]])
    assert np.array_equal(remove_outlines(mask), mask)


# ---------------------------------------------------------------- step 4


def test_border_fix_on_two_by_two_corner():
    # four-connectivity: the lone green corner disagrees with its only
    # horizontal neighbor, and red wins the resulting votes everywhere
    mask = rgb([[GREEN, RED], [RED, RED]])
    out = fix_disagreeing_borders(mask, nb=FOUR)
    assert np.array_equal(out, field(RED, 2, 2))


def test_border_fix_requires_full_horizontal_disagreement():
    mask = rgb([[RED, GREEN, GREEN, RED]])
    out = fix_disagreeing_borders(mask)
    # inner greens each keep one agreeing horizontal neighbor
    assert tuple(out[0, 1]) == GREEN and tuple(out[0, 2]) == GREEN
    # the row ends disagree with their single in-bounds neighbor
    assert tuple(out[0, 0]) == GREEN
    assert tuple(out[0, 3]) == GREEN


def test_border_fix_replaces_with_neighborhood_majority():
    mask = rgb([
        [BLUE, BLUE, BLUE],
        [RED, GREEN, RED],
        [BLUE, BLUE, BLUE],
    ])
    out = fix_disagreeing_borders(mask)
    # trigger: left and right are both red; replacement: blue, 6 votes to 2
    assert tuple(out[1, 1]) == BLUE


def test_border_fix_leaves_agreeing_rows_alone():
    mask = field(RED, 2, 4)
    assert np.array_equal(fix_disagreeing_borders(mask), mask)


# ---------------------------------------------------------------- step 5


def test_singleton_replacement():
    mask = field(GREEN, 3, 3)
    mask[1, 1] = BLUE
    assert np.array_equal(replace_singletons(mask), field(GREEN, 3, 3))


def test_pixel_with_one_ally_is_not_a_singleton():
    mask = rgb([
        [BLUE, BLUE, GREEN],
        [GREEN, GREEN, GREEN],
    ])
    out = replace_singletons(mask)
    assert tuple(out[0, 0]) == BLUE and tuple(out[0, 1]) == BLUE


def test_singleton_rule_keeps_lonely_pixel():
    mask = rgb([[BLUE]])
    assert np.array_equal(replace_singletons(mask), mask)


# ---------------------------------------------------------------- step 6


def test_red_presence_recolors_green_and_blue():
    mask = rgb([[BLACK, GREEN, BLUE, BLACK]])
    out = ensure_red_presence(mask)
    assert tuple(out[0, 1]) == RED and tuple(out[0, 2]) == RED
    assert tuple(out[0, 0]) == BLACK


def test_red_presence_is_noop_when_red_exists():
    mask = rgb([[RED, GREEN, BLUE]])
    assert np.array_equal(ensure_red_presence(mask), mask)


def test_red_presence_ignores_pure_background():
    mask = field(BLACK, 2, 2)
    assert np.array_equal(ensure_red_presence(mask), mask)


# ------------------------------------------------------------- labels


def test_label_round_trip():
    labels = np.array([[0, 1], [2, 3]], dtype=np.uint8)
    mask = labels_to_rgb(labels)
    assert tuple(mask[0, 1]) == RED and tuple(mask[1, 1]) == BLUE
    assert np.array_equal(rgb_to_labels(mask), labels)


def test_labels_reject_off_palette_colors():
    with pytest.raises(UnsupportedValueError) as err:
        rgb_to_labels(rgb([[RED, (3, 7, 9)]]))
    assert "(3, 7, 9)" in str(err.value)


def test_mask_validation():
    with pytest.raises(UnsupportedValueError):
        replace_singletons(np.zeros((2, 2), dtype=np.uint8))
    with pytest.raises(UnsupportedValueError):
        replace_singletons(np.zeros((2, 2, 3), dtype=np.float64))
    with pytest.raises(UnsupportedValueError):
        replace_singletons(np.zeros((0, 2, 3), dtype=np.uint8))
    with pytest.raises(UnsupportedValueError):
        remove_outlines(field(RED, 2, 2), nb="six")


# ---------------------------------------------------------------- apta


def test_apta_on_clean_mask_converges_first_round():
    labels = np.zeros((12, 12), dtype=np.uint8)
    labels[:, 3:6] = 1
    labels[:, 8:10] = 2
    result = apta(labels_to_rgb(labels))
    assert result.converged and result.rounds == 1
    assert np.array_equal(result.labels, labels)


def test_apta_heals_block_defect_in_two_rounds():
    # a 3x3 green block inside red: the first pass shaves it to a bar,
    # the next round absorbs the bar, one more confirms the fixed point
    mask = field(RED, 9, 9)
    mask[3:6, 3:6] = GREEN
    result = apta(mask)
    assert result.converged
    assert result.rounds == 2
    assert np.array_equal(result.labels, np.ones((9, 9), dtype=np.uint8))


def test_apta_flags_oscillation_instead_of_raising():
    # 1x3 alternation flips between its two phases forever
    mask = rgb([[RED, GREEN, RED]])
    result = apta(mask, max_rounds=8)
    assert not result.converged
    assert result.rounds == 8
    assert result.labels.shape == (1, 3)


def test_apta_round_budget_validation():
    with pytest.raises(UnsupportedValueError):
        apta(field(RED, 2, 2), max_rounds=0)


def test_apta_restores_missing_red_fixture():
    labels = np.zeros((16, 20), dtype=np.uint8)
    labels[:, 3:7] = phantoms.CANAL_LABEL       # becomes green
    labels[:, 10:14] = phantoms.LIGHT_LABELS[0]  # becomes blue
    result = apta(phantoms.palette_to_rgb(labels))
    assert result.converged
    out = result.labels
    assert set(np.unique(out)) <= {0, 1}
    assert (out == 1).sum() == (labels > 0).sum()  # every band turned red


def test_apta_postconditions_on_defective_set():
    masks = phantoms.defective_mask_set(seed=903, count=12, height=32, width=40)
    for index, mask in enumerate(masks):
        result = apta(mask)
        out = result.labels
        assert result.converged, f"mask {index} ran out of rounds"
        assert out.max() <= 3
        assert oracles.count_singletons(out) == 0, f"mask {index} kept a singleton"
        if ((out == 2) | (out == 3)).any():
            assert (out == 1).any(), f"mask {index} lost its red class"
        # a converged output must be a fixed point of a second pass
        again = apta(labels_to_rgb(out))
        assert again.rounds == 1 and np.array_equal(again.labels, out)


def test_apta_four_connectivity_also_converges():
    masks = phantoms.defective_mask_set(seed=904, count=4, height=28, width=36)
    for mask in masks:
        result = apta(mask, nb=FOUR)
        assert result.labels.max() <= 3
        if result.converged:
            assert oracles.count_singletons(result.labels,
                                            oracles.FOUR_OFFSETS) == 0
