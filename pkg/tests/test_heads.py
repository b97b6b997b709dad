"""Head indexing, semantics table, and bitmask helpers."""

import pytest

from spoofbench import ConfigError, HEAD_SEMANTICS, MASK_ALL, MASK_OVERALL
from spoofbench.heads import (
    IMPERCEPTIBLE_HEAD,
    N_HEADS,
    OVERALL_HEAD,
    VISIBLE_CUE_HEADS,
    active_heads,
    head_active,
    mask_of,
)


def test_semantics_table_has_exactly_eight_entries():
    assert len(HEAD_SEMANTICS) == N_HEADS == 8
    assert set(HEAD_SEMANTICS) == set(range(1, 9))


def test_visible_cue_set_is_one_through_six():
    assert VISIBLE_CUE_HEADS == (1, 2, 3, 4, 5, 6)
    assert IMPERCEPTIBLE_HEAD == 7
    assert OVERALL_HEAD == 8
    for h in VISIBLE_CUE_HEADS:
        assert HEAD_SEMANTICS[h] not in (HEAD_SEMANTICS[7], HEAD_SEMANTICS[8])


def test_semantic_names():
    assert HEAD_SEMANTICS[1] == "fingers-holding-device"
    assert HEAD_SEMANTICS[2] == "visible-device-border"
    assert HEAD_SEMANTICS[3] == "mobile-ui"
    assert HEAD_SEMANTICS[4] == "moire-patterns"
    assert HEAD_SEMANTICS[5] == "screen-glare"
    assert HEAD_SEMANTICS[6] == "screen-reflections"
    assert HEAD_SEMANTICS[7] == "imperceptible-attack"
    assert HEAD_SEMANTICS[8] == "overall-fraud"


def test_mask_bit_positions():
    assert MASK_ALL == 0xFF
    assert MASK_OVERALL == 0x80
    assert mask_of(8) == MASK_OVERALL
    assert mask_of(*range(1, 9)) == MASK_ALL
    assert mask_of(1) == 0x01
    assert mask_of(1, 3) == 0b101


def test_head_active_matches_bit_j_minus_1():
    for j in range(1, 9):
        assert head_active(1 << (j - 1), j)
        assert not head_active(MASK_ALL ^ (1 << (j - 1)), j)


def test_active_heads_ascending():
    assert active_heads(MASK_ALL) == tuple(range(1, 9))
    assert active_heads(MASK_OVERALL) == (8,)
    assert active_heads(mask_of(5, 2, 7)) == (2, 5, 7)
    assert active_heads(0) == ()


def test_out_of_range_heads_rejected():
    for bad in (0, 9, -1):
        with pytest.raises(ConfigError):
            mask_of(bad)
        with pytest.raises(ConfigError):
            head_active(MASK_ALL, bad)
