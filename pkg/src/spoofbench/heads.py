"""Classifier head indexing: semantics table and bitmask helpers.

Heads are numbered 1..8.  Heads 1-6 flag visible spoof cues, head 7 flags
attacks with no visible cue, head 8 is the overall fraud probability used
for scoring.  Bit ``j-1`` of a mask corresponds to head ``j``.
"""

from __future__ import annotations

from .errors import ConfigError

N_HEADS = 8

HEAD_SEMANTICS: dict[int, str] = {
    1: "fingers-holding-device",
    2: "visible-device-border",
    3: "mobile-ui",
    4: "moire-patterns",
    5: "screen-glare",
    6: "screen-reflections",
    7: "imperceptible-attack",
    8: "overall-fraud",
}

VISIBLE_CUE_HEADS = (1, 2, 3, 4, 5, 6)
IMPERCEPTIBLE_HEAD = 7
OVERALL_HEAD = 8

MASK_ALL = (1 << N_HEADS) - 1  # V2: all eight heads
MASK_OVERALL = 1 << (OVERALL_HEAD - 1)  # V1: head 8 only


def mask_of(*heads: int) -> int:
    """Bitmask with the given 1-based head indices set."""
    m = 0
    for h in heads:
        if not 1 <= h <= N_HEADS:
            raise ConfigError(f"head index {h} outside 1..{N_HEADS}")
        m |= 1 << (h - 1)
    return m


def head_active(mask: int, head: int) -> bool:
    if not 1 <= head <= N_HEADS:
        raise ConfigError(f"head index {head} outside 1..{N_HEADS}")
    return bool(mask >> (head - 1) & 1)


def active_heads(mask: int) -> tuple[int, ...]:
    """1-based indices of set bits, ascending."""
    if not 0 <= mask <= MASK_ALL:
        raise ConfigError(f"head mask {mask:#x} outside 8-bit range")
    return tuple(h for h in range(1, N_HEADS + 1) if mask >> (h - 1) & 1)
