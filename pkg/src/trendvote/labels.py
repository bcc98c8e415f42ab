from __future__ import annotations

from enum import Enum


class TrendLabel(str, Enum):
    """Day-level price movement."""

    UP = "Up"
    DOWN = "Down"

    def __str__(self) -> str:
        return self.value


class ItemLabel(str, Enum):
    """Per-news classification; IRRELEVANT marks noise that abstains from the vote."""

    UP = "Up"
    DOWN = "Down"
    IRRELEVANT = "Irrelevant"

    def __str__(self) -> str:
        return self.value


TWO_CLASS: tuple[ItemLabel, ...] = (ItemLabel.UP, ItemLabel.DOWN)
THREE_CLASS: tuple[ItemLabel, ...] = (ItemLabel.UP, ItemLabel.DOWN, ItemLabel.IRRELEVANT)


def to_item(label: TrendLabel | ItemLabel | str) -> ItemLabel:
    return ItemLabel(str(label))


def to_trend(label: TrendLabel | ItemLabel | str) -> TrendLabel:
    value = str(label)
    if value == ItemLabel.IRRELEVANT.value:
        raise ValueError("Irrelevant has no day-level trend")
    return TrendLabel(value)


def canonical_label_set(labels) -> tuple[ItemLabel, ...]:
    """Order a label collection as Up, Down, Irrelevant."""
    present = {to_item(label) for label in labels}
    return tuple(label for label in THREE_CLASS if label in present)
