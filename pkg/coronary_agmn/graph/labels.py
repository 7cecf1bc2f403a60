from __future__ import annotations

import re
from dataclasses import dataclass
from enum import StrEnum
from typing import Optional

from coronary_agmn.core.errors import LabelingError


class BaseClass(StrEnum):
    LMA = "LMA"
    LAD = "LAD"
    LCX = "LCX"
    D = "D"
    OM = "OM"


BASE_CLASSES: tuple[BaseClass, ...] = tuple(BaseClass)
UNASSIGNED = "UNASSIGNED"

_LABEL_PATTERN = re.compile(r"^(LMA|LAD|LCX|D|OM)(\d+)?$")


@dataclass(frozen=True, order=True)
class ArteryLabel:
    """Semantic label of one arterial segment, e.g. LAD2 -> (LAD, 2)."""

    base_class: BaseClass
    sub_index: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "base_class", BaseClass(self.base_class))
        if self.sub_index is not None and self.sub_index < 1:
            raise LabelingError(f"sub_index must be positive, got {self.sub_index}")

    def __str__(self) -> str:
        return f"{self.base_class.value}{self.sub_index or ''}"

    @classmethod
    def parse(cls, text: str) -> ArteryLabel:
        match = _LABEL_PATTERN.match(text.strip())
        if match is None:
            raise LabelingError(f"Unknown artery label '{text}'")
        return cls(BaseClass(match.group(1)), int(match.group(2)) if match.group(2) else None)


def group_subclasses(label: ArteryLabel) -> BaseClass:
    return label.base_class


def group_label_text(text: str) -> str:
    """Grouping on the string form; UNASSIGNED passes through."""
    if text == UNASSIGNED:
        return text
    return group_subclasses(ArteryLabel.parse(text)).value
