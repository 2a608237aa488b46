"""The 17-class label taxonomy and compact label-set arithmetic.

This module is the single source of truth for label names, their frozen
index order, and the anatomy/pathology split. Every file format in the
toolkit (manifest label lists, prediction score columns, report keys) uses
the canonical names in this index order.

A label set is represented as a plain ``int`` bit mask: bit ``i`` set means
the frame carries the label with index ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import UnknownLabel

ANATOMY = "anatomy"
PATHOLOGY = "pathology"


@dataclass(frozen=True)
class LabelId:
    index: int
    canonical_name: str
    category: str

    @property
    def bit(self) -> int:
        return 1 << self.index


_ANATOMY_NAMES = (
    "mouth",
    "esophagus",
    "stomach",
    "small_intestine",
    "colon",
    "z_line",
    "pylorus",
    "ileocecal_valve",
)
_PATHOLOGY_NAMES = (
    "active_bleeding",
    "angiectasia",
    "blood",
    "erosion",
    "erythema",
    "hematin",
    "lymphangioectasis",
    "polyp",
    "ulcer",
)

LABELS: tuple[LabelId, ...] = tuple(
    LabelId(i, name, ANATOMY if i < len(_ANATOMY_NAMES) else PATHOLOGY)
    for i, name in enumerate(_ANATOMY_NAMES + _PATHOLOGY_NAMES)
)
NUM_LABELS = len(LABELS)
LABEL_NAMES: tuple[str, ...] = tuple(label.canonical_name for label in LABELS)
FULL_MASK = (1 << NUM_LABELS) - 1

_BY_NAME = {label.canonical_name: label for label in LABELS}

# Alias for readability in signatures: a 17-bit mask stored in an int.
LabelSet = int


def normalize_token(name: str) -> str:
    """Lowercase, trim, and map spaces/hyphens to underscores."""
    return name.strip().lower().replace("-", "_").replace(" ", "_")


def parse_label(name: str) -> LabelId:
    """Resolve a text token to a LabelId; no fuzzy matching."""
    label = _BY_NAME.get(normalize_token(name))
    if label is None:
        raise UnknownLabel(name)
    return label


def labelset_from_names(names: list[str]) -> LabelSet:
    """Bitwise union of the parsed labels; duplicates collapse."""
    mask = 0
    for name in names:
        mask |= parse_label(name).bit
    return mask


def labelset_to_names(mask: LabelSet) -> list[str]:
    """Canonical names of the set bits, in frozen index order."""
    return [label.canonical_name for label in LABELS if mask & label.bit]


def cardinality(mask: LabelSet) -> int:
    """Population count of the mask."""
    return (mask & FULL_MASK).bit_count()


def labels_in(mask: LabelSet) -> list[int]:
    """Indices of the set bits, ascending."""
    return [i for i in range(NUM_LABELS) if mask >> i & 1]
