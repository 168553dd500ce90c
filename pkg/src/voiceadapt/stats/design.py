"""Model formulas and design matrices for the gamma mixed models."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from ..types import STUDY_COLUMNS, InteractionTuple, tuples_to_columns

FIXED_PREDICTORS = ("volume", "pitch", "emphasis", "speed", "ar", "t30_s", "distance_cm",
                    "english_cefr", "hearing_difficulty")
RESPONSE_COLUMNS = {"sp": "phonetic_similarity", "ux": "ux"}
DEFAULT_OFFSETS = {"sp": 0.0001, "ux": 0.0}


@dataclass(frozen=True)
class ModelFormula:
    response: str = "sp"
    fixed_terms: tuple = FIXED_PREDICTORS
    interactions: tuple = (("volume", "t30_s"),)
    random_intercepts: tuple = ("subject_id", "word_id")
    link: str = "log"
    response_offset: float | None = None  # None -> 0.0001 for SP, 0 for UX
    intercept: bool = True

    def __post_init__(self):
        if self.response not in RESPONSE_COLUMNS:
            raise ValidationError(f"response must be one of {sorted(RESPONSE_COLUMNS)}")
        if self.link not in ("log", "inverse"):
            raise ValidationError("link must be 'log' or 'inverse'")
        if self.offset < 0:
            raise ValidationError("response_offset must be >= 0")
        object.__setattr__(self, "fixed_terms", tuple(self.fixed_terms))
        object.__setattr__(self, "interactions", tuple(tuple(p) for p in self.interactions))
        object.__setattr__(self, "random_intercepts", tuple(self.random_intercepts))

    @property
    def offset(self) -> float:
        return DEFAULT_OFFSETS[self.response] if self.response_offset is None else float(self.response_offset)

    @property
    def response_column(self) -> str:
        return RESPONSE_COLUMNS[self.response]


@dataclass
class DesignMatrix:
    X: np.ndarray
    names: list
    n_fixed: int
    groups: list = field(default_factory=list)  # (column, slice, levels)

    @property
    def fixed_names(self):
        return self.names[:self.n_fixed]


def as_columns(data) -> dict:
    """Accept a list of InteractionTuple or a mapping of column arrays."""
    if isinstance(data, dict):
        return data
    data = list(data)
    if data and isinstance(data[0], InteractionTuple):
        return tuples_to_columns(data)
    if not data:
        return {name: np.array([]) for name in STUDY_COLUMNS}
    raise ValidationError("expected InteractionTuples or a column mapping")


def interaction_name(pair) -> str:
    return f"{pair[0]}:{pair[1]}"


def build_design_matrix(data, formula: ModelFormula | None = None) -> DesignMatrix:
    """Intercept, fixed predictors, interaction products, then one indicator
    column per level of each grouping factor (levels in sorted order)."""
    formula = formula or ModelFormula()
    cols = as_columns(data)
    needed = set(formula.fixed_terms) | {c for p in formula.interactions for c in p} | set(formula.random_intercepts)
    missing = sorted(needed - set(cols))
    if missing:
        raise ValidationError(f"missing columns: {missing}")
    n = len(next(iter(cols.values()))) if cols else 0
    blocks, names = [], []
    if formula.intercept:
        blocks.append(np.ones(n))
        names.append("(intercept)")
    for term in formula.fixed_terms:
        v = np.asarray(cols[term], dtype=np.float64)
        if n > 0 and np.ptp(v) == 0:
            raise ValidationError(f"column {term} is constant (zero variance)")
        blocks.append(v)
        names.append(term)
    for pair in formula.interactions:
        v = np.asarray(cols[pair[0]], dtype=np.float64) * np.asarray(cols[pair[1]], dtype=np.float64)
        if n > 0 and np.ptp(v) == 0:
            raise ValidationError(f"interaction {interaction_name(pair)} is constant (zero variance)")
        blocks.append(v)
        names.append(interaction_name(pair))
    n_fixed = len(names)
    X = np.column_stack(blocks) if blocks else np.zeros((n, 0))
    groups = []
    for g in formula.random_intercepts:
        labels = np.asarray([str(v) for v in cols[g]], dtype=object)
        levels = sorted(set(labels.tolist()))
        pos = {lv: k for k, lv in enumerate(levels)}
        Z = np.zeros((n, len(levels)))
        Z[np.arange(n), [pos[lv] for lv in labels]] = 1.0
        start = X.shape[1]
        X = np.hstack([X, Z])
        names += [f"{g}[{lv}]" for lv in levels]
        groups.append((g, slice(start, start + len(levels)), levels))
    return DesignMatrix(X, names, n_fixed, groups)


def response_vector(data, formula: ModelFormula) -> np.ndarray:
    cols = as_columns(data)
    if formula.response_column not in cols:
        raise ValidationError(f"missing response column {formula.response_column}")
    return np.asarray(cols[formula.response_column], dtype=np.float64) + formula.offset
