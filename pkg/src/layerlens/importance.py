"""Layer-importance scores and layer-subset selection.

The importance of layer i is the dissimilarity between its input and output
representations,

    I_i = 1 - CKA(R_{i-1}, R_i),

so a layer that barely moves the representation scores near 0 and a layer
that rewrites it scores near 1. Selection takes the top-N layers by that
score, with two exclusions borrowed from how the score degenerates: layer 1
of an encoder-only model (its input R_0 is the raw embedding of a shared
CLS token, constant across samples) and any layer whose CKA was flagged
degenerate. A degenerate score of 1 is an artifact of centering, not
evidence of contribution.

Five data-independent heuristics (First, Last, Middle, Extremes, Alternate)
are provided as baselines; they depend only on M and N.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import ValidationError
from .similarity import RepresentationMatrix, TokenRule, cka


class Architecture(enum.Enum):
    """Transformer family; decides the token-selection rule and exclusions."""

    ENCODER_ONLY = "encoder_only"
    DECODER_ONLY = "decoder_only"

    @property
    def token_rule(self) -> TokenRule:
        if self is Architecture.ENCODER_ONLY:
            return TokenRule.CLS
        return TokenRule.LAST_TOKEN


class Strategy(enum.Enum):
    """How a layer subset was chosen."""

    CKA_IMPORTANCE = "cka"
    FIRST = "first"
    LAST = "last"
    MIDDLE = "middle"
    EXTREMES = "extremes"
    ALTERNATE = "alternate"


HEURISTIC_STRATEGIES = (
    Strategy.FIRST,
    Strategy.LAST,
    Strategy.MIDDLE,
    Strategy.EXTREMES,
    Strategy.ALTERNATE,
)


@dataclass(frozen=True)
class RepresentationSet:
    """Ordered layer-boundary representations R_0..R_M for one model run.

    Entry 0 is the embedding output; entry i is the output of layer i. All
    entries share the sample count and the architecture's token rule.
    """

    matrices: tuple
    architecture: Architecture
    model_id: str
    sample_count: int

    def __post_init__(self):
        mats = tuple(self.matrices)
        object.__setattr__(self, "matrices", mats)
        if len(mats) < 2:
            raise ValidationError("representation set needs R_0 and at least one layer")
        expected_rule = self.architecture.token_rule
        for i, m in enumerate(mats):
            if not isinstance(m, RepresentationMatrix):
                raise ValidationError(f"entry {i} is not a RepresentationMatrix")
            if m.layer_index != i:
                raise ValidationError(
                    f"entry {i} carries layer_index {m.layer_index}, expected {i}"
                )
            if m.sample_count != self.sample_count:
                raise ValidationError(
                    f"entry {i} has {m.sample_count} samples, set declares {self.sample_count}"
                )
            if m.token_rule is not expected_rule:
                raise ValidationError(
                    f"entry {i} token rule {m.token_rule.value} does not match "
                    f"{self.architecture.value}"
                )

    @property
    def layer_count(self) -> int:
        return len(self.matrices) - 1


@dataclass(frozen=True)
class ImportanceVector:
    """Scores I_1..I_M (``scores[i-1]`` belongs to layer i) plus degeneracy flags."""

    scores: tuple
    degenerate_layers: frozenset
    architecture: Architecture

    def __post_init__(self):
        scores = tuple(float(s) for s in self.scores)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "degenerate_layers", frozenset(self.degenerate_layers))
        if not scores:
            raise ValidationError("importance vector needs at least one layer")
        for i, s in enumerate(scores, start=1):
            if not 0.0 <= s <= 1.0:
                raise ValidationError(f"importance score for layer {i} outside [0, 1]: {s}")
        bad = self.degenerate_layers - set(range(1, len(scores) + 1))
        if bad:
            raise ValidationError(f"degenerate layer indices out of range: {sorted(bad)}")

    @property
    def layer_count(self) -> int:
        return len(self.scores)

    def score_for(self, layer: int) -> float:
        if not 1 <= layer <= self.layer_count:
            raise ValidationError(f"layer {layer} out of range 1..{self.layer_count}")
        return self.scores[layer - 1]


@dataclass(frozen=True)
class SelectionPlan:
    """The subset of layers chosen to receive adapters.

    ``excluded_candidates`` records layers that were barred from candidacy
    (encoder first layer, degenerate layers); heuristic plans exclude
    nothing. ``n_total_layers`` is M, kept so the plan is self-describing.
    """

    selected: tuple
    strategy: Strategy
    n_layers: int
    excluded_candidates: frozenset
    model_id: str
    n_total_layers: int

    def __post_init__(self):
        sel = tuple(sorted(int(i) for i in self.selected))
        object.__setattr__(self, "selected", sel)
        object.__setattr__(
            self, "excluded_candidates", frozenset(int(i) for i in self.excluded_candidates)
        )
        m = self.n_total_layers
        if m < 1:
            raise ValidationError(f"n_total_layers must be >= 1, got {m}")
        if len(sel) != self.n_layers or self.n_layers < 1:
            raise ValidationError(
                f"plan declares N={self.n_layers} but selects {len(sel)} layers"
            )
        if len(set(sel)) != len(sel):
            raise ValidationError("selected layers contain duplicates")
        if any(not 1 <= i <= m for i in sel):
            raise ValidationError(f"selected layers {sel} not all in 1..{m}")
        if any(not 1 <= i <= m for i in self.excluded_candidates):
            raise ValidationError("excluded layers out of range")
        overlap = set(sel) & self.excluded_candidates
        if overlap:
            raise ValidationError(f"selected layers overlap exclusions: {sorted(overlap)}")
        if self.n_layers > m - len(self.excluded_candidates):
            raise ValidationError(
                f"N={self.n_layers} exceeds the {m - len(self.excluded_candidates)} "
                "eligible candidates"
            )


def layer_importance(reps: RepresentationSet) -> ImportanceVector:
    """Score each layer as 1 - CKA between its input and output representations.

    Layers whose CKA is degenerate get score 1 (1 - 0) and are recorded in
    ``degenerate_layers`` so selection can bar them from candidacy.
    """
    scores = []
    degenerate = set()
    for i in range(1, reps.layer_count + 1):
        result = cka(reps.matrices[i - 1], reps.matrices[i])
        scores.append(1.0 - result.value)
        if result.degenerate:
            degenerate.add(i)
    return ImportanceVector(tuple(scores), frozenset(degenerate), reps.architecture)


def per_layer_cka(reps: RepresentationSet) -> tuple:
    """CkaResult for each consecutive pair (R_{i-1}, R_i), i = 1..M."""
    return tuple(
        cka(reps.matrices[i - 1], reps.matrices[i])
        for i in range(1, reps.layer_count + 1)
    )


def select_by_importance(iv: ImportanceVector, n: int, model_id: str = "") -> SelectionPlan:
    """Pick the N candidates with the largest importance scores.

    Candidates are layers 1..M minus layer 1 for encoder-only models and
    minus all degenerate layers. Ties break toward the lower layer index.
    """
    if not isinstance(iv, ImportanceVector):
        raise ValidationError(
            f"select_by_importance expects ImportanceVector, got {type(iv).__name__}"
        )
    m = iv.layer_count
    excluded = set(iv.degenerate_layers)
    if iv.architecture is Architecture.ENCODER_ONLY:
        excluded.add(1)
    candidates = [i for i in range(1, m + 1) if i not in excluded]
    if not 1 <= n <= len(candidates):
        raise ValidationError(
            f"N={n} outside 1..{len(candidates)} eligible candidates "
            f"(M={m}, excluded {sorted(excluded)})"
        )
    ranked = sorted(candidates, key=lambda i: (-iv.scores[i - 1], i))
    return SelectionPlan(
        selected=tuple(sorted(ranked[:n])),
        strategy=Strategy.CKA_IMPORTANCE,
        n_layers=n,
        excluded_candidates=frozenset(excluded),
        model_id=model_id,
        n_total_layers=m,
    )


def select_by_heuristic(kind: Strategy, m: int, n: int, model_id: str = "") -> SelectionPlan:
    """Data-independent baseline subsets over layers 1..M.

    First: {1..N}. Last: {M-N+1..M}. Middle: N contiguous layers starting at
    floor((M-N)/2)+1. Extremes (N even): {1..N/2} and {M-N/2+1..M}.
    Alternate (N = floor(M/2)): every even index {2, 4, ...}.
    """
    if not isinstance(kind, Strategy):
        raise ValidationError(
            f"select_by_heuristic expects a Strategy first, got {type(kind).__name__}"
        )
    if kind is Strategy.CKA_IMPORTANCE:
        raise ValidationError("cka strategy requires importance scores, not a heuristic")
    if m < 1:
        raise ValidationError(f"M must be >= 1, got {m}")
    if not 1 <= n <= m:
        raise ValidationError(f"N={n} outside 1..{m}")
    if kind is Strategy.FIRST:
        selected = range(1, n + 1)
    elif kind is Strategy.LAST:
        selected = range(m - n + 1, m + 1)
    elif kind is Strategy.MIDDLE:
        start = (m - n) // 2 + 1
        selected = range(start, start + n)
    elif kind is Strategy.EXTREMES:
        if n % 2 != 0:
            raise ValidationError(f"extremes needs an even N, got {n}")
        half = n // 2
        selected = list(range(1, half + 1)) + list(range(m - half + 1, m + 1))
        if len(set(selected)) != n:
            raise ValidationError(f"extremes halves overlap for M={m}, N={n}")
    elif kind is Strategy.ALTERNATE:
        if n != m // 2:
            raise ValidationError(f"alternate needs N = floor(M/2) = {m // 2}, got {n}")
        selected = range(2, 2 * n + 1, 2)
    else:
        raise ValidationError(f"unknown heuristic: {kind!r}")
    return SelectionPlan(
        selected=tuple(selected),
        strategy=kind,
        n_layers=n,
        excluded_candidates=frozenset(),
        model_id=model_id,
        n_total_layers=m,
    )
