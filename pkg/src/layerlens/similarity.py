"""Linear-kernel CKA between representation matrices.

Similarity is computed from the empirical HSIC estimator

    HSIC(K, Q) = tr(K H Q H) / (p - 1)^2,    H = I_p - (1/p) 1 1^T

and normalized as

    CKA(X, Y) = HSIC(K, Q) / sqrt(HSIC(K, K) * HSIC(Q, Q))

where K and Q are the p x p Gram matrices of the two representations.
Everything runs in double precision: the (p - 1)^2 division and the trace
cancellation lose digits in single precision.

The trace is evaluated through the centered-Gram factorization
tr((HKH)(HQH)), which by idempotence of H equals tr(KHQH) but costs O(p^2)
after centering instead of chained p x p multiplications.

A representation that is constant across samples produces a Gram matrix
that centering annihilates, so the CKA normalizer vanishes. Such inputs
are reported with ``degenerate=True`` and a value of exactly 0 instead of
dividing by zero.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError

# Gram matrices are symmetrized at construction; larger asymmetry is rejected.
SYMMETRY_TOL = 1e-10
# Self-HSIC at or below this value, on a Frobenius-normalized Gram matrix,
# marks the representation degenerate.
DEGENERACY_EPS = 1e-12
# A Gram matrix with Frobenius norm at or below this cannot be normalized
# and is immediately degenerate.
NORM_FLOOR = 1e-300
# Round-off slack: values in (-CLAMP_BELOW, 0) or (1, 1 + CLAMP_ABOVE) are
# clamped into [0, 1]; anything farther out is an internal-consistency error.
CLAMP_BELOW = 1e-10
CLAMP_ABOVE = 1e-9


class TokenRule(enum.Enum):
    """Which token position a per-sample representation row was taken from."""

    CLS = "cls"
    LAST_TOKEN = "last_token"


class Kernel(enum.Enum):
    """Kernel used to build Gram matrices. Only the linear kernel is supported."""

    LINEAR = "linear"


def _as_finite_f64(data, what: str) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what} contains non-finite entries")
    return arr


def _expect(obj, cls, fn: str) -> None:
    # Raw ndarrays happen to expose .data, so without this the failure mode
    # is an AttributeError deep inside the math instead of a usable message.
    if not isinstance(obj, cls):
        raise ValidationError(
            f"{fn} expects {cls.__name__}, got {type(obj).__name__}"
        )


@dataclass(frozen=True)
class RepresentationMatrix:
    """p x d matrix of per-sample token representations at one layer boundary.

    Row j holds the representation of sample j, taken at the position named
    by ``token_rule``. ``layer_index`` 0 is the embedding output; index i is
    the output of transformer layer i.
    """

    data: np.ndarray
    layer_index: int
    token_rule: TokenRule

    def __post_init__(self):
        arr = _as_finite_f64(self.data, "representation matrix")
        if arr.ndim != 2:
            raise ValidationError(f"representation matrix must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 2:
            raise ValidationError(
                f"representation matrix needs at least 2 samples, got {arr.shape[0]}"
            )
        if self.layer_index < 0:
            raise ValidationError(f"layer_index must be >= 0, got {self.layer_index}")
        if not isinstance(self.token_rule, TokenRule):
            raise ValidationError(f"bad token rule: {self.token_rule!r}")
        object.__setattr__(self, "data", arr)

    @property
    def sample_count(self) -> int:
        return self.data.shape[0]

    @property
    def feature_count(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class GramMatrix:
    """Dense symmetric p x p matrix of pairwise kernel evaluations."""

    data: np.ndarray
    kernel: Kernel = Kernel.LINEAR

    def __post_init__(self):
        arr = _as_finite_f64(self.data, "Gram matrix")
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValidationError(f"Gram matrix must be square, got shape {arr.shape}")
        if arr.shape[0] < 2:
            raise ValidationError(f"Gram matrix needs p >= 2, got p={arr.shape[0]}")
        if np.max(np.abs(arr - arr.T)) > SYMMETRY_TOL:
            raise ValidationError("Gram matrix is not symmetric within 1e-10")
        object.__setattr__(self, "data", (arr + arr.T) / 2.0)

    @property
    def sample_count(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class CkaResult:
    """CKA value plus the three HSIC terms it was formed from.

    ``degenerate`` marks a vanishing normalizer; the value is then exactly 0.
    """

    value: float
    degenerate: bool
    hsic_xy: float
    hsic_xx: float
    hsic_yy: float

    def __post_init__(self):
        if self.degenerate:
            if self.value != 0.0:
                raise ValidationError("degenerate CKA must carry value 0")
        elif not 0.0 <= self.value <= 1.0 + CLAMP_ABOVE:
            raise ValidationError(f"CKA value {self.value} outside [0, 1]")


def linear_gram(x: RepresentationMatrix) -> GramMatrix:
    """Gram matrix of pairwise dot products between the rows of ``x``."""
    _expect(x, RepresentationMatrix, "linear_gram")
    return GramMatrix(x.data @ x.data.T, Kernel.LINEAR)


def _double_center(k: np.ndarray) -> np.ndarray:
    # H K H expanded: subtract row and column means, add back the grand mean.
    row = k.mean(axis=1, keepdims=True)
    col = k.mean(axis=0, keepdims=True)
    return k - row - col + k.mean()


def center_gram(k: GramMatrix) -> GramMatrix:
    """Apply the centering matrix on both sides: H k H.

    Every row and column of the result sums to 0 (within round-off), and a
    Gram matrix built from rows that are all identical centers to zero.
    """
    _expect(k, GramMatrix, "center_gram")
    return GramMatrix(_double_center(k.data), k.kernel)


def _hsic_from_centered(kc: np.ndarray, qc: np.ndarray, p: int) -> float:
    val = float(np.multiply(kc, qc).sum()) / (p - 1) ** 2
    if -CLAMP_BELOW < val < 0.0:
        val = 0.0
    return val


def hsic(k: GramMatrix, q: GramMatrix) -> float:
    """Empirical HSIC of two Gram matrices: tr(K H Q H) / (p - 1)^2.

    For linear-kernel Gram matrices the value is nonnegative up to
    round-off; negative noise within 1e-10 of zero is clamped to 0.
    """
    _expect(k, GramMatrix, "hsic")
    _expect(q, GramMatrix, "hsic")
    if k.sample_count != q.sample_count:
        raise ValidationError(
            f"Gram size mismatch: {k.sample_count} vs {q.sample_count} samples"
        )
    p = k.sample_count
    return _hsic_from_centered(_double_center(k.data), _double_center(q.data), p)


def _clamp_unit(value: float) -> float:
    if value < 0.0:
        if value > -CLAMP_BELOW:
            return 0.0
        raise NumericalError(f"CKA value {value} below 0 beyond round-off tolerance")
    if value > 1.0:
        if value < 1.0 + CLAMP_ABOVE:
            return 1.0
        raise NumericalError(f"CKA value {value} above 1 beyond round-off tolerance")
    return value


def cka(x: RepresentationMatrix, y: RepresentationMatrix) -> CkaResult:
    """Linear CKA between two representations over the same samples.

    Degeneracy is decided on Frobenius-normalized Gram matrices: if either
    self-HSIC is at most 1e-12 after that normalization (or the Gram norm
    itself underflows), the pair is degenerate and the value is 0.
    """
    _expect(x, RepresentationMatrix, "cka")
    _expect(y, RepresentationMatrix, "cka")
    if x.sample_count != y.sample_count:
        raise ValidationError(
            f"sample-count mismatch: {x.sample_count} vs {y.sample_count}"
        )
    p = x.sample_count
    k = linear_gram(x)
    q = linear_gram(y)
    kc = _double_center(k.data)
    qc = _double_center(q.data)
    hsic_xy = _hsic_from_centered(kc, qc, p)
    hsic_xx = _hsic_from_centered(kc, kc, p)
    hsic_yy = _hsic_from_centered(qc, qc, p)

    norm_k = float(np.linalg.norm(k.data))
    norm_q = float(np.linalg.norm(q.data))
    degenerate = norm_k <= NORM_FLOOR or norm_q <= NORM_FLOOR
    if not degenerate:
        degenerate = (
            hsic_xx / norm_k**2 <= DEGENERACY_EPS or hsic_yy / norm_q**2 <= DEGENERACY_EPS
        )

    if degenerate:
        value = 0.0
    else:
        value = _clamp_unit(hsic_xy / math.sqrt(hsic_xx * hsic_yy))
    return CkaResult(value, degenerate, hsic_xy, hsic_xx, hsic_yy)
