"""Low-rank adapters over frozen dense weights.

A LoRA adapter replaces a frozen weight W_0 (d x k) with

    W = W_0 + (alpha / r) B A,     B: d x r,  A: r x k,  r << min(d, k)

where only B and A train. The forward path always goes through the two
factors, x W_0 + (alpha/r) (x B) A, never materializing the d x k update;
materialization exists only as a one-time post-training merge for export.

Two initializations are supported. ZeroB starts B at zero (so the adapted
model is exactly the base model) and A uniform in [-1/sqrt(k), 1/sqrt(k)].
PiSSA starts from the top-r singular triplets of W_0: B = U_r sqrt(S_r),
A = sqrt(S_r) V_r^T, and the base is swapped for the residual
W_res = W_0 - U_r S_r V_r^T, so training moves the principal components of
the original weight. PiSSA fixes alpha = r (scale factor 1), which keeps
W_res + (alpha/r) B A an exact reconstruction of W_0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .importance import Architecture


class Role(enum.Enum):
    """Weight matrices an adapter can target inside a transformer block."""

    WQ = "Wq"
    WK = "Wk"
    WV = "Wv"
    WO = "Wo"
    WGATE = "Wgate"
    WUP = "Wup"
    WDOWN = "Wdown"


class InitMode(enum.Enum):
    ZERO_B = "zero"
    PISSA = "pissa"


ALL_ROLES = frozenset(Role)
ENCODER_ROLES = frozenset(Role) - {Role.WGATE}


def _finite(arr: np.ndarray, what: str) -> np.ndarray:
    # float32 inputs stay float32 so adapters can match a model's dtype;
    # everything else is promoted to float64.
    arr = np.asarray(arr)
    dtype = np.float32 if arr.dtype == np.float32 else np.float64
    out = np.array(arr, dtype=dtype)
    if not np.all(np.isfinite(out)):
        raise ValidationError(f"{what} contains non-finite entries")
    return out


@dataclass
class LoraAdapter:
    """Trainable pair (B, A) with its scaling; attached to one weight matrix.

    The arrays mutate in place during training; shape and hyperparameter
    invariants hold for the adapter's whole lifetime.
    """

    b: np.ndarray
    a: np.ndarray
    rank: int
    alpha: float
    init_mode: InitMode
    target_role: Role

    def __post_init__(self):
        self.b = _finite(self.b, "adapter B")
        self.a = _finite(self.a, "adapter A")
        if self.rank < 1:
            raise ValidationError(f"rank must be >= 1, got {self.rank}")
        if self.b.ndim != 2 or self.a.ndim != 2:
            raise ValidationError("adapter factors must be 2-D")
        d, rb = self.b.shape
        ra, k = self.a.shape
        if rb != self.rank or ra != self.rank:
            raise ValidationError(
                f"factor shapes {self.b.shape}, {self.a.shape} do not match rank {self.rank}"
            )
        if self.rank > min(d, k):
            raise ValidationError(f"rank {self.rank} exceeds min{d, k}")
        if not self.alpha > 0:
            raise ValidationError(f"alpha must be positive, got {self.alpha}")
        if self.init_mode is InitMode.PISSA and self.alpha != self.rank:
            raise ValidationError(
                f"pissa requires alpha = rank, got alpha={self.alpha}, rank={self.rank}"
            )

    @property
    def scale(self) -> float:
        return self.alpha / self.rank

    def delta(self) -> np.ndarray:
        """Materialized (alpha/r) B A. Export and test use only."""
        return self.scale * (self.b @ self.a)


@dataclass
class AdaptedWeight:
    """A frozen base matrix plus an optional adapter."""

    w0: np.ndarray
    adapter: LoraAdapter | None = None

    def __post_init__(self):
        self.w0 = _finite(self.w0, "base weight")
        if self.w0.ndim != 2:
            raise ValidationError("base weight must be 2-D")
        if self.adapter is not None:
            d, k = self.w0.shape
            if self.adapter.b.shape[0] != d or self.adapter.a.shape[1] != k:
                raise ValidationError(
                    f"adapter {self.adapter.b.shape}x{self.adapter.a.shape} does not "
                    f"fit base {self.w0.shape}"
                )


def low_rank_forward(w0: np.ndarray, adapter: LoraAdapter | None, x: np.ndarray) -> np.ndarray:
    """Unvalidated core of the adapted product; shared with the model forward."""
    out = x @ w0
    if adapter is not None:
        out = out + adapter.scale * ((x @ adapter.b) @ adapter.a)
    return out


def lora_forward(w: AdaptedWeight, x: np.ndarray) -> np.ndarray:
    """x W_0 plus the two-factor low-rank path; never materializes B A."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != w.w0.shape[0]:
        raise ValidationError(
            f"input width {x.shape[-1]} does not match weight {w.w0.shape}"
        )
    return low_rank_forward(w.w0, w.adapter, x)


def zero_b_adapter(
    d: int,
    k: int,
    rank: int,
    alpha: float,
    role: Role,
    rng: np.random.Generator,
    dtype=np.float64,
) -> LoraAdapter:
    """Fresh ZeroB adapter: B = 0, A ~ U(-1/sqrt(k), 1/sqrt(k))."""
    bound = 1.0 / np.sqrt(k)
    return LoraAdapter(
        b=np.zeros((d, rank), dtype=dtype),
        a=rng.uniform(-bound, bound, size=(rank, k)).astype(dtype, copy=False),
        rank=rank,
        alpha=alpha,
        init_mode=InitMode.ZERO_B,
        target_role=role,
    )


def pissa_init(w0: np.ndarray, rank: int, role: Role = Role.WQ):
    """Split W_0 into a residual plus a rank-r adapter at its principal components.

    Returns (W_res, adapter) with W_res + adapter.delta() = W_0 up to SVD
    round-off (1e-8 relative Frobenius).
    """
    w0 = _finite(w0, "base weight")
    if w0.ndim != 2:
        raise ValidationError("base weight must be 2-D")
    d, k = w0.shape
    if not 1 <= rank <= min(d, k):
        raise ValidationError(f"rank {rank} outside 1..min{d, k}")
    try:
        u, s, vt = np.linalg.svd(w0, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed on a {d}x{k} weight: {exc}") from exc
    root = np.sqrt(s[:rank])
    b = u[:, :rank] * root
    a = root[:, None] * vt[:rank]
    w_res = w0 - (u[:, :rank] * s[:rank]) @ vt[:rank]
    adapter = LoraAdapter(
        b=b, a=a, rank=rank, alpha=float(rank), init_mode=InitMode.PISSA, target_role=role
    )
    return w_res, adapter


def merge_adapter(w: AdaptedWeight) -> np.ndarray:
    """One-time post-training fold-in: W_0 + (alpha/r) B A."""
    if w.adapter is None:
        return w.w0.copy()
    return w.w0 + w.adapter.delta()


@dataclass(frozen=True)
class ArchitectureSpec:
    """Dimensions and adapter targets of one transformer architecture.

    ``n_kv_heads`` (grouped-query attention) and ``head_dim`` default to the
    standard multi-head values ``n_heads`` and ``d_model / n_heads``; the
    7B-class presets that deviate set them explicitly.
    """

    n_layers: int
    d_model: int
    n_heads: int
    d_ff: int
    vocab_size: int
    architecture: Architecture
    lora_targets: frozenset
    n_kv_heads: int = 0
    head_dim: int = 0

    def __post_init__(self):
        if self.n_kv_heads == 0:
            object.__setattr__(self, "n_kv_heads", self.n_heads)
        if self.head_dim == 0:
            if self.d_model % self.n_heads != 0:
                raise ValidationError(
                    f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
                )
            object.__setattr__(self, "head_dim", self.d_model // self.n_heads)
        object.__setattr__(self, "lora_targets", frozenset(self.lora_targets))
        for name in ("n_layers", "d_model", "n_heads", "d_ff", "vocab_size",
                     "n_kv_heads", "head_dim"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.n_heads % self.n_kv_heads != 0:
            raise ValidationError(
                f"n_heads {self.n_heads} not divisible by n_kv_heads {self.n_kv_heads}"
            )
        if not self.lora_targets:
            raise ValidationError("lora_targets must not be empty")
        bad = self.lora_targets - self.available_roles
        if bad:
            raise ValidationError(
                f"targets {sorted(r.value for r in bad)} not available on "
                f"{self.architecture.value}"
            )

    @property
    def available_roles(self) -> frozenset:
        if self.architecture is Architecture.ENCODER_ONLY:
            return ENCODER_ROLES
        return ALL_ROLES

    def role_shape(self, role: Role) -> tuple:
        """(d_in, d_out) of the dense matrix filling ``role``."""
        q_width = self.n_heads * self.head_dim
        kv_width = self.n_kv_heads * self.head_dim
        shapes = {
            Role.WQ: (self.d_model, q_width),
            Role.WK: (self.d_model, kv_width),
            Role.WV: (self.d_model, kv_width),
            Role.WO: (q_width, self.d_model),
            Role.WGATE: (self.d_model, self.d_ff),
            Role.WUP: (self.d_model, self.d_ff),
            Role.WDOWN: (self.d_ff, self.d_model),
        }
        if role not in self.available_roles:
            raise ValidationError(f"role {role.value} not available on this architecture")
        return shapes[role]


@dataclass(frozen=True)
class LoraConfig:
    """Adapter hyperparameters used when applying a plan to a model."""

    rank: int
    alpha: float
    init_mode: InitMode = InitMode.ZERO_B
    targets: frozenset | None = None

    def __post_init__(self):
        if self.rank < 1:
            raise ValidationError(f"rank must be >= 1, got {self.rank}")
        if not self.alpha > 0:
            raise ValidationError(f"alpha must be positive, got {self.alpha}")
        if self.init_mode is InitMode.PISSA and self.alpha != self.rank:
            raise ValidationError("pissa requires alpha = rank")
        if self.targets is not None:
            object.__setattr__(self, "targets", frozenset(self.targets))

    def resolve_targets(self, spec: ArchitectureSpec) -> frozenset:
        targets = self.targets if self.targets is not None else spec.lora_targets
        bad = targets - spec.available_roles
        if bad:
            raise ValidationError(
                f"targets {sorted(r.value for r in bad)} not available on "
                f"{spec.architecture.value}"
            )
        return targets


def count_trainable(spec: ArchitectureSpec, rank: int, selected_count: int) -> int:
    """Adapter parameters for ``selected_count`` layers: sum of r (d_in + d_out).

    Counts adapter entries only; embeddings, head, and normalization gains
    are frozen and excluded.
    """
    if not isinstance(rank, int):
        raise ValidationError(f"rank must be an int, got {type(rank).__name__}")
    if rank < 1:
        raise ValidationError(f"rank must be >= 1, got {rank}")
    if not isinstance(selected_count, int):
        raise ValidationError(
            "selected_count must be an int (the number of selected layers), "
            f"got {type(selected_count).__name__}"
        )
    if not 0 <= selected_count <= spec.n_layers:
        raise ValidationError(
            f"selected_count {selected_count} outside 0..{spec.n_layers}"
        )
    per_layer = 0
    for role in sorted(spec.lora_targets, key=lambda r: r.value):
        d_in, d_out = spec.role_shape(role)
        per_layer += rank * (d_in + d_out)
    return selected_count * per_layer
