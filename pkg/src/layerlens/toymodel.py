"""Desk-scale transformer with representation hooks and adapter training.

Both architectures use pre-norm residual blocks built from RMSNorm,
multi-head softmax attention, and a SiLU feed-forward (SwiGLU gate/up/down
on the decoder, plain up/down on the encoder). Positions are learned
embeddings; the decoder masks attention causally and reads logits at the
final position, the encoder attends bidirectionally and reads at the CLS
position (token id 0, always prepended at position 0).

The backward pass is written by hand against the forward below and only
accumulates gradients for adapter factors: base weights, embeddings,
normalization gains, and the head never receive gradients, which both
enforces the freeze discipline structurally and skips their cost. The
backward loop also stops below the lowest adapted layer, where nothing
downstream needs the signal.

Everything runs in the model's dtype. The default float64 keeps
central-difference checks meaningful; a float32 model roughly halves
single-core training time at accuracy far beyond what the synthetic tasks
need. Sequences are processed as flattened (batch * seq, d_model) matrices
so every projection is one large GEMM; attention regroups heads locally.

Activations are SiLU everywhere because the gradient checker differentiates
through them; a kink like ReLU would poison central differences near zero.
"""

from __future__ import annotations

import resource
import time
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .importance import Architecture, RepresentationSet, SelectionPlan
from .lora import (
    ArchitectureSpec,
    InitMode,
    LoraConfig,
    Role,
    count_trainable,
    pissa_init,
    zero_b_adapter,
)
from .presets import Preset
from .similarity import RepresentationMatrix
from .tasks import CLS_TOKEN_ID, SyntheticTask

RMS_EPS = 1e-6

ATTENTION_ROLES = (Role.WQ, Role.WK, Role.WV)
DECODER_FFN_ROLES = (Role.WGATE, Role.WUP, Role.WDOWN)
ENCODER_FFN_ROLES = (Role.WUP, Role.WDOWN)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    np.exp(shifted, out=shifted)
    shifted /= shifted.sum(axis=-1, keepdims=True)
    return shifted


def _rms_rows(x: np.ndarray, gain: np.ndarray) -> tuple:
    """Row-wise RMSNorm; returns (normalized, 1/rms) for reuse in backward."""
    inv = 1.0 / np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + RMS_EPS)
    return x * inv * gain, inv


class ToyModel:
    """Frozen random transformer; per-layer weights live in role dicts."""

    def __init__(
        self,
        spec: ArchitectureSpec,
        rng_seed: int,
        max_seq_len: int = 33,
        model_id: str = "toy",
        dtype=np.float64,
    ):
        if max_seq_len < 1:
            raise ValidationError(f"max_seq_len must be >= 1, got {max_seq_len}")
        dtype = np.dtype(dtype)
        if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
            raise ValidationError(f"model dtype must be float32 or float64, got {dtype}")
        self.spec = spec
        self.rng_seed = rng_seed
        self.max_seq_len = max_seq_len
        self.model_id = model_id
        self.dtype = dtype

        d = spec.d_model
        rng = np.random.default_rng(rng_seed)

        def draw(*shape, scale=1.0):
            return (rng.standard_normal(shape) * scale).astype(dtype, copy=False)

        self.emb = draw(spec.vocab_size, d)
        self.pos = draw(max_seq_len, d)
        self.final_g = np.ones(d, dtype=dtype)
        self.head = draw(d, spec.vocab_size, scale=1.0 / np.sqrt(d))

        if spec.architecture is Architecture.DECODER_ONLY:
            ffn_roles = DECODER_FFN_ROLES
        else:
            ffn_roles = ENCODER_FFN_ROLES
        self.layers = []
        for _ in range(spec.n_layers):
            weights = {}
            for role in ATTENTION_ROLES + (Role.WO,) + ffn_roles:
                d_in, d_out = spec.role_shape(role)
                weights[role] = draw(d_in, d_out, scale=1.0 / np.sqrt(d_in))
            self.layers.append(
                {
                    "ln1_g": np.ones(d, dtype=dtype),
                    "ln2_g": np.ones(d, dtype=dtype),
                    "weights": weights,
                }
            )

    @property
    def capture_last(self) -> bool:
        return self.spec.architecture is Architecture.DECODER_ONLY


def build_toy_model(
    preset: Preset, seed: int, max_seq_len: int = 33, dtype=np.float64
) -> ToyModel:
    if not preset.weights_available:
        raise ValidationError(
            f"preset {preset.name!r} is dimensions-only; only toy presets have weights"
        )
    return ToyModel(preset.spec, seed, max_seq_len, model_id=preset.name, dtype=dtype)


class AdaptedModel:
    """A frozen ToyModel plus trainable adapters on the planned layers.

    PiSSA swaps the targeted base matrices for their top-r residuals; those
    residual copies live here, and the wrapped ToyModel is never mutated.
    """

    def __init__(self, model: ToyModel, plan: SelectionPlan, config: LoraConfig, seed: int = 0):
        spec = model.spec
        if plan.n_total_layers != spec.n_layers:
            raise ValidationError(
                f"plan covers {plan.n_total_layers} layers, model has {spec.n_layers}"
            )
        self.model = model
        self.plan = plan
        self.config = config
        self.adapters = {}
        self.residuals = {}
        targets = sorted(config.resolve_targets(spec), key=lambda r: r.value)
        rng = np.random.default_rng(seed)
        for layer_idx in plan.selected:
            for role in targets:
                base = model.layers[layer_idx - 1]["weights"][role]
                if config.init_mode is InitMode.PISSA:
                    residual, adapter = pissa_init(base, config.rank, role)
                    self.residuals[(layer_idx, role)] = residual
                else:
                    d_in, d_out = base.shape
                    adapter = zero_b_adapter(
                        d_in, d_out, config.rank, config.alpha, role, rng,
                        dtype=model.dtype,
                    )
                self.adapters[(layer_idx, role)] = adapter

    def base_weight(self, layer_idx: int, role: Role) -> np.ndarray:
        override = self.residuals.get((layer_idx, role))
        if override is not None:
            return override
        return self.model.layers[layer_idx - 1]["weights"][role]

    def adapter_for(self, layer_idx: int, role: Role):
        return self.adapters.get((layer_idx, role))

    def adapter_keys(self) -> list:
        return sorted(self.adapters, key=lambda kr: (kr[0], kr[1].value))

    def trainable_parameter_count(self) -> int:
        return sum(a.b.size + a.a.size for a in self.adapters.values())

    def lowest_adapted_layer(self) -> int:
        return min(key[0] for key in self.adapters) if self.adapters else 1


def apply_plan(model: ToyModel, plan: SelectionPlan, config: LoraConfig, seed: int = 0) -> AdaptedModel:
    """Attach adapters to every target matrix of the selected layers."""
    return AdaptedModel(model, plan, config, seed)


def _as_model(model_like) -> tuple:
    if isinstance(model_like, AdaptedModel):
        return model_like.model, model_like
    return model_like, None


def _check_tokens(model: ToyModel, tokens: np.ndarray) -> np.ndarray:
    tokens = np.asarray(tokens)
    if tokens.ndim != 2:
        raise ValidationError(f"token batch must be 2-D, got shape {tokens.shape}")
    if tokens.shape[1] > model.max_seq_len:
        raise ValidationError(
            f"sequence length {tokens.shape[1]} exceeds model maximum {model.max_seq_len}"
        )
    if not np.issubdtype(tokens.dtype, np.integer):
        raise ValidationError("token ids must be integers")
    if tokens.min(initial=0) < 0 or tokens.max(initial=0) >= model.spec.vocab_size:
        raise ValidationError(
            f"token ids outside 0..{model.spec.vocab_size - 1} (out of vocabulary)"
        )
    return tokens


def prepare_tokens(model: ToyModel, data_tokens: np.ndarray) -> np.ndarray:
    """Prepend the CLS column on encoder inputs; decoders take data as is."""
    data_tokens = np.asarray(data_tokens)
    if model.spec.architecture is Architecture.ENCODER_ONLY:
        cls_col = np.full((data_tokens.shape[0], 1), CLS_TOKEN_ID, dtype=data_tokens.dtype)
        return np.concatenate([cls_col, data_tokens], axis=1)
    return data_tokens


def _forward(model_like, tokens, want_cache: bool):
    """Shared forward. Returns (logits, captured rows R_0..R_M, cache).

    The residual stream stays flattened as (batch * seq, d_model) so each
    projection is a single GEMM; attention regroups to
    (batch * heads, seq, head_dim) around the softmax.
    """
    model, adapted = _as_model(model_like)
    spec = model.spec
    tokens = _check_tokens(model, tokens)
    batch, seq = tokens.shape
    cap = seq - 1 if model.capture_last else 0
    decoder = spec.architecture is Architecture.DECODER_ONLY
    heads, head_dim = spec.n_heads, spec.head_dim
    width = heads * head_dim
    bt = batch * seq
    scale = 1.0 / np.sqrt(head_dim)

    def to_heads(m2d):
        return (
            m2d.reshape(batch, seq, heads, head_dim)
            .transpose(0, 2, 1, 3)
            .reshape(batch * heads, seq, head_dim)
        )

    def from_heads(m3d):
        return (
            m3d.reshape(batch, heads, seq, head_dim)
            .transpose(0, 2, 1, 3)
            .reshape(bt, width)
        )

    x = (model.emb[tokens] + model.pos[:seq]).reshape(bt, -1)
    reps = [x.reshape(batch, seq, -1)[:, cap, :].copy()]
    if decoder:
        mask = np.triu(np.full((seq, seq), -np.inf, dtype=model.dtype), k=1)
    caches = []
    for layer_idx in range(1, spec.n_layers + 1):
        layer = model.layers[layer_idx - 1]
        cache = {"x_in": x, "u": {}} if want_cache else None

        def project(role, inp):
            if adapted is None:
                return inp @ layer["weights"][role]
            w0 = adapted.base_weight(layer_idx, role)
            adapter = adapted.adapter_for(layer_idx, role)
            if adapter is None:
                return inp @ w0
            u = inp @ adapter.b
            if want_cache:
                cache["u"][role] = u
            out = inp @ w0
            out += adapter.scale * (u @ adapter.a)
            return out

        # Attention sublayer.
        h1, inv1 = _rms_rows(x, layer["ln1_g"])
        q = to_heads(project(Role.WQ, h1))
        k = to_heads(project(Role.WK, h1))
        v = to_heads(project(Role.WV, h1))
        scores = q @ k.transpose(0, 2, 1)
        scores *= scale
        if decoder:
            scores += mask
        attn = _softmax(scores)
        ctx = from_heads(attn @ v)
        x2 = x + project(Role.WO, ctx)

        # Feed-forward sublayer.
        h2, inv2 = _rms_rows(x2, layer["ln2_g"])
        if decoder:
            gate_pre = project(Role.WGATE, h2)
            up = project(Role.WUP, h2)
            sig = _sigmoid(gate_pre)
            prod = gate_pre * sig
            prod *= up
            y = project(Role.WDOWN, prod)
            if want_cache:
                cache.update(gate_pre=gate_pre, up=up, sig=sig, prod=prod)
        else:
            up_pre = project(Role.WUP, h2)
            sig = _sigmoid(up_pre)
            act = up_pre * sig
            y = project(Role.WDOWN, act)
            if want_cache:
                cache.update(up_pre=up_pre, sig=sig, act=act)
        x_next = x2 + y

        if want_cache:
            cache.update(inv1=inv1, h1=h1, q=q, k=k, v=v, attn=attn, ctx=ctx,
                         x2=x2, inv2=inv2, h2=h2)
            caches.append(cache)
        x = x_next
        reps.append(x.reshape(batch, seq, -1)[:, cap, :].copy())

    x_cap = x.reshape(batch, seq, -1)[:, cap, :]
    hf, inv_f = _rms_rows(x_cap, model.final_g)
    logits = hf @ model.head
    cache_top = None
    if want_cache:
        cache_top = {"layers": caches, "x_cap": x_cap, "inv_f": inv_f, "cap": cap,
                     "batch": batch, "seq": seq, "decoder": decoder, "scale": scale}
    return logits, reps, cache_top


def forward(model_like, tokens) -> np.ndarray:
    """Logits only."""
    logits, _, _ = _forward(model_like, tokens, want_cache=False)
    return logits


def forward_with_hooks(model_like, tokens) -> tuple:
    """Logits plus the captured rows R_0..R_M, each of shape (batch, d_model)."""
    logits, reps, _ = _forward(model_like, tokens, want_cache=False)
    return logits, reps


def _rmsnorm_backward(dy_times_g, x, inv):
    # y = x * inv * g with inv = 1/sqrt(mean(x^2) + eps); dy_times_g = dy * g.
    d = x.shape[-1]
    dot = np.sum(dy_times_g * x, axis=-1, keepdims=True)
    return dy_times_g * inv - x * (inv**3) * (dot / d)


def _loss_and_grads(adapted: AdaptedModel, tokens, labels, want_grads: bool = True):
    """Mean cross-entropy at the capture position, plus adapter gradients.

    Gradients flow through every activation but are only accumulated into
    adapter factors; frozen parameters have no gradient buffers at all.
    """
    model = adapted.model
    spec = model.spec
    logits, _, cache = _forward(adapted, tokens, want_cache=want_grads)
    labels = np.asarray(labels)
    if labels.shape != (logits.shape[0],):
        raise ValidationError(
            f"labels shape {labels.shape} does not match batch {logits.shape[0]}"
        )
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= spec.vocab_size:
        raise ValidationError("labels outside the model vocabulary")

    batch = logits.shape[0]
    rows = np.arange(batch)
    shifted = logits - logits.max(axis=1, keepdims=True)
    np.exp(shifted, out=shifted)
    total = shifted.sum(axis=1)
    loss = float(np.mean(np.log(total) - np.log(shifted[rows, labels])))
    if not want_grads:
        return loss, None

    dlogits = shifted
    dlogits /= total[:, None]
    dlogits[rows, labels] -= 1.0
    dlogits /= batch

    grads = {
        key: (np.zeros_like(a.b), np.zeros_like(a.a))
        for key, a in adapted.adapters.items()
    }
    seq, cap = cache["seq"], cache["cap"]
    heads, head_dim = spec.n_heads, spec.head_dim
    width = heads * head_dim
    bt = batch * seq
    decoder, scale = cache["decoder"], cache["scale"]
    stop_layer = adapted.lowest_adapted_layer()

    def to_heads(m2d):
        return (
            m2d.reshape(batch, seq, heads, head_dim)
            .transpose(0, 2, 1, 3)
            .reshape(batch * heads, seq, head_dim)
        )

    def from_heads(m3d):
        return (
            m3d.reshape(batch, heads, seq, head_dim)
            .transpose(0, 2, 1, 3)
            .reshape(bt, width)
        )

    def linear_backward(layer_idx, role, xin, dy, layer_cache):
        w0 = adapted.base_weight(layer_idx, role)
        adapter = adapted.adapter_for(layer_idx, role)
        dx = dy @ w0.T
        if adapter is not None:
            c = adapter.scale
            dy_a = dy @ adapter.a.T
            dx += c * (dy_a @ adapter.b.T)
            db, da = grads[(layer_idx, role)]
            db += c * (xin.T @ dy_a)
            da += c * (layer_cache["u"][role].T @ dy)
        return dx

    # Head and final norm; only the capture position carries loss gradient.
    dhf = dlogits @ model.head.T
    dx_cap = _rmsnorm_backward(dhf * model.final_g, cache["x_cap"], cache["inv_f"])
    dx = np.zeros((bt, spec.d_model), dtype=model.dtype)
    dx.reshape(batch, seq, -1)[:, cap, :] = dx_cap

    for layer_idx in range(spec.n_layers, stop_layer - 1, -1):
        lc = cache["layers"][layer_idx - 1]
        ln1_g = model.layers[layer_idx - 1]["ln1_g"]
        ln2_g = model.layers[layer_idx - 1]["ln2_g"]

        # Feed-forward sublayer: x_out = x2 + y.
        dy = dx
        if decoder:
            dprod = linear_backward(layer_idx, Role.WDOWN, lc["prod"], dy, lc)
            gate_pre, sig = lc["gate_pre"], lc["sig"]
            dact = dprod * lc["up"]
            dup = dprod * (gate_pre * sig)
            dgate_pre = dact * (sig * (1.0 + gate_pre * (1.0 - sig)))
            dh2 = linear_backward(layer_idx, Role.WGATE, lc["h2"], dgate_pre, lc)
            dh2 += linear_backward(layer_idx, Role.WUP, lc["h2"], dup, lc)
        else:
            dact = linear_backward(layer_idx, Role.WDOWN, lc["act"], dy, lc)
            up_pre, sig = lc["up_pre"], lc["sig"]
            dup_pre = dact * (sig * (1.0 + up_pre * (1.0 - sig)))
            dh2 = linear_backward(layer_idx, Role.WUP, lc["h2"], dup_pre, lc)
        dx2 = dx + _rmsnorm_backward(dh2 * ln2_g, lc["x2"], lc["inv2"])

        # Attention sublayer: x2 = x_in + Wo(ctx).
        dctx = to_heads(linear_backward(layer_idx, Role.WO, lc["ctx"], dx2, lc))
        attn, q, k, v = lc["attn"], lc["q"], lc["k"], lc["v"]
        dattn = dctx @ v.transpose(0, 2, 1)
        dv = attn.transpose(0, 2, 1) @ dctx
        dscores = attn * (dattn - np.sum(dattn * attn, axis=-1, keepdims=True))
        dscores *= scale
        dq = dscores @ k
        dk = dscores.transpose(0, 2, 1) @ q
        dh1 = linear_backward(layer_idx, Role.WQ, lc["h1"], from_heads(dq), lc)
        dh1 += linear_backward(layer_idx, Role.WK, lc["h1"], from_heads(dk), lc)
        dh1 += linear_backward(layer_idx, Role.WV, lc["h1"], from_heads(dv), lc)
        dx = dx2 + _rmsnorm_backward(dh1 * ln1_g, lc["x_in"], lc["inv1"])

    return loss, grads


def loss_on_batch(adapted: AdaptedModel, tokens, labels) -> float:
    loss, _ = _loss_and_grads(adapted, tokens, labels, want_grads=False)
    return loss


@dataclass(frozen=True)
class Hyperparameters:
    """Training knobs. ``steps`` is a budget; ``stop_loss``, when set, ends
    the run early once the trailing-50-step mean training loss falls below
    it. The cutoff is a pure function of the seeded loss curve, so early
    stopping never breaks run-to-run determinism."""

    steps: int = 2000
    batch_size: int = 32
    lr: float = 0.1
    momentum: float = 0.9
    seed: int = 0
    val_batch: int = 256
    stop_loss: float | None = None

    def __post_init__(self):
        if self.steps < 0:
            raise ValidationError(f"steps must be >= 0, got {self.steps}")
        if self.batch_size < 1 or self.val_batch < 1:
            raise ValidationError("batch sizes must be >= 1")
        if self.lr < 0:
            raise ValidationError(f"lr must be >= 0, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ValidationError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.stop_loss is not None and self.stop_loss <= 0:
            raise ValidationError(f"stop_loss must be > 0, got {self.stop_loss}")


@dataclass(frozen=True)
class TrainReport:
    """Everything a training run produced, plus the setup that produced it."""

    plan: SelectionPlan
    task: SyntheticTask
    hp: Hyperparameters
    rank: int
    alpha: float
    init_mode: InitMode
    model_id: str
    trainable_params: int
    loss_curve: tuple
    final_val_accuracy: float
    wall_clock_seconds: float
    peak_rss_bytes: int

    @property
    def final_train_loss(self) -> float:
        return self.loss_curve[-1] if self.loss_curve else float("nan")


def evaluate_accuracy(adapted_or_model, task: SyntheticTask, tokens, labels, chunk: int = 256) -> float:
    """Argmax accuracy at the capture position, evaluated in chunks."""
    model, _ = _as_model(adapted_or_model)
    hits = 0
    for start in range(0, tokens.shape[0], chunk):
        part = prepare_tokens(model, tokens[start : start + chunk])
        logits = forward(adapted_or_model, part)
        hits += int(np.sum(np.argmax(logits, axis=1) == labels[start : start + chunk]))
    return hits / tokens.shape[0]


def train(adapted: AdaptedModel, task: SyntheticTask, hp: Hyperparameters) -> TrainReport:
    """Mini-batch SGD with momentum on the adapter factors only."""
    if not adapted.adapters:
        raise ValidationError("model has no adapters to train")
    model = adapted.model
    if model.spec.vocab_size < task.min_model_vocab:
        raise ValidationError(
            f"model vocab {model.spec.vocab_size} too small for task "
            f"needing {task.min_model_vocab}"
        )
    seq_needed = task.sequence_length + (
        0 if model.capture_last else 1
    )
    if seq_needed > model.max_seq_len:
        raise ValidationError(
            f"task needs sequence length {seq_needed}, model supports {model.max_seq_len}"
        )

    start = time.perf_counter()
    data = task.generate()
    rng = np.random.default_rng(hp.seed)
    velocity = {
        key: (np.zeros_like(a.b), np.zeros_like(a.a))
        for key, a in adapted.adapters.items()
    }
    curve = []
    window = 50
    for step in range(hp.steps):
        idx = rng.integers(0, data.train_tokens.shape[0], size=hp.batch_size)
        tokens = prepare_tokens(model, data.train_tokens[idx])
        loss, grads = _loss_and_grads(adapted, tokens, data.train_labels[idx])
        if not np.isfinite(loss):
            raise NumericalError(
                f"training diverged at step {step}: loss = {loss}"
            )
        curve.append(loss)
        for key in adapted.adapter_keys():
            adapter = adapted.adapters[key]
            vb, va = velocity[key]
            db, da = grads[key]
            vb *= hp.momentum
            vb -= hp.lr * db
            va *= hp.momentum
            va -= hp.lr * da
            adapter.b += vb
            adapter.a += va
        if (
            hp.stop_loss is not None
            and len(curve) >= window
            and sum(curve[-window:]) / window < hp.stop_loss
        ):
            break

    accuracy = evaluate_accuracy(adapted, task, data.val_tokens, data.val_labels, hp.val_batch)
    elapsed = time.perf_counter() - start
    peak_rss = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024

    trainable = adapted.trainable_parameter_count()
    if adapted.config.targets is None:
        expected = count_trainable(model.spec, adapted.config.rank, adapted.plan.n_layers)
        if trainable != expected:
            raise NumericalError(
                f"trainable count {trainable} disagrees with accounting {expected}"
            )
    return TrainReport(
        plan=adapted.plan,
        task=task,
        hp=hp,
        rank=adapted.config.rank,
        alpha=adapted.config.alpha,
        init_mode=adapted.config.init_mode,
        model_id=model.model_id,
        trainable_params=trainable,
        loss_curve=tuple(curve),
        final_val_accuracy=accuracy,
        wall_clock_seconds=elapsed,
        peak_rss_bytes=int(peak_rss),
    )


def grad_check(adapted: AdaptedModel, tokens, labels, step: float = 1e-5) -> float:
    """Central-difference check of every adapter gradient entry.

    Per tensor, reports max_ij |analytic - numeric| divided by the larger of
    the two tensors' max magnitudes (floored at 1e-8): a pure per-entry
    relative error on a near-zero gradient would only measure the ~1e-8
    noise floor of differencing a float64 loss at h = 1e-5.
    """
    if adapted.model.dtype != np.float64:
        raise ValidationError("gradient checking requires a float64 model")
    _, grads = _loss_and_grads(adapted, tokens, labels)
    worst = 0.0
    for key in adapted.adapter_keys():
        adapter = adapted.adapters[key]
        for arr, analytic in ((adapter.b, grads[key][0]), (adapter.a, grads[key][1])):
            numeric = np.zeros_like(arr)
            flat = arr.reshape(-1)
            nflat = numeric.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                plus = loss_on_batch(adapted, tokens, labels)
                flat[i] = orig - step
                minus = loss_on_batch(adapted, tokens, labels)
                flat[i] = orig
                nflat[i] = (plus - minus) / (2.0 * step)
            denom = max(
                float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), 1e-8
            )
            rel = float(np.max(np.abs(analytic - numeric))) / denom
            worst = max(worst, rel)
    return worst


def snapshot_frozen_state(adapted: AdaptedModel) -> dict:
    """Copies of everything training must not touch."""
    model = adapted.model
    out = {
        "emb": model.emb.copy(),
        "pos": model.pos.copy(),
        "final_g": model.final_g.copy(),
        "head": model.head.copy(),
    }
    for i, layer in enumerate(model.layers, start=1):
        out[f"ln1_g.{i}"] = layer["ln1_g"].copy()
        out[f"ln2_g.{i}"] = layer["ln2_g"].copy()
        for role, w in sorted(layer["weights"].items(), key=lambda kv: kv[0].value):
            out[f"{role.value}.{i}"] = w.copy()
    for (i, role), residual in sorted(
        adapted.residuals.items(), key=lambda kr: (kr[0][0], kr[0][1].value)
    ):
        out[f"residual.{role.value}.{i}"] = residual.copy()
    return out


def frozen_state_equal(adapted: AdaptedModel, snapshot: dict) -> bool:
    """Bit-exact comparison against a snapshot taken before training."""
    current = snapshot_frozen_state(adapted)
    if current.keys() != snapshot.keys():
        return False
    return all(np.array_equal(current[k], snapshot[k]) for k in snapshot)


def extract_representations(
    model_like, task: SyntheticTask, sample_count: int, seed: int, chunk: int = 64
) -> RepresentationSet:
    """Run hooked forwards over freshly sampled task inputs."""
    model, _ = _as_model(model_like)
    if sample_count < 2:
        raise ValidationError(f"sample_count must be >= 2, got {sample_count}")
    if model.spec.vocab_size < task.min_model_vocab:
        raise ValidationError(
            f"model vocab {model.spec.vocab_size} too small for task "
            f"needing {task.min_model_vocab}"
        )
    rng = np.random.default_rng(seed)
    tokens = task.sample_tokens(sample_count, rng)
    parts = []
    for start in range(0, sample_count, chunk):
        batch = prepare_tokens(model, tokens[start : start + chunk])
        _, reps = forward_with_hooks(model_like, batch)
        parts.append(reps)
    rule = model.spec.architecture.token_rule
    matrices = []
    for layer_idx in range(model.spec.n_layers + 1):
        stacked = np.concatenate([p[layer_idx] for p in parts], axis=0)
        matrices.append(RepresentationMatrix(stacked, layer_idx, rule))
    return RepresentationSet(
        tuple(matrices), model.spec.architecture, model.model_id, sample_count
    )
