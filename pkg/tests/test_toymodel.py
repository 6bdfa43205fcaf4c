"""Toy transformer: forward oracle, hooks, gradients, freeze discipline.

The oracle `naive_forward` below re-derives the whole network with explicit
per-sample and per-head loops and materialized adapter deltas, sharing no
code with the vectorized implementation. Gradient correctness is checked
against central differences through `grad_check`.
"""

import numpy as np
import pytest

from layerlens.errors import NumericalError, ValidationError
from layerlens.importance import (
    Architecture,
    SelectionPlan,
    Strategy,
    layer_importance,
)
from layerlens.lora import ArchitectureSpec, InitMode, LoraConfig, Role, count_trainable
from layerlens.presets import get_preset
from layerlens.tasks import SyntheticTask, TaskKind
from layerlens.toymodel import (
    RMS_EPS,
    AdaptedModel,
    Hyperparameters,
    ToyModel,
    apply_plan,
    build_toy_model,
    evaluate_accuracy,
    extract_representations,
    forward,
    forward_with_hooks,
    frozen_state_equal,
    grad_check,
    loss_on_batch,
    prepare_tokens,
    snapshot_frozen_state,
    train,
)

# ---------------------------------------------------------------------------
# Oracle: loop-by-loop forward with materialized adapter weights.
# ---------------------------------------------------------------------------


def _rms(vec, gain):
    return vec / np.sqrt(np.mean(vec * vec) + RMS_EPS) * gain


def _softmax_1d(row):
    e = np.exp(row - row.max())
    return e / e.sum()


def _silu_1d(z):
    return z / (1.0 + np.exp(-z))


def effective_weight(adapted, layer_idx, role):
    """Base (or PiSSA residual) plus the materialized low-rank delta."""
    if adapted is None:
        return None
    base = adapted.base_weight(layer_idx, role)
    adapter = adapted.adapter_for(layer_idx, role)
    if adapter is None:
        return base
    return base + adapter.scale * (adapter.b @ adapter.a)


def naive_forward(model, tokens, adapted=None):
    """Independent re-derivation of the logits, one sample at a time."""
    spec = model.spec
    decoder = spec.architecture is Architecture.DECODER_ONLY
    heads, hd = spec.n_heads, spec.head_dim
    batch, seq = tokens.shape
    cap = seq - 1 if decoder else 0
    out = np.zeros((batch, spec.vocab_size))
    for s in range(batch):
        x = np.array([model.emb[tokens[s, t]] + model.pos[t] for t in range(seq)])
        for li in range(1, spec.n_layers + 1):
            layer = model.layers[li - 1]

            def w(role):
                eff = effective_weight(adapted, li, role)
                return layer["weights"][role] if eff is None else eff

            h1 = np.array([_rms(x[t], layer["ln1_g"]) for t in range(seq)])
            q, k, v = h1 @ w(Role.WQ), h1 @ w(Role.WK), h1 @ w(Role.WV)
            ctx = np.zeros((seq, heads * hd))
            for h in range(heads):
                sl = slice(h * hd, (h + 1) * hd)
                for t in range(seq):
                    scores = np.array(
                        [q[t, sl] @ k[j, sl] / np.sqrt(hd) for j in range(seq)]
                    )
                    if decoder:
                        scores[t + 1 :] = -np.inf
                    p = _softmax_1d(scores)
                    ctx[t, sl] = sum(p[j] * v[j, sl] for j in range(seq))
            x = x + ctx @ w(Role.WO)
            h2 = np.array([_rms(x[t], layer["ln2_g"]) for t in range(seq)])
            if decoder:
                y = (_silu_1d(h2 @ w(Role.WGATE)) * (h2 @ w(Role.WUP))) @ w(Role.WDOWN)
            else:
                y = _silu_1d(h2 @ w(Role.WUP)) @ w(Role.WDOWN)
            x = x + y
        out[s] = _rms(x[cap], model.final_g) @ model.head
    return out


def tiny_spec(architecture, n_layers=2):
    roles = (
        frozenset(Role) if architecture is Architecture.DECODER_ONLY
        else frozenset(Role) - {Role.WGATE}
    )
    return ArchitectureSpec(
        n_layers=n_layers, d_model=8, n_heads=2, d_ff=16, vocab_size=11,
        architecture=architecture, lora_targets=roles,
    )


def tiny_model(architecture, n_layers=2, seed=0):
    return ToyModel(tiny_spec(architecture, n_layers), rng_seed=seed, max_seq_len=8)


def full_plan(model, strategy=Strategy.FIRST, n=None):
    m = model.spec.n_layers
    n = m if n is None else n
    return SelectionPlan(
        selected=tuple(range(1, n + 1)), strategy=strategy, n_layers=n,
        excluded_candidates=frozenset(), model_id=model.model_id,
        n_total_layers=m,
    )


def rand_tokens(model, batch, seq, seed=0):
    rng = np.random.default_rng(seed)
    return rng.integers(1, model.spec.vocab_size, size=(batch, seq))


# ---------------------------------------------------------------------------
# Forward agreement with the oracle.
# ---------------------------------------------------------------------------


def test_decoder_forward_matches_oracle():
    model = tiny_model(Architecture.DECODER_ONLY)
    tokens = rand_tokens(model, 3, 5, seed=1)
    got = forward(model, tokens)
    want = naive_forward(model, tokens)
    assert np.max(np.abs(got - want)) < 1e-12


def test_encoder_forward_matches_oracle():
    model = tiny_model(Architecture.ENCODER_ONLY)
    tokens = prepare_tokens(model, rand_tokens(model, 4, 5, seed=2))
    got = forward(model, tokens)
    want = naive_forward(model, tokens)
    assert np.max(np.abs(got - want)) < 1e-12


def test_adapted_forward_matches_materialized_oracle():
    for init in (InitMode.ZERO_B, InitMode.PISSA):
        model = tiny_model(Architecture.DECODER_ONLY)
        rank = 2
        alpha = float(rank) if init is InitMode.PISSA else 5.0
        adapted = apply_plan(
            model, full_plan(model), LoraConfig(rank=rank, alpha=alpha, init_mode=init),
            seed=7,
        )
        if init is InitMode.ZERO_B:
            rng = np.random.default_rng(3)
            for key in adapted.adapter_keys():
                a = adapted.adapters[key]
                a.b += rng.normal(scale=0.2, size=a.b.shape)
        tokens = rand_tokens(model, 3, 6, seed=4)
        got = forward(adapted, tokens)
        want = naive_forward(model, tokens, adapted)
        assert np.max(np.abs(got - want)) < 1e-11


# ---------------------------------------------------------------------------
# Hooks and captured representations.
# ---------------------------------------------------------------------------


def test_hooks_do_not_change_logits():
    model = tiny_model(Architecture.DECODER_ONLY)
    tokens = rand_tokens(model, 4, 6, seed=5)
    plain = forward(model, tokens)
    hooked, reps = forward_with_hooks(model, tokens)
    assert np.array_equal(plain, hooked)
    assert len(reps) == model.spec.n_layers + 1
    assert all(r.shape == (4, model.spec.d_model) for r in reps)


def test_r0_is_embedding_at_capture_position():
    model = tiny_model(Architecture.DECODER_ONLY)
    tokens = rand_tokens(model, 5, 4, seed=6)
    _, reps = forward_with_hooks(model, tokens)
    want = model.emb[tokens[:, -1]] + model.pos[3]
    assert np.array_equal(reps[0], want)

    enc = tiny_model(Architecture.ENCODER_ONLY)
    enc_tokens = prepare_tokens(enc, rand_tokens(enc, 5, 4, seed=6))
    _, enc_reps = forward_with_hooks(enc, enc_tokens)
    want_row = enc.emb[0] + enc.pos[0]
    assert np.array_equal(enc_reps[0], np.tile(want_row, (5, 1)))


def test_zeroed_block_leaves_residual_unchanged():
    model = tiny_model(Architecture.DECODER_ONLY, n_layers=2)
    model.layers[0]["weights"][Role.WO][:] = 0.0
    model.layers[0]["weights"][Role.WDOWN][:] = 0.0
    tokens = rand_tokens(model, 6, 5, seed=7)
    _, reps = forward_with_hooks(model, tokens)
    assert np.array_equal(reps[1], reps[0])


def test_zeroed_block_scores_zero_importance():
    model = tiny_model(Architecture.DECODER_ONLY, n_layers=3)
    model.layers[1]["weights"][Role.WO][:] = 0.0
    model.layers[1]["weights"][Role.WDOWN][:] = 0.0
    task = SyntheticTask(
        TaskKind.COPY_LAST_TOKEN, sequence_length=6, vocab_size=10,
        train_size=32, val_size=8,
    )
    reps = extract_representations(model, task, sample_count=64, seed=8)
    iv = layer_importance(reps)
    assert iv.scores[1] < 1e-9
    assert 2 not in iv.degenerate_layers


def test_encoder_r0_degenerate_end_to_end():
    model = tiny_model(Architecture.ENCODER_ONLY, n_layers=3)
    task = SyntheticTask(
        TaskKind.COPY_LAST_TOKEN, sequence_length=6, vocab_size=10,
        train_size=32, val_size=8,
    )
    reps = extract_representations(model, task, sample_count=64, seed=9)
    iv = layer_importance(reps)
    assert 1 in iv.degenerate_layers
    assert iv.scores[0] == 1.0


def test_extract_representations_deterministic():
    model = tiny_model(Architecture.DECODER_ONLY)
    task = SyntheticTask(
        TaskKind.MODULAR_SUM, sequence_length=5, vocab_size=10,
        train_size=32, val_size=8,
    )
    a = extract_representations(model, task, sample_count=32, seed=10)
    b = extract_representations(model, task, sample_count=32, seed=10)
    for ma, mb in zip(a.matrices, b.matrices):
        assert np.array_equal(ma.data, mb.data)
    assert a.sample_count == 32
    assert a.architecture is Architecture.DECODER_ONLY


# ---------------------------------------------------------------------------
# Adapter attachment and init behaviour through the model.
# ---------------------------------------------------------------------------


def test_zero_b_init_preserves_logits_exactly():
    model = tiny_model(Architecture.DECODER_ONLY)
    adapted = apply_plan(model, full_plan(model), LoraConfig(rank=2, alpha=4.0))
    tokens = rand_tokens(model, 4, 6, seed=11)
    assert np.max(np.abs(forward(adapted, tokens) - forward(model, tokens))) == 0.0


def test_pissa_init_preserves_logits_to_rounding():
    model = tiny_model(Architecture.DECODER_ONLY)
    config = LoraConfig(rank=2, alpha=2.0, init_mode=InitMode.PISSA)
    adapted = apply_plan(model, full_plan(model), config)
    tokens = rand_tokens(model, 4, 6, seed=12)
    base = forward(model, tokens)
    diff = np.max(np.abs(forward(adapted, tokens) - base))
    assert diff <= 1e-6 * max(1.0, float(np.max(np.abs(base))))


def test_apply_plan_covers_selected_layers_and_targets():
    model = tiny_model(Architecture.DECODER_ONLY, n_layers=4)
    plan = SelectionPlan(
        selected=(2, 4), strategy=Strategy.CKA_IMPORTANCE, n_layers=2,
        excluded_candidates=frozenset(), model_id=model.model_id, n_total_layers=4,
    )
    adapted = apply_plan(model, plan, LoraConfig(rank=2, alpha=4.0))
    keys = adapted.adapter_keys()
    assert {k[0] for k in keys} == {2, 4}
    assert {k[1] for k in keys} == set(Role)
    assert adapted.trainable_parameter_count() == count_trainable(model.spec, 2, 2)


def test_apply_plan_rejects_layer_count_mismatch():
    model = tiny_model(Architecture.DECODER_ONLY, n_layers=2)
    plan = SelectionPlan(
        selected=(1,), strategy=Strategy.FIRST, n_layers=1,
        excluded_candidates=frozenset(), model_id=model.model_id, n_total_layers=5,
    )
    with pytest.raises(ValidationError):
        apply_plan(model, plan, LoraConfig(rank=2, alpha=4.0))


def test_adapter_creation_is_seeded():
    model = tiny_model(Architecture.DECODER_ONLY)
    cfg = LoraConfig(rank=2, alpha=4.0)
    first = apply_plan(model, full_plan(model), cfg, seed=5)
    second = apply_plan(model, full_plan(model), cfg, seed=5)
    third = apply_plan(model, full_plan(model), cfg, seed=6)
    for key in first.adapter_keys():
        assert np.array_equal(first.adapters[key].a, second.adapters[key].a)
    assert any(
        not np.array_equal(first.adapters[key].a, third.adapters[key].a)
        for key in first.adapter_keys()
    )


# ---------------------------------------------------------------------------
# Gradients.
# ---------------------------------------------------------------------------


def _randomize_b(adapted, seed=0, scale=0.1):
    rng = np.random.default_rng(seed)
    for key in adapted.adapter_keys():
        a = adapted.adapters[key]
        a.b += rng.normal(scale=scale, size=a.b.shape)


def test_grad_check_decoder():
    model = tiny_model(Architecture.DECODER_ONLY)
    adapted = apply_plan(model, full_plan(model), LoraConfig(rank=2, alpha=4.0), seed=1)
    _randomize_b(adapted, seed=2)
    tokens = rand_tokens(model, 4, 5, seed=13)
    labels = np.array([1, 2, 3, 4])
    assert grad_check(adapted, tokens, labels) < 1e-4


def test_grad_check_encoder():
    model = tiny_model(Architecture.ENCODER_ONLY)
    adapted = apply_plan(model, full_plan(model), LoraConfig(rank=2, alpha=4.0), seed=1)
    _randomize_b(adapted, seed=3)
    tokens = prepare_tokens(model, rand_tokens(model, 4, 5, seed=14))
    labels = np.array([1, 2, 3, 4])
    assert grad_check(adapted, tokens, labels) < 1e-4


def test_grad_check_pissa():
    model = tiny_model(Architecture.DECODER_ONLY)
    config = LoraConfig(rank=2, alpha=2.0, init_mode=InitMode.PISSA)
    adapted = apply_plan(model, full_plan(model), config)
    tokens = rand_tokens(model, 3, 4, seed=15)
    labels = np.array([1, 2, 3])
    assert grad_check(adapted, tokens, labels) < 1e-4


def test_gradients_deterministic():
    from layerlens.toymodel import _loss_and_grads

    model = tiny_model(Architecture.DECODER_ONLY)
    adapted = apply_plan(model, full_plan(model), LoraConfig(rank=2, alpha=4.0), seed=1)
    _randomize_b(adapted, seed=4)
    tokens = rand_tokens(model, 4, 5, seed=16)
    labels = np.array([1, 2, 3, 4])
    loss1, grads1 = _loss_and_grads(adapted, tokens, labels)
    loss2, grads2 = _loss_and_grads(adapted, tokens, labels)
    assert loss1 == loss2
    for key in grads1:
        assert np.array_equal(grads1[key][0], grads2[key][0])
        assert np.array_equal(grads1[key][1], grads2[key][1])


def test_frozen_weights_affect_loss_but_get_no_gradient():
    from layerlens.toymodel import _loss_and_grads

    model = tiny_model(Architecture.DECODER_ONLY)
    plan = full_plan(model, n=1)
    adapted = apply_plan(model, plan, LoraConfig(rank=2, alpha=4.0), seed=1)
    _randomize_b(adapted, seed=5)
    tokens = rand_tokens(model, 4, 5, seed=17)
    labels = np.array([1, 2, 3, 4])
    _, grads = _loss_and_grads(adapted, tokens, labels)
    assert set(grads) == {(1, role) for role in Role}

    # A frozen entry still moves the loss, so the graph flows through it.
    before = loss_on_batch(adapted, tokens, labels)
    w = model.layers[1]["weights"][Role.WQ]
    w[0, 0] += 1e-3
    after = loss_on_batch(adapted, tokens, labels)
    w[0, 0] -= 1e-3
    assert before != after


# ---------------------------------------------------------------------------
# Training loop.
# ---------------------------------------------------------------------------


def small_task(**over):
    kwargs = dict(
        kind=TaskKind.COPY_LAST_TOKEN, sequence_length=5, vocab_size=8,
        train_size=64, val_size=16, seed=0,
    )
    kwargs.update(over)
    return SyntheticTask(**kwargs)


def test_train_zero_lr_leaves_adapters_untouched():
    model = tiny_model(Architecture.DECODER_ONLY)
    adapted = apply_plan(model, full_plan(model), LoraConfig(rank=2, alpha=4.0), seed=1)
    before = {
        key: (a.b.copy(), a.a.copy()) for key, a in adapted.adapters.items()
    }
    hp = Hyperparameters(steps=5, batch_size=4, lr=0.0, momentum=0.9, seed=0)
    train(adapted, small_task(), hp)
    for key, (b, a) in before.items():
        assert np.array_equal(adapted.adapters[key].b, b)
        assert np.array_equal(adapted.adapters[key].a, a)


def test_train_freezes_base_and_moves_adapters():
    model = tiny_model(Architecture.DECODER_ONLY)
    adapted = apply_plan(model, full_plan(model), LoraConfig(rank=2, alpha=4.0), seed=1)
    frozen = snapshot_frozen_state(adapted)
    hp = Hyperparameters(steps=20, batch_size=8, lr=0.05, momentum=0.9, seed=0)
    report = train(adapted, small_task(), hp)
    assert frozen_state_equal(adapted, frozen)
    moved = any(
        np.abs(adapted.adapters[key].b).max() > 0 for key in adapted.adapter_keys()
    )
    assert moved
    assert len(report.loss_curve) == 20
    assert report.trainable_params == count_trainable(model.spec, 2, model.spec.n_layers)
    assert 0.0 <= report.final_val_accuracy <= 1.0
    assert report.wall_clock_seconds > 0
    assert report.peak_rss_bytes > 0


def test_train_is_deterministic():
    def run():
        model = tiny_model(Architecture.DECODER_ONLY, seed=3)
        adapted = apply_plan(
            model, full_plan(model), LoraConfig(rank=2, alpha=4.0), seed=1
        )
        hp = Hyperparameters(steps=15, batch_size=8, lr=0.05, momentum=0.9, seed=2)
        report = train(adapted, small_task(), hp)
        return report, adapted

    r1, m1 = run()
    r2, m2 = run()
    assert r1.loss_curve == r2.loss_curve
    assert r1.final_val_accuracy == r2.final_val_accuracy
    for key in m1.adapter_keys():
        assert np.array_equal(m1.adapters[key].b, m2.adapters[key].b)
        assert np.array_equal(m1.adapters[key].a, m2.adapters[key].a)


def test_train_learns_copy_task():
    model = build_toy_model(get_preset("toy-decoder"), seed=0)
    plan = full_plan(model)
    adapted = apply_plan(model, plan, LoraConfig(rank=4, alpha=8.0), seed=0)
    task = SyntheticTask(
        TaskKind.COPY_LAST_TOKEN, sequence_length=8, vocab_size=8,
        train_size=256, val_size=64,
    )
    hp = Hyperparameters(steps=150, batch_size=16, lr=0.2, momentum=0.9, seed=0)
    report = train(adapted, task, hp)
    assert report.loss_curve[-1] < report.loss_curve[0]
    assert report.final_val_accuracy > 0.5


def test_train_nonfinite_loss_raises_numerical_error():
    # RMSNorm makes the net scale-invariant, so huge learning rates stall
    # rather than explode; poison a factor directly to hit the guard.
    model = tiny_model(Architecture.DECODER_ONLY)
    adapted = apply_plan(model, full_plan(model), LoraConfig(rank=2, alpha=4.0), seed=1)
    key = adapted.adapter_keys()[0]
    adapted.adapters[key].a[0, 0] = np.inf
    hp = Hyperparameters(steps=3, batch_size=4, lr=0.1, momentum=0.9, seed=0)
    with np.errstate(invalid="ignore"), pytest.raises(NumericalError):
        train(adapted, small_task(), hp)


def test_early_stop_cuts_run_short_and_stays_deterministic():
    def run():
        model = tiny_model(Architecture.DECODER_ONLY, seed=3)
        adapted = apply_plan(
            model, full_plan(model), LoraConfig(rank=2, alpha=4.0), seed=1
        )
        hp = Hyperparameters(
            steps=4000, batch_size=8, lr=0.1, momentum=0.9, seed=2, stop_loss=3.5
        )
        return train(adapted, small_task(), hp)

    r1, r2 = run(), run()
    assert len(r1.loss_curve) < 4000
    assert len(r1.loss_curve) >= 50
    assert r1.loss_curve == r2.loss_curve
    assert np.mean(r1.loss_curve[-50:]) < 3.5


def test_no_early_stop_without_threshold():
    model = tiny_model(Architecture.DECODER_ONLY)
    adapted = apply_plan(model, full_plan(model), LoraConfig(rank=2, alpha=4.0), seed=1)
    hp = Hyperparameters(steps=60, batch_size=4, lr=0.0, momentum=0.0, seed=0)
    report = train(adapted, small_task(), hp)
    assert len(report.loss_curve) == 60


def test_float32_model_trains_and_matches_architecture():
    model = tiny_model_f32 = ToyModel(
        tiny_spec(Architecture.DECODER_ONLY), rng_seed=0, max_seq_len=8,
        dtype=np.float32,
    )
    adapted = apply_plan(model, full_plan(model), LoraConfig(rank=2, alpha=4.0), seed=1)
    assert adapted.adapters[adapted.adapter_keys()[0]].b.dtype == np.float32
    hp = Hyperparameters(steps=10, batch_size=4, lr=0.05, momentum=0.9, seed=0)
    report = train(adapted, small_task(), hp)
    assert len(report.loss_curve) == 10
    with pytest.raises(ValidationError):
        grad_check(adapted, rand_tokens(model, 2, 4), np.array([1, 2]))


def test_float32_forward_tracks_float64():
    spec = tiny_spec(Architecture.DECODER_ONLY)
    m64 = ToyModel(spec, rng_seed=4, max_seq_len=8)
    m32 = ToyModel(spec, rng_seed=4, max_seq_len=8, dtype=np.float32)
    tokens = rand_tokens(m64, 3, 5, seed=8)
    out64, out32 = forward(m64, tokens), forward(m32, tokens)
    assert out32.dtype == np.float32
    assert np.max(np.abs(out64 - out32)) < 1e-3


def test_train_rejects_oversized_task():
    model = tiny_model(Architecture.DECODER_ONLY)  # max_seq_len 8
    adapted = apply_plan(model, full_plan(model), LoraConfig(rank=2, alpha=4.0))
    long_task = small_task(sequence_length=9, train_size=16, val_size=4)
    with pytest.raises(ValidationError):
        train(adapted, long_task, Hyperparameters(steps=1, batch_size=2))


def test_train_rejects_vocab_overflow():
    model = tiny_model(Architecture.DECODER_ONLY)  # vocab 11
    adapted = apply_plan(model, full_plan(model), LoraConfig(rank=2, alpha=4.0))
    wide_task = small_task(vocab_size=11, train_size=16, val_size=4)
    with pytest.raises(ValidationError):
        train(adapted, wide_task, Hyperparameters(steps=1, batch_size=2))


def test_evaluate_accuracy_counts_argmax_hits():
    model = tiny_model(Architecture.DECODER_ONLY)
    task = small_task()
    data = task.generate()
    acc = evaluate_accuracy(model, task, data.val_tokens, data.val_labels)
    manual = 0
    logits = forward(model, prepare_tokens(model, data.val_tokens))
    manual = float(np.mean(np.argmax(logits, axis=1) == data.val_labels))
    assert acc == manual


# ---------------------------------------------------------------------------
# Input validation.
# ---------------------------------------------------------------------------


def test_token_validation():
    model = tiny_model(Architecture.DECODER_ONLY)
    with pytest.raises(ValidationError):
        forward(model, np.array([1, 2, 3]))  # 1-D
    with pytest.raises(ValidationError):
        forward(model, np.zeros((2, 3), dtype=float))  # non-integer
    with pytest.raises(ValidationError):
        forward(model, np.array([[1, 2, 99]]))  # out of vocab
    with pytest.raises(ValidationError):
        forward(model, np.array([[-1, 2, 3]]))
    with pytest.raises(ValidationError):
        forward(model, np.ones((1, 9), dtype=int))  # longer than max_seq_len


def test_build_toy_model_rejects_dimensions_only_presets():
    with pytest.raises(ValidationError):
        build_toy_model(get_preset("roberta-base-glue"), seed=0)


def test_hyperparameter_validation():
    with pytest.raises(ValidationError):
        Hyperparameters(steps=-1)
    with pytest.raises(ValidationError):
        Hyperparameters(batch_size=0)
    with pytest.raises(ValidationError):
        Hyperparameters(lr=-0.1)
    with pytest.raises(ValidationError):
        Hyperparameters(momentum=1.0)


def test_model_seeding():
    a = tiny_model(Architecture.DECODER_ONLY, seed=5)
    b = tiny_model(Architecture.DECODER_ONLY, seed=5)
    c = tiny_model(Architecture.DECODER_ONLY, seed=6)
    assert np.array_equal(a.emb, b.emb)
    assert np.array_equal(
        a.layers[0]["weights"][Role.WQ], b.layers[0]["weights"][Role.WQ]
    )
    assert not np.array_equal(a.emb, c.emb)
