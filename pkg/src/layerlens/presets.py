"""Named architecture presets.

The 7B-class and base-encoder presets carry dimensions and adapter target
sets only, for parameter accounting; no weights exist for them. The two
``toy-*`` presets describe the built-in desk-scale transformers and are the
only ones that can be instantiated, trained, and probed for
representations.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ValidationError
from .importance import Architecture
from .lora import ALL_ROLES, ENCODER_ROLES, ArchitectureSpec, Role


@dataclass(frozen=True)
class Preset:
    """An ArchitectureSpec bundled with its default adapter hyperparameters."""

    name: str
    spec: ArchitectureSpec
    rank: int
    alpha: float
    weights_available: bool


def _preset(name, *, rank, alpha, weights_available=False, **spec_kw) -> Preset:
    return Preset(
        name=name,
        spec=ArchitectureSpec(**spec_kw),
        rank=rank,
        alpha=alpha,
        weights_available=weights_available,
    )


PRESETS = {
    p.name: p
    for p in (
        _preset(
            "roberta-base-glue",
            n_layers=12,
            d_model=768,
            n_heads=12,
            d_ff=3072,
            vocab_size=50265,
            architecture=Architecture.ENCODER_ONLY,
            lora_targets=frozenset({Role.WQ, Role.WV}),
            rank=8,
            alpha=16,
        ),
        _preset(
            "deberta-v3-base",
            n_layers=12,
            d_model=768,
            n_heads=12,
            d_ff=3072,
            vocab_size=128100,
            architecture=Architecture.ENCODER_ONLY,
            lora_targets=ENCODER_ROLES,
            rank=8,
            alpha=16,
        ),
        _preset(
            "llama2-7b-math",
            n_layers=32,
            d_model=4096,
            n_heads=32,
            d_ff=11008,
            vocab_size=32000,
            architecture=Architecture.DECODER_ONLY,
            lora_targets=ALL_ROLES,
            rank=128,
            alpha=128,
        ),
        _preset(
            "mistral-7b",
            n_layers=32,
            d_model=4096,
            n_heads=32,
            n_kv_heads=8,
            d_ff=14336,
            vocab_size=32000,
            architecture=Architecture.DECODER_ONLY,
            lora_targets=ALL_ROLES,
            rank=128,
            alpha=128,
        ),
        _preset(
            "gemma-7b",
            n_layers=28,
            d_model=3072,
            n_heads=16,
            head_dim=256,
            d_ff=24576,
            vocab_size=256000,
            architecture=Architecture.DECODER_ONLY,
            lora_targets=ALL_ROLES,
            rank=128,
            alpha=128,
        ),
        _preset(
            "toy-encoder",
            n_layers=8,
            d_model=64,
            n_heads=4,
            d_ff=256,
            vocab_size=128,
            architecture=Architecture.ENCODER_ONLY,
            lora_targets=ENCODER_ROLES,
            rank=4,
            alpha=8,
            weights_available=True,
        ),
        _preset(
            "toy-decoder",
            n_layers=8,
            d_model=64,
            n_heads=4,
            d_ff=256,
            vocab_size=128,
            architecture=Architecture.DECODER_ONLY,
            lora_targets=ALL_ROLES,
            rank=4,
            alpha=8,
            weights_available=True,
        ),
    )
}


def preset_names() -> tuple:
    return tuple(PRESETS)


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValidationError(
            f"unknown preset {name!r}; available: {', '.join(PRESETS)}"
        ) from None
