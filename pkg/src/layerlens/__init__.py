"""CKA-guided layer selection for LoRA-style fine-tuning.

The pipeline: extract per-layer representations, score adjacent-layer CKA
similarity, rank layers by importance, place low-rank adapters on the top
N, and fine-tune with everything else frozen. Built-in desk-scale
transformers make the whole loop runnable on one CPU core.
"""

from .errors import FormatError, LayerlensError, NumericalError, ValidationError
from .importance import (
    Architecture,
    ImportanceVector,
    RepresentationSet,
    SelectionPlan,
    Strategy,
    layer_importance,
    per_layer_cka,
    select_by_heuristic,
    select_by_importance,
)
from .lora import (
    AdaptedWeight,
    InitMode,
    LoraAdapter,
    LoraConfig,
    Role,
    count_trainable,
    lora_forward,
    merge_adapter,
    pissa_init,
    zero_b_adapter,
)
from .presets import PRESETS, ArchitectureSpec, Preset, get_preset, preset_names
from .repio import read_representation_set, write_representation_set
from .reports import (
    PlanReport,
    ScoreReport,
    TrainRunReport,
    read_plan_doc,
    read_report,
    read_score_doc,
    read_train_doc,
    train_run_report,
    write_report,
    write_timing_sidecar,
)
from .similarity import (
    CkaResult,
    GramMatrix,
    Kernel,
    RepresentationMatrix,
    TokenRule,
    cka,
    hsic,
    linear_gram,
)
from .tasks import SyntheticTask, TaskKind
from .toymodel import (
    AdaptedModel,
    Hyperparameters,
    ToyModel,
    TrainReport,
    apply_plan,
    build_toy_model,
    evaluate_accuracy,
    extract_representations,
    grad_check,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptedModel",
    "AdaptedWeight",
    "Architecture",
    "ArchitectureSpec",
    "CkaResult",
    "FormatError",
    "GramMatrix",
    "Hyperparameters",
    "ImportanceVector",
    "InitMode",
    "Kernel",
    "LayerlensError",
    "LoraAdapter",
    "LoraConfig",
    "NumericalError",
    "PRESETS",
    "PlanReport",
    "Preset",
    "RepresentationMatrix",
    "RepresentationSet",
    "Role",
    "ScoreReport",
    "SelectionPlan",
    "Strategy",
    "SyntheticTask",
    "TaskKind",
    "TokenRule",
    "ToyModel",
    "TrainReport",
    "TrainRunReport",
    "ValidationError",
    "apply_plan",
    "build_toy_model",
    "cka",
    "count_trainable",
    "evaluate_accuracy",
    "extract_representations",
    "get_preset",
    "grad_check",
    "hsic",
    "layer_importance",
    "linear_gram",
    "lora_forward",
    "merge_adapter",
    "per_layer_cka",
    "pissa_init",
    "preset_names",
    "read_plan_doc",
    "read_report",
    "read_representation_set",
    "read_score_doc",
    "read_train_doc",
    "select_by_heuristic",
    "select_by_importance",
    "train",
    "train_run_report",
    "write_report",
    "write_representation_set",
    "write_timing_sidecar",
    "zero_b_adapter",
]
