"""Command line pipeline: extract, score, select, finetune, report.

Each subcommand is a thin wrapper over the library and is deterministic
for a fixed seed: re-running with identical inputs rewrites identical
report documents (timing measurements go to a ``.timing`` sidecar).

Exit codes: 0 success, 1 validation or usage error, 2 runtime or
numerical failure. Errors print one structured line to stderr.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, NumericalError, ValidationError
from .importance import (
    Strategy,
    layer_importance,
    per_layer_cka,
    select_by_heuristic,
    select_by_importance,
)
from .lora import InitMode, LoraConfig, count_trainable
from .presets import PRESETS
from .repio import read_representation_set, write_representation_set
from .reports import (
    PlanReport,
    ScoreReport,
    build_plan_doc,
    build_score_doc,
    build_train_doc,
    delta_table,
    read_plan_doc,
    read_report,
    read_score_doc,
    read_train_doc,
    scatter_table,
    score_curve_table,
    table_to_csv,
    table_to_kv,
    train_run_report,
    write_report,
    write_timing_sidecar,
)
from .tasks import SyntheticTask, TaskKind
from .toymodel import (
    Hyperparameters,
    apply_plan,
    build_toy_model,
    extract_representations,
    train,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

_TASKS = {t.value: t for t in TaskKind}
_STRATEGIES = {s.value: s for s in Strategy}
_INITS = {m.value: m for m in InitMode}


@dataclass(frozen=True)
class RunConfig:
    """One validated CLI invocation; every field is checked before use."""

    command: str
    preset: str | None = None
    task: TaskKind = TaskKind.COPY_LAST_TOKEN
    samples: int = 256
    n_layers: int | None = None
    strategy: Strategy = Strategy.CKA_IMPORTANCE
    rank: int | None = None
    alpha: float | None = None
    init_mode: InitMode = InitMode.ZERO_B
    seed: int = 0
    steps: int = 2000
    in_paths: tuple = ()
    out: str | None = None
    fmt: str = "csv"

    def __post_init__(self):
        if self.command not in _HANDLERS:
            raise ValidationError(f"unknown subcommand {self.command!r}")
        if self.preset is not None and self.preset not in PRESETS:
            raise ValidationError(
                f"unknown preset {self.preset!r}; choose from {', '.join(sorted(PRESETS))}"
            )
        if self.samples < 2:
            raise ValidationError(f"--samples must be at least 2, got {self.samples}")
        if self.n_layers is not None and self.n_layers < 1:
            raise ValidationError(f"--layers must be at least 1, got {self.n_layers}")
        if self.rank is not None and self.rank < 1:
            raise ValidationError(f"--rank must be at least 1, got {self.rank}")
        if self.alpha is not None and not (self.alpha > 0 and np.isfinite(self.alpha)):
            raise ValidationError(f"--alpha must be a positive finite number, got {self.alpha}")
        if self.seed < 0:
            raise ValidationError(f"--seed must be non-negative, got {self.seed}")
        if self.steps < 0:
            raise ValidationError(f"--steps must be non-negative, got {self.steps}")
        if self.fmt not in ("csv", "kv"):
            raise ValidationError(f"--format must be csv or kv, got {self.fmt!r}")
        for path in self.in_paths:
            if not path:
                raise ValidationError("--in contains an empty path")
        if self.out is not None and not self.out:
            raise ValidationError("--out must not be empty")


class _Parser(argparse.ArgumentParser):
    # argparse wants to exit(2) on bad flags; route through the
    # validation-error path so unknown flags land on exit code 1.
    def error(self, message):
        raise ValidationError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="layerlens",
        description="CKA layer scoring and adapter placement for LoRA fine-tuning.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand",
                               parser_class=_Parser)

    p = sub.add_parser("extract",
                       help="run a built-in toy model and dump residual-stream representations")
    p.add_argument("--preset", required=True, help="preset name (needs built-in weights)")
    p.add_argument("--task", choices=sorted(_TASKS), default="copy",
                   help="synthetic task supplying input sequences")
    p.add_argument("--samples", type=int, default=256, help="number of probe sequences")
    p.add_argument("--seed", type=int, default=0,
                   help="pipeline seed; model weights use it directly, sampling uses seed+1")
    p.add_argument("--out", required=True, help="output representation container path")

    p = sub.add_parser("score",
                       help="score per-layer CKA and importance from a representation dump")
    p.add_argument("--in", dest="in_paths", required=True,
                   help="representation container to score")
    p.add_argument("--out", required=True, help="output score report path")

    for name in ("select", "plan"):
        p = sub.add_parser(name,
                           help="choose N layers and write an adapter placement plan")
        p.add_argument("--preset", required=True, help="preset naming the target architecture")
        p.add_argument("--layers", dest="n_layers", type=int, required=True,
                       help="number of layers to adapt (N)")
        p.add_argument("--strategy", choices=sorted(_STRATEGIES), default="cka")
        p.add_argument("--rank", type=int, default=None, help="adapter rank (preset default)")
        p.add_argument("--alpha", type=float, default=None, help="adapter scale (preset default)")
        p.add_argument("--in", dest="in_paths", default=None,
                       help="score report (required for --strategy cka)")
        p.add_argument("--out", required=True, help="output plan document path")

    p = sub.add_parser("finetune",
                       help="fine-tune adapters from a plan on a built-in toy model")
    p.add_argument("--preset", required=True, help="preset name (needs built-in weights)")
    p.add_argument("--in", dest="in_paths", required=True, help="plan document")
    p.add_argument("--task", choices=sorted(_TASKS), default="copy")
    p.add_argument("--rank", type=int, default=None, help="override the plan's rank")
    p.add_argument("--alpha", type=float, default=None, help="override the plan's alpha")
    p.add_argument("--init", dest="init_mode", choices=sorted(_INITS), default="zero")
    p.add_argument("--steps", type=int, default=2000, help="training step budget")
    p.add_argument("--seed", type=int, default=0, help="seed for weights, adapters, and batches")
    p.add_argument("--out", required=True, help="output train report path")

    p = sub.add_parser("report",
                       help="render report documents to plain data tables")
    p.add_argument("--in", dest="in_paths", required=True,
                   help="comma-separated report documents (one score, or train runs)")
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--format", dest="fmt", choices=("csv", "kv"), default="csv")

    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    command = "select" if args.command == "plan" else args.command
    raw_in = getattr(args, "in_paths", None)
    in_paths = tuple(p for p in raw_in.split(",") if p) if raw_in else ()
    fields = {"command": command, "in_paths": in_paths}
    if getattr(args, "preset", None) is not None:
        fields["preset"] = args.preset
    if getattr(args, "task", None) is not None:
        fields["task"] = _TASKS[args.task]
    if getattr(args, "samples", None) is not None:
        fields["samples"] = args.samples
    if getattr(args, "n_layers", None) is not None:
        fields["n_layers"] = args.n_layers
    if getattr(args, "strategy", None) is not None:
        fields["strategy"] = _STRATEGIES[args.strategy]
    if getattr(args, "rank", None) is not None:
        fields["rank"] = args.rank
    if getattr(args, "alpha", None) is not None:
        fields["alpha"] = args.alpha
    if getattr(args, "init_mode", None) is not None:
        fields["init_mode"] = _INITS[args.init_mode]
    if getattr(args, "seed", None) is not None:
        fields["seed"] = args.seed
    if getattr(args, "steps", None) is not None:
        fields["steps"] = args.steps
    if getattr(args, "out", None) is not None:
        fields["out"] = args.out
    if getattr(args, "fmt", None) is not None:
        fields["fmt"] = args.fmt
    return RunConfig(**fields)


# ---------------------------------------------------------------------------
# Subcommands.
# ---------------------------------------------------------------------------


def _toy_preset(name: str):
    preset = PRESETS[name]
    if not preset.weights_available:
        raise ValidationError(
            f"preset {name!r} declares no built-in weights; extract and finetune "
            "need one of the toy presets"
        )
    return preset


def _single_input(cfg: RunConfig, what: str) -> str:
    if len(cfg.in_paths) != 1:
        raise ValidationError(f"{cfg.command} needs exactly one --in {what}")
    return cfg.in_paths[0]


def cmd_extract(cfg: RunConfig) -> int:
    preset = _toy_preset(cfg.preset)
    model = build_toy_model(preset, seed=cfg.seed)
    task = SyntheticTask(cfg.task, seed=cfg.seed)
    reps = extract_representations(model, task, cfg.samples, seed=cfg.seed + 1)
    write_representation_set(reps, cfg.out, dataset_id=f"{cfg.task.value}-seed{cfg.seed}")
    print(f"wrote {cfg.out} ({len(reps.matrices)} matrices, {reps.sample_count} samples)")
    return EXIT_OK


def _score_from_set(reps) -> ScoreReport:
    iv = layer_importance(reps)
    return ScoreReport(
        model_id=reps.model_id,
        architecture=reps.architecture,
        token_rule=reps.matrices[0].token_rule,
        sample_count=reps.sample_count,
        layer_count=len(iv.scores),
        importance=iv,
        cka=per_layer_cka(reps),
    )


def cmd_score(cfg: RunConfig) -> int:
    reps = read_representation_set(_single_input(cfg, "representation container"))
    score = _score_from_set(reps)
    write_report(build_score_doc(score), cfg.out)
    print(
        f"model={score.model_id} architecture={score.architecture.value} "
        f"samples={score.sample_count} layers={score.layer_count}"
    )
    print(f"{'layer':>5}  {'cka':>12}  {'importance':>12}  {'degenerate':>10}")
    for idx, (imp, res) in enumerate(zip(score.importance.scores, score.cka), start=1):
        flag = "yes" if res.degenerate else "no"
        print(f"{idx:>5}  {res.value:>12.6f}  {imp:>12.6f}  {flag:>10}")
    return EXIT_OK


def cmd_select(cfg: RunConfig) -> int:
    preset = PRESETS[cfg.preset]
    spec = preset.spec
    if cfg.n_layers is None:
        raise ValidationError("select needs --layers")
    rank = preset.rank if cfg.rank is None else cfg.rank
    alpha = preset.alpha if cfg.alpha is None else cfg.alpha
    if cfg.strategy is Strategy.CKA_IMPORTANCE:
        if len(cfg.in_paths) != 1:
            raise ValidationError("--strategy cka needs --in with one score report")
        score = read_score_doc(read_report(cfg.in_paths[0]))
        if score.layer_count != spec.n_layers:
            raise ValidationError(
                f"score report covers {score.layer_count} layers but preset "
                f"{cfg.preset!r} has {spec.n_layers}"
            )
        if score.architecture is not spec.architecture:
            raise ValidationError(
                f"score report architecture {score.architecture.value} does not match "
                f"preset {cfg.preset!r} ({spec.architecture.value})"
            )
        plan = select_by_importance(score.importance, cfg.n_layers, model_id=score.model_id)
    else:
        if cfg.in_paths:
            raise ValidationError("heuristic strategies take no --in report")
        plan = select_by_heuristic(cfg.strategy, spec.n_layers, cfg.n_layers,
                                   model_id=preset.name)
    report = PlanReport(
        plan=plan,
        preset=cfg.preset,
        rank=rank,
        alpha=float(alpha),
        plan_trainable_params=count_trainable(spec, rank, plan.n_layers),
        all_layers_trainable_params=count_trainable(spec, rank, spec.n_layers),
    )
    write_report(build_plan_doc(report), cfg.out)
    layers = " ".join(str(i) for i in plan.selected)
    print(
        f"selected layers: {layers} (strategy={plan.strategy.value}, N={plan.n_layers}, "
        f"trainable {report.plan_trainable_params} vs "
        f"{report.all_layers_trainable_params} all-layers)"
    )
    return EXIT_OK


def cmd_finetune(cfg: RunConfig) -> int:
    preset = _toy_preset(cfg.preset)
    plan_report = read_plan_doc(read_report(_single_input(cfg, "plan document")))
    if plan_report.preset != cfg.preset:
        raise ValidationError(
            f"plan was built for preset {plan_report.preset!r}, not {cfg.preset!r}"
        )
    rank = plan_report.rank if cfg.rank is None else cfg.rank
    alpha = plan_report.alpha if cfg.alpha is None else cfg.alpha
    model = build_toy_model(preset, seed=cfg.seed, dtype=np.float32)
    adapted = apply_plan(
        model, plan_report.plan,
        LoraConfig(rank=rank, alpha=float(alpha), init_mode=cfg.init_mode),
        seed=cfg.seed,
    )
    task = SyntheticTask(cfg.task, seed=cfg.seed)
    raw = train(adapted, task, Hyperparameters(steps=cfg.steps, seed=cfg.seed))
    write_report(build_train_doc(train_run_report(raw, preset=cfg.preset)), cfg.out)
    write_timing_sidecar(cfg.out, raw.wall_clock_seconds, raw.peak_rss_bytes)
    print(
        f"steps={len(raw.loss_curve)} final_train_loss={raw.final_train_loss:.6f} "
        f"val_accuracy={raw.final_val_accuracy:.4f} trainable={raw.trainable_params}"
    )
    return EXIT_OK


def cmd_report(cfg: RunConfig) -> int:
    if not cfg.in_paths:
        raise ValidationError("report needs at least one --in document")
    docs = [read_report(p) for p in cfg.in_paths]
    kinds = {d.kind for d in docs}
    tables = []
    if kinds == {"score"}:
        if len(docs) != 1:
            raise ValidationError("report renders one score document at a time")
        tables.append(score_curve_table(read_score_doc(docs[0])))
    elif kinds == {"train"}:
        runs = [read_train_doc(d) for d in docs]
        tables.append(scatter_table(runs))
        try:
            tables.append(delta_table(runs))
        except ValidationError:
            print("delta: skipped (no all-layer baseline among inputs)")
    else:
        raise ValidationError(
            f"report renders score or train documents, got kinds {sorted(kinds)}"
        )
    render = table_to_csv if cfg.fmt == "csv" else table_to_kv
    for table in tables:
        path = f"{cfg.out}.{table.name}.{cfg.fmt}"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(render(table))
        print(f"wrote {path}")
    return EXIT_OK


_HANDLERS = {
    "extract": cmd_extract,
    "score": cmd_score,
    "select": cmd_select,
    "finetune": cmd_finetune,
    "report": cmd_report,
}


def entrypoint(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = config_from_args(args)
        return _HANDLERS[cfg.command](cfg)
    except NumericalError as exc:
        _fail(exc)
        return EXIT_RUNTIME
    except (ValidationError, FormatError) as exc:
        _fail(exc)
        return EXIT_VALIDATION
    except OSError as exc:
        _fail(exc)
        return EXIT_RUNTIME


def _fail(exc) -> None:
    print(f"layerlens: {type(exc).__name__}: {exc}", file=sys.stderr)


def main() -> None:
    raise SystemExit(entrypoint())
