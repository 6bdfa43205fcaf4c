"""Report documents: line-oriented UTF-8 key-value plus CSV blocks.

Three kinds exist: ``score`` (per-layer CKA and importance), ``plan``
(a layer selection with parameter accounting), and ``train`` (one
fine-tuning run). Every document is a pure function of its inputs, floats
are serialized with repr (shortest round-trip form), and wall-clock or
memory measurements go to a ``<path>.timing`` sidecar, so re-running a
seeded pipeline reproduces the main files byte for byte.

Layout::

    layerlens-report=1
    kind=score
    key=value
    ...

    [section]
    col_a,col_b
    1,0.25
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import FormatError, ValidationError
from .importance import (
    Architecture,
    ImportanceVector,
    SelectionPlan,
    Strategy,
)
from .lora import InitMode
from .similarity import CkaResult, TokenRule

REPORT_MAGIC = "layerlens-report"
REPORT_VERSION = 1


# ---------------------------------------------------------------------------
# Generic document model.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReportSection:
    name: str
    header: tuple
    rows: tuple


@dataclass(frozen=True)
class ReportDoc:
    kind: str
    scalars: tuple  # ordered (key, value) pairs, values already strings
    sections: tuple

    def scalar(self, key: str) -> str:
        for k, v in self.scalars:
            if k == key:
                return v
        raise FormatError(f"report is missing required key {key!r}")

    def section(self, name: str) -> ReportSection:
        for s in self.sections:
            if s.name == name:
                return s
        raise FormatError(f"report is missing required section [{name}]")


def fmt_value(value) -> str:
    """Canonical string form; floats use repr for byte-stable round-trips."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        if "\n" in value or "=" in value or "," in value:
            raise ValidationError(f"report value may not contain '=', ',' or newlines: {value!r}")
        return value
    raise ValidationError(f"unsupported report value type {type(value).__name__}")


def parse_float(text: str, what: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise FormatError(f"{what}: expected a float, got {text!r}") from exc


def parse_int(text: str, what: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise FormatError(f"{what}: expected an integer, got {text!r}") from exc


def parse_bool(text: str, what: str) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise FormatError(f"{what}: expected true/false, got {text!r}")


def parse_layer_list(text: str, what: str) -> tuple:
    if not text:
        return ()
    return tuple(parse_int(part, what) for part in text.split(" "))


def dump_report(doc: ReportDoc) -> str:
    lines = [f"{REPORT_MAGIC}={REPORT_VERSION}", f"kind={doc.kind}"]
    for key, value in doc.scalars:
        if "=" in key or "\n" in key or key.startswith("["):
            raise ValidationError(f"bad report key {key!r}")
        if "\n" in value:
            raise ValidationError(f"report value may not contain newlines: {value!r}")
        lines.append(f"{key}={value}")
    for section in doc.sections:
        lines.append("")
        lines.append(f"[{section.name}]")
        lines.append(",".join(section.header))
        for row in section.rows:
            if len(row) != len(section.header):
                raise ValidationError(
                    f"section [{section.name}] row width {len(row)} != header {len(section.header)}"
                )
            for cell in row:
                if "," in cell or "\n" in cell:
                    raise ValidationError(f"CSV cell may not contain commas or newlines: {cell!r}")
            lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> ReportDoc:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError("empty report document")
    first = lines[0]
    if "=" not in first:
        raise FormatError("first line must be the report header")
    magic, _, version = first.partition("=")
    if magic != REPORT_MAGIC:
        raise FormatError(f"not a report document (header {first!r})")
    if parse_int(version, "report version") != REPORT_VERSION:
        raise FormatError(f"unsupported report version {version!r}")

    scalars = []
    sections = []
    i = 1
    # Scalar block: key=value until a blank line or EOF.
    while i < len(lines) and lines[i] != "":
        line = lines[i]
        if "=" not in line:
            raise FormatError(f"malformed scalar line {line!r}")
        key, _, value = line.partition("=")
        if not key:
            raise FormatError(f"empty key in line {line!r}")
        scalars.append((key, value))
        i += 1
    # Section blocks.
    while i < len(lines):
        if lines[i] == "":
            i += 1
            continue
        head = lines[i]
        if not (head.startswith("[") and head.endswith("]") and len(head) > 2):
            raise FormatError(f"expected a [section] line, got {head!r}")
        name = head[1:-1]
        i += 1
        if i >= len(lines) or lines[i] == "":
            raise FormatError(f"section [{name}] has no header row")
        header = tuple(lines[i].split(","))
        i += 1
        rows = []
        while i < len(lines) and lines[i] != "":
            cells = tuple(lines[i].split(","))
            if len(cells) != len(header):
                raise FormatError(
                    f"section [{name}] row has {len(cells)} cells, header has {len(header)}"
                )
            rows.append(cells)
            i += 1
        sections.append(ReportSection(name, header, tuple(rows)))

    pairs = dict(scalars)
    if len(pairs) != len(scalars):
        raise FormatError("duplicate keys in report scalars")
    if "kind" not in pairs:
        raise FormatError("report is missing the kind key")
    kind = pairs.pop("kind")
    rest = tuple((k, v) for k, v in scalars if k != "kind")
    return ReportDoc(kind=kind, scalars=rest, sections=tuple(sections))


# ---------------------------------------------------------------------------
# Score reports.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScoreReport:
    model_id: str
    architecture: Architecture
    token_rule: TokenRule
    sample_count: int
    layer_count: int
    importance: ImportanceVector
    cka: tuple  # CkaResult per layer, index i -> layer i+1


def build_score_doc(score: ScoreReport) -> ReportDoc:
    iv = score.importance
    scalars = (
        ("model_id", fmt_value(score.model_id)),
        ("architecture", score.architecture.value),
        ("token_rule", score.token_rule.value),
        ("sample_count", fmt_value(score.sample_count)),
        ("layer_count", fmt_value(score.layer_count)),
        ("degenerate_layers", " ".join(str(i) for i in sorted(iv.degenerate_layers))),
    )
    rows = []
    for idx, (imp, res) in enumerate(zip(iv.scores, score.cka), start=1):
        rows.append(
            (
                str(idx),
                repr(res.value),
                repr(imp),
                fmt_value(res.degenerate),
                repr(res.hsic_xy),
                repr(res.hsic_xx),
                repr(res.hsic_yy),
            )
        )
    section = ReportSection(
        "layers",
        ("layer", "cka", "importance", "degenerate", "hsic_xy", "hsic_xx", "hsic_yy"),
        tuple(rows),
    )
    return ReportDoc(kind="score", scalars=scalars, sections=(section,))


def read_score_doc(doc: ReportDoc) -> ScoreReport:
    if doc.kind != "score":
        raise FormatError(f"expected a score report, got kind={doc.kind!r}")
    architecture = _parse_enum(Architecture, doc.scalar("architecture"), "architecture")
    token_rule = _parse_enum(TokenRule, doc.scalar("token_rule"), "token_rule")
    layer_count = parse_int(doc.scalar("layer_count"), "layer_count")
    degenerate = frozenset(parse_layer_list(doc.scalar("degenerate_layers"), "degenerate_layers"))
    section = doc.section("layers")
    if len(section.rows) != layer_count:
        raise FormatError(
            f"layer_count={layer_count} but [layers] has {len(section.rows)} rows"
        )
    col = {name: i for i, name in enumerate(section.header)}
    for needed in ("layer", "cka", "importance", "degenerate", "hsic_xy", "hsic_xx", "hsic_yy"):
        if needed not in col:
            raise FormatError(f"[layers] section is missing column {needed!r}")
    scores = []
    results = []
    row_degenerate = set()
    for idx, row in enumerate(section.rows, start=1):
        if parse_int(row[col["layer"]], "layer") != idx:
            raise FormatError(f"[layers] rows out of order at row {idx}")
        scores.append(parse_float(row[col["importance"]], "importance"))
        flag = parse_bool(row[col["degenerate"]], "degenerate")
        if flag:
            row_degenerate.add(idx)
        results.append(
            CkaResult(
                value=parse_float(row[col["cka"]], "cka"),
                degenerate=flag,
                hsic_xy=parse_float(row[col["hsic_xy"]], "hsic_xy"),
                hsic_xx=parse_float(row[col["hsic_xx"]], "hsic_xx"),
                hsic_yy=parse_float(row[col["hsic_yy"]], "hsic_yy"),
            )
        )
    if row_degenerate != set(degenerate):
        raise FormatError("degenerate_layers disagrees with the [layers] flags")
    importance = ImportanceVector(
        scores=tuple(scores), degenerate_layers=degenerate, architecture=architecture
    )
    return ScoreReport(
        model_id=doc.scalar("model_id"),
        architecture=architecture,
        token_rule=token_rule,
        sample_count=parse_int(doc.scalar("sample_count"), "sample_count"),
        layer_count=layer_count,
        importance=importance,
        cka=tuple(results),
    )


# ---------------------------------------------------------------------------
# Plan reports.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlanReport:
    plan: SelectionPlan
    preset: str
    rank: int
    alpha: float
    plan_trainable_params: int
    all_layers_trainable_params: int


def build_plan_doc(report: PlanReport) -> ReportDoc:
    plan = report.plan
    scalars = (
        ("model_id", fmt_value(plan.model_id)),
        ("preset", fmt_value(report.preset)),
        ("strategy", plan.strategy.value),
        ("n_layers", fmt_value(plan.n_layers)),
        ("n_total_layers", fmt_value(plan.n_total_layers)),
        ("selected", " ".join(str(i) for i in plan.selected)),
        ("excluded", " ".join(str(i) for i in sorted(plan.excluded_candidates))),
        ("rank", fmt_value(report.rank)),
        ("alpha", fmt_value(float(report.alpha))),
        ("plan_trainable_params", fmt_value(report.plan_trainable_params)),
        ("all_layers_trainable_params", fmt_value(report.all_layers_trainable_params)),
    )
    return ReportDoc(kind="plan", scalars=scalars, sections=())


def read_plan_doc(doc: ReportDoc) -> PlanReport:
    if doc.kind != "plan":
        raise FormatError(f"expected a plan report, got kind={doc.kind!r}")
    plan = SelectionPlan(
        selected=parse_layer_list(doc.scalar("selected"), "selected"),
        strategy=_parse_enum(Strategy, doc.scalar("strategy"), "strategy"),
        n_layers=parse_int(doc.scalar("n_layers"), "n_layers"),
        excluded_candidates=frozenset(parse_layer_list(doc.scalar("excluded"), "excluded")),
        model_id=doc.scalar("model_id"),
        n_total_layers=parse_int(doc.scalar("n_total_layers"), "n_total_layers"),
    )
    return PlanReport(
        plan=plan,
        preset=doc.scalar("preset"),
        rank=parse_int(doc.scalar("rank"), "rank"),
        alpha=parse_float(doc.scalar("alpha"), "alpha"),
        plan_trainable_params=parse_int(
            doc.scalar("plan_trainable_params"), "plan_trainable_params"
        ),
        all_layers_trainable_params=parse_int(
            doc.scalar("all_layers_trainable_params"), "all_layers_trainable_params"
        ),
    )


# ---------------------------------------------------------------------------
# Train reports.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainRunReport:
    """The deterministic portion of a training run's outcome."""

    plan: SelectionPlan
    preset: str
    task_kind: str
    task_sequence_length: int
    task_vocab_size: int
    train_size: int
    val_size: int
    task_seed: int
    rank: int
    alpha: float
    init_mode: InitMode
    steps_budget: int
    steps_run: int
    batch_size: int
    lr: float
    momentum: float
    train_seed: int
    stop_loss: float | None
    trainable_params: int
    final_train_loss: float
    final_val_accuracy: float
    loss_curve: tuple


def build_train_doc(report: TrainRunReport) -> ReportDoc:
    plan = report.plan
    scalars = (
        ("model_id", fmt_value(plan.model_id)),
        ("preset", fmt_value(report.preset)),
        ("strategy", plan.strategy.value),
        ("n_layers", fmt_value(plan.n_layers)),
        ("n_total_layers", fmt_value(plan.n_total_layers)),
        ("selected", " ".join(str(i) for i in plan.selected)),
        ("excluded", " ".join(str(i) for i in sorted(plan.excluded_candidates))),
        ("task", fmt_value(report.task_kind)),
        ("task_sequence_length", fmt_value(report.task_sequence_length)),
        ("task_vocab_size", fmt_value(report.task_vocab_size)),
        ("train_size", fmt_value(report.train_size)),
        ("val_size", fmt_value(report.val_size)),
        ("task_seed", fmt_value(report.task_seed)),
        ("rank", fmt_value(report.rank)),
        ("alpha", fmt_value(float(report.alpha))),
        ("init", report.init_mode.value),
        ("steps_budget", fmt_value(report.steps_budget)),
        ("steps_run", fmt_value(report.steps_run)),
        ("batch_size", fmt_value(report.batch_size)),
        ("lr", fmt_value(float(report.lr))),
        ("momentum", fmt_value(float(report.momentum))),
        ("train_seed", fmt_value(report.train_seed)),
        ("stop_loss", "" if report.stop_loss is None else repr(float(report.stop_loss))),
        ("trainable_params", fmt_value(report.trainable_params)),
        ("final_train_loss", fmt_value(float(report.final_train_loss))),
        ("final_val_accuracy", fmt_value(float(report.final_val_accuracy))),
    )
    rows = tuple(
        (str(step), repr(float(loss))) for step, loss in enumerate(report.loss_curve)
    )
    section = ReportSection("loss_curve", ("step", "loss"), rows)
    return ReportDoc(kind="train", scalars=scalars, sections=(section,))


def train_run_report(report, preset: str) -> TrainRunReport:
    """Bridge a trainer ``TrainReport`` to its serializable form.

    Wall-clock and RSS stay out on purpose; write them with
    :func:`write_timing_sidecar` so the document itself is deterministic.
    """
    task = report.task
    hp = report.hp
    return TrainRunReport(
        plan=report.plan,
        preset=preset,
        task_kind=task.kind.value,
        task_sequence_length=task.sequence_length,
        task_vocab_size=task.vocab_size,
        train_size=task.train_size,
        val_size=task.val_size,
        task_seed=task.seed,
        rank=report.rank,
        alpha=float(report.alpha),
        init_mode=report.init_mode,
        steps_budget=hp.steps,
        steps_run=len(report.loss_curve),
        batch_size=hp.batch_size,
        lr=float(hp.lr),
        momentum=float(hp.momentum),
        train_seed=hp.seed,
        stop_loss=hp.stop_loss,
        trainable_params=report.trainable_params,
        final_train_loss=float(report.final_train_loss),
        final_val_accuracy=float(report.final_val_accuracy),
        loss_curve=tuple(report.loss_curve),
    )


def read_train_doc(doc: ReportDoc) -> TrainRunReport:
    if doc.kind != "train":
        raise FormatError(f"expected a train report, got kind={doc.kind!r}")
    plan = SelectionPlan(
        selected=parse_layer_list(doc.scalar("selected"), "selected"),
        strategy=_parse_enum(Strategy, doc.scalar("strategy"), "strategy"),
        n_layers=parse_int(doc.scalar("n_layers"), "n_layers"),
        excluded_candidates=frozenset(parse_layer_list(doc.scalar("excluded"), "excluded")),
        model_id=doc.scalar("model_id"),
        n_total_layers=parse_int(doc.scalar("n_total_layers"), "n_total_layers"),
    )
    section = doc.section("loss_curve")
    if section.header != ("step", "loss"):
        raise FormatError("[loss_curve] must have columns step,loss")
    curve = []
    for idx, row in enumerate(section.rows):
        if parse_int(row[0], "step") != idx:
            raise FormatError(f"[loss_curve] steps out of order at row {idx}")
        curve.append(parse_float(row[1], "loss"))
    steps_run = parse_int(doc.scalar("steps_run"), "steps_run")
    if steps_run != len(curve):
        raise FormatError(
            f"steps_run={steps_run} but the loss curve has {len(curve)} entries"
        )
    stop_raw = doc.scalar("stop_loss")
    return TrainRunReport(
        plan=plan,
        preset=doc.scalar("preset"),
        task_kind=doc.scalar("task"),
        task_sequence_length=parse_int(
            doc.scalar("task_sequence_length"), "task_sequence_length"
        ),
        task_vocab_size=parse_int(doc.scalar("task_vocab_size"), "task_vocab_size"),
        train_size=parse_int(doc.scalar("train_size"), "train_size"),
        val_size=parse_int(doc.scalar("val_size"), "val_size"),
        task_seed=parse_int(doc.scalar("task_seed"), "task_seed"),
        rank=parse_int(doc.scalar("rank"), "rank"),
        alpha=parse_float(doc.scalar("alpha"), "alpha"),
        init_mode=_parse_enum(InitMode, doc.scalar("init"), "init"),
        steps_budget=parse_int(doc.scalar("steps_budget"), "steps_budget"),
        steps_run=steps_run,
        batch_size=parse_int(doc.scalar("batch_size"), "batch_size"),
        lr=parse_float(doc.scalar("lr"), "lr"),
        momentum=parse_float(doc.scalar("momentum"), "momentum"),
        train_seed=parse_int(doc.scalar("train_seed"), "train_seed"),
        stop_loss=None if stop_raw == "" else parse_float(stop_raw, "stop_loss"),
        trainable_params=parse_int(doc.scalar("trainable_params"), "trainable_params"),
        final_train_loss=parse_float(doc.scalar("final_train_loss"), "final_train_loss"),
        final_val_accuracy=parse_float(
            doc.scalar("final_val_accuracy"), "final_val_accuracy"
        ),
        loss_curve=tuple(curve),
    )


# ---------------------------------------------------------------------------
# Derived data tables (plain files for downstream plotting).
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Table:
    name: str
    header: tuple
    rows: tuple


def score_curve_table(score: ScoreReport) -> Table:
    rows = []
    for idx, (imp, res) in enumerate(zip(score.importance.scores, score.cka), start=1):
        rows.append((str(idx), repr(res.value), repr(imp), fmt_value(res.degenerate)))
    return Table("curve", ("layer", "cka", "importance", "degenerate"), tuple(rows))


def scatter_table(runs) -> Table:
    """Trainable-parameter count against the run's final metric, one row per run."""
    if not runs:
        raise ValidationError("scatter table needs at least one training run")
    rows = []
    for run in runs:
        rows.append(
            (
                run.plan.strategy.value,
                str(run.plan.n_layers),
                " ".join(str(i) for i in run.plan.selected),
                str(run.trainable_params),
                repr(run.final_val_accuracy),
            )
        )
    return Table(
        "scatter",
        ("strategy", "n_layers", "selected", "trainable_params", "final_val_accuracy"),
        tuple(rows),
    )


def delta_table(runs) -> Table:
    """Accuracy gap of each run against the all-layer baseline in the set.

    Delta is metric_all minus metric_subset, so positive values mean the
    subset lost accuracy relative to adapting every layer.
    """
    baseline = None
    for run in runs:
        if run.plan.n_layers == run.plan.n_total_layers:
            baseline = run
            break
    if baseline is None:
        raise ValidationError(
            "delta table needs one run whose plan covers all layers as the baseline"
        )
    rows = []
    for run in runs:
        if run is baseline:
            continue
        delta = baseline.final_val_accuracy - run.final_val_accuracy
        rows.append(
            (
                run.plan.strategy.value,
                str(run.plan.n_layers),
                str(run.trainable_params),
                repr(run.final_val_accuracy),
                repr(delta),
            )
        )
    return Table(
        "delta",
        ("strategy", "n_layers", "trainable_params", "final_val_accuracy", "delta_vs_all"),
        tuple(rows),
    )


def table_to_csv(table: Table) -> str:
    lines = [",".join(table.header)]
    for row in table.rows:
        for cell in row:
            if "," in cell or "\n" in cell:
                raise ValidationError(f"CSV cell may not contain commas or newlines: {cell!r}")
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def table_to_kv(table: Table) -> str:
    lines = []
    for i, row in enumerate(table.rows):
        for col, cell in zip(table.header, row):
            if "=" in cell or "\n" in cell:
                raise ValidationError(f"kv cell may not contain '=' or newlines: {cell!r}")
            lines.append(f"{table.name}.{i}.{col}={cell}")
    return "\n".join(lines) + "\n"


def read_table_csv(text: str, name: str = "") -> Table:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError("empty CSV table")
    header = tuple(lines[0].split(","))
    rows = []
    for line in lines[1:]:
        cells = tuple(line.split(","))
        if len(cells) != len(header):
            raise FormatError(
                f"CSV row has {len(cells)} cells, header has {len(header)}"
            )
        rows.append(cells)
    return Table(name, header, tuple(rows))


def read_table_kv(text: str) -> Table:
    lines = [ln for ln in text.split("\n") if ln != ""]
    if not lines:
        raise FormatError("empty kv table")
    name = None
    header = []
    grouped = {}
    for line in lines:
        if "=" not in line:
            raise FormatError(f"malformed kv line {line!r}")
        key, _, value = line.partition("=")
        parts = key.split(".")
        if len(parts) != 3:
            raise FormatError(f"kv key must look like name.index.column, got {key!r}")
        tbl, idx_text, col = parts
        if name is None:
            name = tbl
        elif tbl != name:
            raise FormatError(f"kv table mixes names {name!r} and {tbl!r}")
        idx = parse_int(idx_text, "kv row index")
        if col not in header:
            header.append(col)
        grouped.setdefault(idx, {})[col] = value
    rows = []
    for idx in range(len(grouped)):
        if idx not in grouped:
            raise FormatError(f"kv table is missing row {idx}")
        row = grouped[idx]
        if set(row) != set(header):
            raise FormatError(f"kv row {idx} does not cover every column")
        rows.append(tuple(row[c] for c in header))
    return Table(name, tuple(header), tuple(rows))


# ---------------------------------------------------------------------------
# File plumbing.
# ---------------------------------------------------------------------------


TIMING_SUFFIX = ".timing"


def write_report(doc: ReportDoc, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_report(doc))


def read_report(path: str) -> ReportDoc:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read report {path!r}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise FormatError(f"report {path!r} is not UTF-8: {exc}") from exc
    return parse_report(text)


def write_timing_sidecar(path: str, wall_clock_seconds: float, peak_rss_bytes: int) -> None:
    """Nondeterministic measurements live next to the report, not in it."""
    with open(path + TIMING_SUFFIX, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"wall_clock_seconds={repr(float(wall_clock_seconds))}\n")
        fh.write(f"peak_rss_bytes={int(peak_rss_bytes)}\n")


def _parse_enum(enum_cls, text: str, what: str):
    try:
        return enum_cls(text)
    except ValueError as exc:
        allowed = ", ".join(e.value for e in enum_cls)
        raise FormatError(f"{what}: {text!r} is not one of {allowed}") from exc
