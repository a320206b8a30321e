"""Continual-learning protocol orchestration.

One CL run walks the task sequence: teacher predictions with the
previous step's selected model, head growth, multi-epoch training on the
weighted loss, dev-based epoch selection, then test evaluation over all
types learned so far. Non-CL reference runs train from scratch at every
step on the union of the data seen so far with annotations restored for
every type learned so far.

All randomness flows from the run seed through fixed named streams, so a
(seed, config, benchmark) triple reproduces bit-identical metrics. Runs
sharing nothing mutable (distinct seeds/permutations) may execute in
parallel; within a run the model is single-writer.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from clner import numcore as nc
from clner.baselines import AddNerTagger, ExtendNerTagger
from clner.cldata import Sentence, SynthesizedBenchmark
from clner.encoder import EncoderConfig, TransformerEncoder, Vocab
from clner.metrics import StepEval, evaluate_step
from clner.spankl import SpanKLModel

log = logging.getLogger(__name__)

MODEL_KINDS = ("spankl", "addner", "extendner")
SCHEDULES = ("constant", "warmup_cosine")

# named rng streams; every generator is seeded as [seed, stream, step]
_INIT, _GROW, _SHUFFLE, _DROPOUT = 0, 1, 2, 3


class RunError(Exception):
    """A training run aborted; carries the failing step index."""

    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass
class RunConfig:
    model: str = "spankl"
    epochs: int = 5
    batch_size: int = 16
    lr_encoder: float = 1e-3
    lr_heads: float = 3e-3
    weight_decay: float = 0.0
    alpha: float = 1.0
    beta: float = 1.0
    threshold: float = 0.5
    d_model: int = 64
    n_heads: int = 4
    max_len: int = 128
    dropout: float = 0.1
    d_span: int = 50
    pad_constant: float = 1e-4
    seed: int = 0
    freeze_encoder: bool = False
    schedule: str = "constant"
    warmup_steps: int = 200
    dump_matrices: bool = False

    def validate(self) -> list[str]:
        problems = []
        if self.model not in MODEL_KINDS:
            problems.append(f"model: {self.model!r} not one of {MODEL_KINDS}")
        if self.epochs < 1:
            problems.append(f"epochs: must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            problems.append(f"batch_size: must be >= 1, got {self.batch_size}")
        if self.alpha < 0 or self.beta < 0:
            problems.append(f"alpha/beta: must be >= 0, got {self.alpha}/{self.beta}")
        if not 0.0 <= self.dropout < 1.0:
            problems.append(f"dropout: must be in [0, 1), got {self.dropout}")
        if self.schedule not in SCHEDULES:
            problems.append(f"schedule: {self.schedule!r} not one of {SCHEDULES}")
        if not 0.0 < self.threshold < 1.0:
            problems.append(f"threshold: must be in (0, 1), got {self.threshold}")
        return problems

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str | int | float | bool]) -> "RunConfig":
        """Build a config from string-ish key/value pairs, coercing each
        value to the field's default type; unknown keys are an error."""
        defaults = {f.name: f.default for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in defaults:
                raise ValueError(f"unknown config key {key!r}")
            default = defaults[key]
            if isinstance(default, bool):
                if isinstance(raw, str):
                    if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                        raise ValueError(f"{key}: cannot parse {raw!r} as bool")
                    kwargs[key] = raw.lower() in ("true", "1", "yes")
                else:
                    kwargs[key] = bool(raw)
            elif isinstance(default, int):
                kwargs[key] = int(raw)
            elif isinstance(default, float):
                kwargs[key] = float(raw)
            else:
                kwargs[key] = str(raw)
        return cls(**kwargs)


def stream_rng(seed: int, stream: int, step: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream, step])


def build_model(config: RunConfig, vocab_size: int, rng: np.random.Generator):
    encoder = TransformerEncoder(
        vocab_size,
        EncoderConfig(
            d_model=config.d_model,
            n_heads=config.n_heads,
            max_len=config.max_len,
            dropout=config.dropout,
        ),
        rng,
    )
    if config.model == "spankl":
        return SpanKLModel(encoder, d_span=config.d_span, threshold=config.threshold)
    if config.model == "addner":
        return AddNerTagger(encoder)
    if config.model == "extendner":
        return ExtendNerTagger(encoder, pad_constant=config.pad_constant)
    raise ValueError(f"unknown model kind {config.model!r}")


def cache_digest(cache) -> str:
    """Stable digest over a teacher cache of nested dict/list/array data."""
    h = hashlib.sha256()

    def feed(obj):
        if isinstance(obj, dict):
            h.update(b"d")
            for key in sorted(obj):
                h.update(str(key).encode())
                feed(obj[key])
        elif isinstance(obj, (list, tuple)):
            h.update(b"l")
            for item in obj:
                feed(item)
        elif isinstance(obj, np.ndarray):
            h.update(b"a")
            h.update(str(obj.shape).encode())
            h.update(np.ascontiguousarray(obj, dtype="<f8").tobytes())
        elif obj is None:
            h.update(b"n")
        else:
            h.update(repr(obj).encode())

    feed(cache)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# single-run machinery
# ---------------------------------------------------------------------------


@dataclass
class StepRecord:
    step: int
    dev_f1_per_epoch: list[float]
    selected_epoch: int
    eval: StepEval
    teacher_digest: str | None = None


@dataclass
class RunResult:
    mode: str
    config: RunConfig
    setup: str
    kind: str
    permutation: int
    steps: list[StepRecord] = field(default_factory=list)

    def macro(self, step: int) -> float:
        return self.steps[step - 1].eval.macro

    def final_macro(self) -> float:
        return self.steps[-1].eval.macro


class _Trainer:
    """Shared trainer state for one run over one benchmark."""

    def __init__(self, config: RunConfig, bench: SynthesizedBenchmark, out_dir=None):
        problems = config.validate()
        if problems:
            raise ValueError("invalid run config: " + "; ".join(problems))
        self.config = config
        self.bench = bench
        self.vocab = Vocab(bench.vocab_tokens)
        self.grouping = bench.grouping if bench.kind == "fewnerd" else None
        self.out_dir = Path(out_dir) if out_dir is not None else None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)

    def ids_of(self, sentence: Sentence) -> list[int]:
        return self.vocab.encode(sentence.tokens)

    def optimizer(self, model) -> nc.AdamW:
        groups = []
        if not self.config.freeze_encoder:
            groups.append({"params": model.encoder_parameters(), "lr": self.config.lr_encoder})
        groups.append({"params": model.head_parameters(), "lr": self.config.lr_heads})
        return nc.AdamW(groups, weight_decay=self.config.weight_decay)

    def _lr_factor(self, t: int, total: int) -> float:
        warmup = self.config.warmup_steps
        if t <= warmup:
            return t / max(1, warmup)
        span = max(1, total - warmup)
        return 0.5 * (1.0 + np.cos(np.pi * (t - warmup) / span))

    def evaluate(self, model, sentences: Sequence[Sentence], eval_types: Sequence[str], step: int) -> StepEval:
        """Decode with every learned head, then score only eval_types."""
        wanted = set(eval_types)
        preds, golds = [], []
        for sent in sentences:
            spans = model.predict(self.ids_of(sent))
            preds.append([(i, j, t) for i, j, t, _ in spans if t in wanted])
            golds.append([(s.start, s.end, s.type) for s in sent.spans])
        return evaluate_step(step, golds, preds, list(eval_types), self.grouping)

    def train_step(
        self,
        model,
        step: int,
        train_sents: Sequence[Sentence],
        dev_sents: Sequence[Sentence],
        current_types: Sequence[str],
        dev_types: Sequence[str],
        distilled: Sequence | None,
    ) -> tuple[list[float], int]:
        """Multi-epoch training with dev-based selection; the model ends
        holding the weights of the best dev epoch (later epochs win ties)."""
        cfg = self.config
        opt = self.optimizer(model)
        base_lrs = [g["lr"] for g in opt.groups]
        shuffle_rng = stream_rng(cfg.seed, _SHUFFLE, step)
        dropout_rng = stream_rng(cfg.seed, _DROPOUT, step)
        n = len(train_sents)
        if n == 0:
            raise RunError(step, "no training sentences")
        n_batches = (n + cfg.batch_size - 1) // cfg.batch_size
        total_opt_steps = cfg.epochs * n_batches
        dev_curve: list[float] = []
        best: tuple[float, int, dict[str, np.ndarray]] | None = None
        opt_step = 0
        for epoch in range(1, cfg.epochs + 1):
            order = shuffle_rng.permutation(n)
            for b in range(n_batches):
                batch = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
                opt.zero_grad()
                loss = None
                for idx in batch:
                    sent = train_sents[idx]
                    term = model.sentence_loss(
                        self.ids_of(sent),
                        [tuple(s) for s in sent.spans],
                        current_types,
                        distilled[idx] if distilled is not None else None,
                        cfg.alpha,
                        cfg.beta,
                        True,
                        dropout_rng,
                    )
                    loss = term if loss is None else loss + term
                loss = nc.mul(loss, 1.0 / len(batch))
                loss.backward()
                opt_step += 1
                if cfg.schedule == "warmup_cosine":
                    factor = self._lr_factor(opt_step, total_opt_steps)
                    for group, base in zip(opt.groups, base_lrs):
                        group["lr"] = base * factor
                opt.step()
            dev_f1 = self.evaluate(model, dev_sents, dev_types, step).macro if dev_sents else 0.0
            dev_curve.append(dev_f1)
            if best is None or dev_f1 >= best[0]:
                snapshot = {k: v.data.copy() for k, v in model.named_parameters().items()}
                best = (dev_f1, epoch, snapshot)
        model.load_arrays(best[2])
        return dev_curve, best[1]

    # -- per-step artifact I/O ---------------------------------------------
    def step_dir(self, mode: str, step: int) -> Path | None:
        if self.out_dir is None:
            return None
        d = self.out_dir / mode / f"step_{step:02d}"
        d.mkdir(parents=True, exist_ok=True)
        return d

    def dump_step(self, model, mode: str, step: int, record: StepRecord, test_sents) -> None:
        d = self.step_dir(mode, step)
        if d is None:
            return
        nc.save_checkpoint(
            d / "checkpoint.bin",
            {k: v.data for k, v in model.named_parameters().items()},
        )
        (d / "dev_record.json").write_text(
            json.dumps(
                {
                    "dev_f1_per_epoch": record.dev_f1_per_epoch,
                    "selected_epoch": record.selected_epoch,
                },
                sort_keys=True,
            )
            + "\n",
            encoding="utf-8",
        )
        if record.teacher_digest is not None:
            (d / "teacher_digest.txt").write_text(record.teacher_digest + "\n")
        lines = []
        for idx, sent in enumerate(test_sents):
            spans = model.predict(self.ids_of(sent))
            rec = {"index": idx, "spans": [[i, j, t, s] for i, j, t, s in spans]}
            if self.config.dump_matrices and isinstance(model, SpanKLModel):
                mats = model.logits(self.ids_of(sent))
                rec["matrices"] = {
                    t: nc.sigmoid(m).numpy().tolist() for t, m in mats.items()
                }
            lines.append(json.dumps(rec, sort_keys=True))
        (d / "predictions.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_cl(config: RunConfig, bench: SynthesizedBenchmark, out_dir=None) -> RunResult:
    """The continual protocol: teacher predictions (one-off, with the
    previous step's selected model, before head growth), grow, train,
    select by dev macro-F1, evaluate on the step's test set."""
    tr = _Trainer(config, bench, out_dir)
    result = RunResult(
        mode="cl",
        config=config,
        setup=bench.setup,
        kind=bench.kind,
        permutation=bench.sequence.permutation,
    )
    model = build_model(config, len(tr.vocab), stream_rng(config.seed, _INIT, 1))
    for step, task in enumerate(bench.sequence.tasks, start=1):
        if not task.types:
            raise RunError(step, "task defines no entity types")
        old_types = bench.sequence.cumulative_types(step - 1)
        train_sents = bench.tasks[step - 1].train
        if not train_sents:
            raise RunError(step, "empty task training data")
        distilled = None
        digest = None
        if step > 1 and config.beta > 0.0 and old_types:
            # one-off teacher pass before this step's heads exist; for the
            # span model growth provably cannot change old-type outputs,
            # for the single-head tagger the teacher must be pre-extension
            distilled = model.teacher_predict(
                [tr.ids_of(s) for s in train_sents], old_types
            )
            digest = cache_digest(distilled)
        model.grow(task.types, stream_rng(config.seed, _GROW, step))
        dev_curve, chosen = tr.train_step(
            model,
            step,
            train_sents,
            bench.tasks[step - 1].dev,
            task.types,
            task.types,
            distilled,
        )
        learned = bench.sequence.cumulative_types(step)
        step_eval = tr.evaluate(model, bench.tasks[step - 1].test, learned, step)
        record = StepRecord(step, dev_curve, chosen, step_eval, digest)
        result.steps.append(record)
        tr.dump_step(model, "cl", step, record, bench.tasks[step - 1].test)
        log.info(
            "cl step %d/%d: dev %s, selected epoch %d, test macro %.4f",
            step, len(bench.sequence), [f"{x:.3f}" for x in dev_curve], chosen,
            step_eval.macro,
        )
    if tr.out_dir is not None:
        write_run_records(tr.out_dir, result)
    return result


def run_noncl(config: RunConfig, bench: SynthesizedBenchmark, out_dir=None) -> RunResult:
    """Per-step upper bound: train from scratch on the union of tasks
    1..l with annotations restored for every type learned so far."""
    tr = _Trainer(config, bench, out_dir)
    result = RunResult(
        mode="noncl",
        config=config,
        setup=bench.setup,
        kind=bench.kind,
        permutation=bench.sequence.permutation,
    )
    for step in range(1, len(bench.sequence) + 1):
        learned = bench.sequence.cumulative_types(step)
        model = build_model(config, len(tr.vocab), stream_rng(config.seed, _INIT, step))
        model.grow(learned, stream_rng(config.seed, _GROW, step))
        train_sents = bench.noncl_train(step)
        if not train_sents:
            raise RunError(step, "empty union training data")
        dev_curve, chosen = tr.train_step(
            model,
            step,
            train_sents,
            bench.noncl_dev(step),
            learned,
            learned,
            None,
        )
        step_eval = tr.evaluate(model, bench.tasks[step - 1].test, learned, step)
        record = StepRecord(step, dev_curve, chosen, step_eval)
        result.steps.append(record)
        tr.dump_step(model, "noncl", step, record, bench.tasks[step - 1].test)
        log.info(
            "noncl step %d/%d: selected epoch %d, test macro %.4f",
            step, len(bench.sequence), chosen, step_eval.macro,
        )
    if tr.out_dir is not None:
        write_run_records(tr.out_dir, result)
    return result


def load_step_model(config: RunConfig, bench: SynthesizedBenchmark, run_dir, step: int):
    """Rebuild the model structure through the given step and load that
    step's selected checkpoint (resume support)."""
    path = Path(run_dir) / "cl" / f"step_{step:02d}" / "checkpoint.bin"
    try:
        arrays = nc.load_checkpoint(path)
    except (OSError, nc.CheckpointError) as e:
        raise RunError(step, f"cannot load checkpoint {path}: {e}") from e
    vocab = Vocab(bench.vocab_tokens)
    model = build_model(config, len(vocab), stream_rng(config.seed, _INIT, 1))
    for l, task in enumerate(bench.sequence.tasks[:step], start=1):
        model.grow(task.types, stream_rng(config.seed, _GROW, l))
    model.load_arrays(arrays)
    return model


# ---------------------------------------------------------------------------
# records on disk
# ---------------------------------------------------------------------------


def metrics_rows(result: RunResult) -> list[dict]:
    rows = []
    base = {
        "model": result.config.model,
        "mode": result.mode,
        "setup": result.setup,
        "permutation": result.permutation,
        "seed": result.config.seed,
    }
    for record in result.steps:
        for t in sorted(record.eval.scores):
            score = record.eval.scores[t]
            rows.append(
                base
                | {
                    "step": record.step,
                    "type": t,
                    "tp": score.counts.tp,
                    "fp": score.counts.fp,
                    "fn": score.counts.fn,
                    "precision": score.precision,
                    "recall": score.recall,
                    "f1": score.f1,
                }
            )
    return rows


METRICS_COLUMNS = (
    "model", "mode", "setup", "permutation", "seed",
    "step", "type", "tp", "fp", "fn", "precision", "recall", "f1",
)


def _fmt(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def write_run_records(out_dir, result: RunResult) -> None:
    """metrics.tsv (per type), summary.tsv (per-step macro), curves.csv
    (per-type and macro F1 by step, for forgetting-curve plots)."""
    out = Path(out_dir)
    rows = metrics_rows(result)
    lines = ["\t".join(METRICS_COLUMNS)]
    lines += ["\t".join(_fmt(r[c]) for c in METRICS_COLUMNS) for r in rows]
    (out / f"metrics_{result.mode}.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    summary = ["\t".join(("model", "mode", "setup", "permutation", "seed", "step", "macro_f1"))]
    for record in result.steps:
        summary.append(
            "\t".join(
                (
                    result.config.model,
                    result.mode,
                    result.setup,
                    str(result.permutation),
                    str(result.config.seed),
                    str(record.step),
                    repr(record.eval.macro),
                )
            )
        )
    (out / f"summary_{result.mode}.tsv").write_text("\n".join(summary) + "\n", encoding="utf-8")
    curve_types = _curve_types(result)
    curves = ["step,type,f1"]
    for record in result.steps:
        for t in curve_types:
            if t in record.eval.scores:
                curves.append(f"{record.step},{t},{record.eval.scores[t].f1!r}")
        curves.append(f"{record.step},__macro__,{record.eval.macro!r}")
    (out / f"curves_{result.mode}.csv").write_text("\n".join(curves) + "\n", encoding="utf-8")


def _curve_types(result: RunResult) -> list[str]:
    if result.kind == "fewnerd":
        coarse = []
        for record in result.steps:
            for t in sorted(record.eval.scores):
                if "-" not in t and t not in coarse:
                    coarse.append(t)
        return sorted(coarse)
    out: list[str] = []
    for record in result.steps:
        for t in sorted(record.eval.scores):
            if t not in out:
                out.append(t)
    return sorted(out)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


@dataclass
class SweepResult:
    runs: list[RunResult]

    def per_seed_step_mean(self) -> dict[int, dict[int, float]]:
        """Mean macro-F1 across permutations, reported per seed."""
        acc: dict[int, dict[int, list[float]]] = {}
        for run in self.runs:
            for record in run.steps:
                acc.setdefault(run.config.seed, {}).setdefault(record.step, []).append(
                    record.eval.macro
                )
        return {
            seed: {step: float(np.mean(vals)) for step, vals in steps.items()}
            for seed, steps in acc.items()
        }

    def step_mean(self) -> dict[int, float]:
        """Mean macro-F1 across every run (permutations and seeds)."""
        acc: dict[int, list[float]] = {}
        for run in self.runs:
            for record in run.steps:
                acc.setdefault(record.step, []).append(record.eval.macro)
        return {step: float(np.mean(vals)) for step, vals in acc.items()}


def sweep(
    config: RunConfig,
    benchmarks: Sequence[SynthesizedBenchmark],
    seeds: Sequence[int],
    mode: str = "cl",
    out_root=None,
) -> SweepResult:
    """Run every (benchmark permutation, seed) pair; raw per-run records
    are retained in the result and, when out_root is given, on disk."""
    if not benchmarks:
        raise ValueError("sweep needs at least one benchmark")
    runner = {"cl": run_cl, "noncl": run_noncl}[mode]
    runs = []
    for bench in benchmarks:
        for seed in seeds:
            run_config = dataclasses.replace(config, seed=seed)
            out_dir = (
                Path(out_root) / f"run_p{bench.sequence.permutation}_s{seed}"
                if out_root is not None
                else None
            )
            runs.append(runner(run_config, bench, out_dir))
    return SweepResult(runs)
