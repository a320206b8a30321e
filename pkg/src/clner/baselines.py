"""Sequence-labeling continual-learning baselines.

AddNER keeps one IOB tagging head per task, each with its own O tag; at
inference a heuristic merges the heads' outputs. ExtendNER keeps a single
head with one global O tag and widens it as tasks arrive; the teacher's
distributions are padded with small constants and renormalized to the
widened dimension. Neither uses a CRF. Both share the contextual encoder
with the span model and emit the same (start, end, type, score) span
records for unified evaluation.
"""
from __future__ import annotations

from typing import Iterable, Mapping, Sequence

import numpy as np

from clner import numcore as nc
from clner.encoder import TransformerEncoder, fan_in_uniform

DEFAULT_PAD_CONSTANT = 1e-4


def head_tag_list(types: Sequence[str]) -> list[str]:
    """O plus B-/I- pairs in type order: 1 + 2*|types| tags."""
    tags = ["O"]
    for t in types:
        tags.extend((f"B-{t}", f"I-{t}"))
    return tags


def flatten_spans(spans: Iterable, types: Iterable[str]) -> list:
    """Reduce possibly-nested gold spans of the given types to a
    non-overlapping set: longest span wins, ties go to the earlier start."""
    wanted = set(types)
    candidates = sorted(
        (s for s in spans if s[2] in wanted),
        key=lambda s: (-(s[1] - s[0]), s[0], s[2]),
    )
    kept: list = []
    for s in candidates:
        if all(s[1] < k[0] or k[1] < s[0] for k in kept):
            kept.append(s)
    return sorted(kept)


def iob_encode(spans: Iterable, types: Sequence[str], n_tokens: int) -> list[str]:
    """Per-token IOB tags for the given types; nested golds are flattened
    first (longest-span rule)."""
    tags = ["O"] * n_tokens
    for i, j, t in flatten_spans(spans, types):
        if not (1 <= i <= j <= n_tokens):
            raise ValueError(f"span ({i}, {j}) outside a {n_tokens}-token sentence")
        tags[i - 1] = f"B-{t}"
        for pos in range(i, j):
            tags[pos] = f"I-{t}"
    return tags


def repair_tags(tags: Sequence[str]) -> list[str]:
    """Turn I- tags that do not continue a same-type B-/I- run into B-."""
    out = list(tags)
    for pos, tag in enumerate(out):
        if tag.startswith("I-"):
            prev = out[pos - 1] if pos else "O"
            if prev not in (f"B-{tag[2:]}", f"I-{tag[2:]}"):
                out[pos] = f"B-{tag[2:]}"
    return out


def tag_decode(tags: Sequence[str]) -> list[tuple[int, int, str]]:
    """Contiguous B-X (I-X)* groups as (start, end, type) spans, 1-based."""
    repaired = repair_tags(tags)
    spans = []
    open_type, open_start = None, 0
    for pos, tag in enumerate(repaired, start=1):
        if tag.startswith("B-"):
            if open_type is not None:
                spans.append((open_start, pos - 1, open_type))
            open_type, open_start = tag[2:], pos
        elif tag.startswith("I-"):
            pass  # repair guarantees continuity
        else:
            if open_type is not None:
                spans.append((open_start, pos - 1, open_type))
                open_type = None
    if open_type is not None:
        spans.append((open_start, len(repaired), open_type))
    return spans


def combine_heads(
    head_outputs: Sequence[tuple[Sequence[str], np.ndarray]],
) -> tuple[list[str], list[float]]:
    """Merge per-task head predictions into one flat tag sequence.

    Per token: if every head's argmax is its own O, emit O; otherwise
    adopt the highest-probability non-O argmax across heads (ties by head
    order, then tag order). Returns the repaired tags and the adopted
    probability per token (1.0 where O).
    """
    if not head_outputs:
        raise ValueError("combine_heads needs at least one head output")
    n = head_outputs[0][1].shape[0]
    tags, scores = [], []
    for pos in range(n):
        best: tuple[float, int, int] | None = None  # (-prob, head, tag_id)
        for head_idx, (tag_list, probs) in enumerate(head_outputs):
            tag_id = int(np.argmax(probs[pos]))
            if tag_list[tag_id] == "O":
                continue
            key = (-float(probs[pos, tag_id]), head_idx, tag_id)
            if best is None or key < best:
                best = key
        if best is None:
            tags.append("O")
            scores.append(1.0)
        else:
            neg_prob, head_idx, tag_id = best
            tags.append(head_outputs[head_idx][0][tag_id])
            scores.append(-neg_prob)
    return repair_tags(tags), scores


def pad_distilled_distribution(
    dist: np.ndarray, new_width: int, constant: float = DEFAULT_PAD_CONSTANT
) -> np.ndarray:
    """Align a teacher distribution (n, old_width) to the widened head:
    new tag positions get a small constant, then rows renormalize to 1."""
    dist = np.asarray(dist, dtype=np.float64)
    old_width = dist.shape[1]
    if old_width > new_width:
        raise ValueError(
            f"distilled distribution width {old_width} exceeds head width {new_width}"
        )
    out = np.full((dist.shape[0], new_width), constant)
    out[:, :old_width] = dist
    return out / out.sum(axis=1, keepdims=True)


def _spans_from_tags(tags: Sequence[str], scores: Sequence[float]):
    spans = []
    for i, j, t in tag_decode(tags):
        spans.append((i, j, t, float(np.mean([scores[p] for p in range(i - 1, j)]))))
    return spans


class AddNerTagger:
    """Multi-head IOB tagger: one (1 + 2*|E_l|)-way head per task."""

    def __init__(self, encoder: TransformerEncoder):
        self.encoder = encoder
        self.task_types: list[tuple[str, ...]] = []
        self.weights: list[nc.Tensor] = []
        self.biases: list[nc.Tensor] = []

    def registered_types(self) -> tuple[str, ...]:
        return tuple(t for types in self.task_types for t in types)

    def grow(self, new_types: Sequence[str], rng: np.random.Generator) -> None:
        dup = set(new_types) & set(self.registered_types())
        if dup:
            raise ValueError(f"entity types already registered: {sorted(dup)}")
        width = len(head_tag_list(new_types))
        d = self.encoder.config.d_model
        self.task_types.append(tuple(new_types))
        self.weights.append(nc.parameter(fan_in_uniform(rng, (d, width))))
        self.biases.append(nc.parameter(np.zeros(width)))

    def named_parameters(self) -> dict[str, nc.Tensor]:
        params = dict(self.encoder.named_parameters())
        for idx in range(len(self.task_types)):
            params[f"heads.task{idx + 1}.w"] = self.weights[idx]
            params[f"heads.task{idx + 1}.b"] = self.biases[idx]
        return params

    def encoder_parameters(self) -> list[nc.Tensor]:
        return self.encoder.parameters()

    def head_parameters(self) -> list[nc.Tensor]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        _load_named(self.named_parameters(), arrays)

    def _head_logits(self, hidden: nc.Tensor, idx: int) -> nc.Tensor:
        return nc.matmul(hidden, self.weights[idx]) + self.biases[idx]

    def sentence_loss(
        self,
        token_ids: Sequence[int],
        gold_spans: Iterable,
        current_types: Sequence[str],
        distilled: Sequence[np.ndarray] | None,
        alpha: float,
        beta: float,
        train: bool,
        rng: np.random.Generator | None,
    ) -> nc.Tensor:
        """Cross entropy on heads whose types are current; Bernoulli-free
        KL against the teacher's own-head softmax on the older heads."""
        hidden = self.encoder.encode(token_ids, train=train, rng=rng)
        n = len(token_ids)
        current = set(current_types)
        loss: nc.Tensor | None = None
        for idx, types in enumerate(self.task_types):
            if set(types) <= current:
                tag_list = head_tag_list(types)
                tag_ids = [
                    tag_list.index(t) for t in iob_encode(gold_spans, types, n)
                ]
                term = nc.mul(
                    nc.cross_entropy_rows(self._head_logits(hidden, idx), tag_ids),
                    alpha,
                )
            elif distilled is not None and idx < len(distilled):
                term = nc.mul(
                    nc.kl_div_rows(self._head_logits(hidden, idx), distilled[idx]),
                    beta,
                )
            else:
                continue
            loss = term if loss is None else loss + term
        if loss is None:
            raise ValueError("no head received a training signal for this sentence")
        return loss

    def teacher_predict(
        self, sentences_ids: Sequence[Sequence[int]], old_types: Sequence[str]
    ) -> list[list[np.ndarray]]:
        """Per sentence, each existing head's softmax rows (detached)."""
        if not old_types:
            return [[] for _ in sentences_ids]
        out = []
        for ids in sentences_ids:
            hidden = self.encoder.encode(ids, train=False)
            out.append(
                [
                    nc.softmax(self._head_logits(hidden, idx), axis=1).numpy()
                    for idx in range(len(self.task_types))
                ]
            )
        return out

    def predict(self, token_ids: Sequence[int]):
        hidden = self.encoder.encode(token_ids, train=False)
        head_outputs = []
        for idx, types in enumerate(self.task_types):
            probs = nc.softmax(self._head_logits(hidden, idx), axis=1).numpy()
            head_outputs.append((head_tag_list(types), probs))
        tags, scores = combine_heads(head_outputs)
        return _spans_from_tags(tags, scores)


class ExtendNerTagger:
    """Single-head IOB tagger with a global O tag; the head widens by
    2*|new types| outputs per task, keeping old tag indices as a prefix."""

    def __init__(self, encoder: TransformerEncoder, pad_constant: float = DEFAULT_PAD_CONSTANT):
        self.encoder = encoder
        self.pad_constant = pad_constant
        self.types: tuple[str, ...] = ()
        d = encoder.config.d_model
        self.weight = nc.parameter(np.zeros((d, 1)))
        self.bias = nc.parameter(np.zeros(1))
        self._initialized = False

    @property
    def tag_list(self) -> list[str]:
        return head_tag_list(self.types)

    def registered_types(self) -> tuple[str, ...]:
        return self.types

    def grow(self, new_types: Sequence[str], rng: np.random.Generator) -> None:
        """Widen the head; existing output columns stay bit-identical."""
        dup = set(new_types) & set(self.types)
        if dup:
            raise ValueError(f"entity types already registered: {sorted(dup)}")
        d = self.encoder.config.d_model
        added = 2 * len(new_types)
        if not self._initialized:
            # first growth also initializes the O column
            fresh_w = fan_in_uniform(rng, (d, 1 + added))
            new_w, new_b = fresh_w, np.zeros(1 + added)
            self._initialized = True
        else:
            fresh_w = fan_in_uniform(rng, (d, added))
            new_w = np.concatenate([self.weight.data, fresh_w], axis=1)
            new_b = np.concatenate([self.bias.data, np.zeros(added)])
        self.types = self.types + tuple(new_types)
        self.weight = nc.parameter(new_w)
        self.bias = nc.parameter(new_b)

    def named_parameters(self) -> dict[str, nc.Tensor]:
        params = dict(self.encoder.named_parameters())
        params["head.w"] = self.weight
        params["head.b"] = self.bias
        return params

    def encoder_parameters(self) -> list[nc.Tensor]:
        return self.encoder.parameters()

    def head_parameters(self) -> list[nc.Tensor]:
        return [self.weight, self.bias]

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        _load_named(self.named_parameters(), arrays)

    def _logits(self, hidden: nc.Tensor) -> nc.Tensor:
        return nc.matmul(hidden, self.weight) + self.bias

    def sentence_loss(
        self,
        token_ids: Sequence[int],
        gold_spans: Iterable,
        current_types: Sequence[str],
        distilled: np.ndarray | None,
        alpha: float,
        beta: float,
        train: bool,
        rng: np.random.Generator | None,
    ) -> nc.Tensor:
        """Tokens whose gold is a current-task entity tag take cross
        entropy with the gold; every other token takes KL against the
        teacher's padded distribution when a teacher exists, else cross
        entropy with its O gold."""
        hidden = self.encoder.encode(token_ids, train=train, rng=rng)
        logits = self._logits(hidden)
        n = len(token_ids)
        tag_list = self.tag_list
        gold_tags = iob_encode(gold_spans, current_types, n)
        gold_ids = [tag_list.index(t) for t in gold_tags]
        entity_mask = np.array([0.0 if t == "O" else 1.0 for t in gold_tags])
        if distilled is None:
            return nc.mul(nc.cross_entropy_rows(logits, gold_ids), alpha)
        padded = pad_distilled_distribution(distilled, len(tag_list), self.pad_constant)
        ce = nc.cross_entropy_rows(logits, gold_ids, entity_mask)
        kl = nc.kl_div_rows(logits, padded, 1.0 - entity_mask)
        return nc.mul(ce, alpha) + nc.mul(kl, beta)

    def teacher_predict(
        self, sentences_ids: Sequence[Sequence[int]], old_types: Sequence[str]
    ) -> list[np.ndarray]:
        """Softmax rows over the current (pre-extension) tag set."""
        if not old_types:
            return [np.zeros((len(ids), 0)) for ids in sentences_ids]
        out = []
        for ids in sentences_ids:
            hidden = self.encoder.encode(ids, train=False)
            out.append(nc.softmax(self._logits(hidden), axis=1).numpy())
        return out

    def predict(self, token_ids: Sequence[int]):
        hidden = self.encoder.encode(token_ids, train=False)
        probs = nc.softmax(self._logits(hidden), axis=1).numpy()
        tag_list = self.tag_list
        ids = probs.argmax(axis=1)
        tags = [tag_list[i] for i in ids]
        scores = [float(probs[pos, i]) for pos, i in enumerate(ids)]
        return _spans_from_tags(tags, scores)


def _load_named(params: dict[str, nc.Tensor], arrays: Mapping[str, np.ndarray]) -> None:
    missing = set(params) - set(arrays)
    if missing:
        raise ValueError(f"checkpoint missing parameters: {sorted(missing)}")
    for name, tensor in params.items():
        arr = np.asarray(arrays[name], dtype=np.float64)
        if arr.shape != tensor.shape:
            raise ValueError(
                f"checkpoint shape {arr.shape} for {name} does not match "
                f"model shape {tensor.shape}"
            )
        tensor.data = arr.copy()
