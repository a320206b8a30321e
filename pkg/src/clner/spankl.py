"""Span-based multi-label NER head with Bernoulli knowledge distillation.

Every entity type owns two distinct single-layer feed-forward projections
(start and end); the score of span (i, j) for a type is the scaled dot
product of the projected boundary vectors, arranged per type into an
n x n matrix whose upper triangle (i <= j, 1-based) is the meaningful
region. Training uses per-cell binary cross entropy on the current
types plus Bernoulli KL against cached teacher probabilities on the old
types; losses never read cells below the diagonal.
"""
from __future__ import annotations

from typing import Iterable, Mapping, Sequence

import numpy as np

from clner import numcore as nc
from clner.encoder import TransformerEncoder, fan_in_uniform

DEFAULT_SPAN_DIM = 50
DEFAULT_THRESHOLD = 0.5
TEACHER_PROB_CLAMP = 1e-7

_TRIU_CACHE: dict[int, np.ndarray] = {}


def triu_mask(n: int) -> np.ndarray:
    """Upper-triangle indicator (i <= j) shared across calls."""
    if n not in _TRIU_CACHE:
        _TRIU_CACHE[n] = np.triu(np.ones((n, n)))
    return _TRIU_CACHE[n]


class TypeHead:
    """Start and end projections for one entity type; the two are
    independent parameter sets by construction."""

    def __init__(self, d_hidden: int, d_span: int, rng: np.random.Generator):
        self.start_w = nc.parameter(fan_in_uniform(rng, (d_hidden, d_span)))
        self.start_b = nc.parameter(np.zeros(d_span))
        self.end_w = nc.parameter(fan_in_uniform(rng, (d_hidden, d_span)))
        self.end_b = nc.parameter(np.zeros(d_span))

    def parameters(self) -> list[nc.Tensor]:
        return [self.start_w, self.start_b, self.end_w, self.end_b]


def span_logits(
    hidden: nc.Tensor, heads: Mapping[str, TypeHead], types: Iterable[str] | None = None
) -> dict[str, nc.Tensor]:
    """Per-type n x n logit matrices: start(h_i) . end(h_j) / sqrt(d_span)."""
    wanted = list(heads) if types is None else list(types)
    out: dict[str, nc.Tensor] = {}
    for t in wanted:
        head = heads[t]
        if hidden.shape[1] != head.start_w.shape[0]:
            raise nc.ShapeError(
                f"hidden width {hidden.shape[1]} does not match head projection "
                f"input {head.start_w.shape[0]} for type {t!r}"
            )
        d_span = head.start_w.shape[1]
        start = nc.matmul(hidden, head.start_w) + head.start_b
        end = nc.matmul(hidden, head.end_w) + head.end_b
        out[t] = nc.matmul(start, nc.transpose(end)) * (d_span**-0.5)
    return out


def gold_target_matrix(gold_spans: Iterable[tuple[int, int]], n: int) -> np.ndarray:
    target = np.zeros((n, n))
    for i, j in gold_spans:
        if not (1 <= i <= j <= n):
            raise ValueError(f"gold span ({i}, {j}) outside a {n}-token sentence")
        target[i - 1, j - 1] = 1.0
    return target


def bce_loss(
    matrices: Mapping[str, nc.Tensor],
    gold: Mapping[str, Iterable[tuple[int, int]]],
    current_types: Sequence[str],
) -> nc.Tensor:
    """Binary cross entropy summed over upper-triangle cells of the
    current types' matrices (gold label 1 on gold spans, else 0)."""
    extra = set(gold) - set(current_types)
    if extra:
        raise ValueError(f"gold spans for non-current types: {sorted(extra)}")
    total: nc.Tensor | None = None
    for t in current_types:
        m = matrices[t]
        n = m.shape[0]
        target = gold_target_matrix(gold.get(t, ()), n)
        term = nc.bce_with_logits(m, target, triu_mask(n))
        total = term if total is None else total + term
    if total is None:
        raise ValueError("bce_loss needs at least one current type")
    return total


def kd_loss(
    matrices: Mapping[str, nc.Tensor],
    distilled: Mapping[str, np.ndarray],
    old_types: Sequence[str],
) -> nc.Tensor:
    """Bernoulli KL between cached teacher probabilities and the student's
    sigmoid outputs, summed over upper-triangle cells of old types.
    Teacher probabilities are clamped into [1e-7, 1 - 1e-7] first."""
    missing = set(old_types) - set(distilled)
    if missing:
        raise ValueError(f"distilled labels missing for old types: {sorted(missing)}")
    extra = set(distilled) - set(old_types)
    if extra:
        raise ValueError(f"distilled labels cover unexpected types: {sorted(extra)}")
    total: nc.Tensor | None = None
    for t in old_types:
        m = matrices[t]
        n = m.shape[0]
        ref = np.clip(
            np.asarray(distilled[t], dtype=np.float64),
            TEACHER_PROB_CLAMP,
            1.0 - TEACHER_PROB_CLAMP,
        )
        if ref.shape != (n, n):
            raise nc.ShapeError(
                f"distilled matrix for {t!r} has shape {ref.shape}, expected {(n, n)}"
            )
        term = nc.bernoulli_kl_with_logits(m, ref, triu_mask(n))
        total = term if total is None else total + term
    if total is None:
        raise ValueError("kd_loss needs at least one old type")
    return total


def total_loss(bce, kd, alpha: float, beta: float) -> nc.Tensor:
    """Weighted sum alpha*bce + beta*kd; works on tensors or plain floats."""
    if alpha < 0 or beta < 0:
        raise ValueError(f"loss weights must be non-negative, got {alpha}, {beta}")
    return nc.add(nc.mul(bce, alpha), nc.mul(kd, beta))


def decode_flat(
    prob_matrices: Mapping[str, np.ndarray], threshold: float = DEFAULT_THRESHOLD
) -> list[tuple[int, int, str, float]]:
    """Flatten overlapping predictions: keep the highest-scoring span,
    discard anything whose token range intersects an accepted span.

    Candidates are the upper-triangle cells above the threshold; ties are
    broken by (start, end, type registration order). The map's iteration
    order defines type order.
    """
    candidates = []
    for order, (t, probs) in enumerate(prob_matrices.items()):
        probs = np.asarray(probs)
        n = probs.shape[0]
        for i in range(n):
            for j in range(i, n):
                score = float(probs[i, j])
                if score > threshold:
                    candidates.append((i + 1, j + 1, order, t, score))
    candidates.sort(key=lambda c: (-c[4], c[0], c[1], c[2]))
    accepted: list[tuple[int, int, str, float]] = []
    for i, j, _, t, score in candidates:
        if all(j < a_i or a_j < i for a_i, a_j, _, _ in accepted):
            accepted.append((i, j, t, score))
    return accepted


class SpanKLModel:
    """Shared encoder plus a growable set of per-type span heads."""

    def __init__(
        self,
        encoder: TransformerEncoder,
        d_span: int = DEFAULT_SPAN_DIM,
        threshold: float = DEFAULT_THRESHOLD,
    ):
        self.encoder = encoder
        self.d_span = d_span
        self.threshold = threshold
        self.heads: dict[str, TypeHead] = {}

    # -- structure ---------------------------------------------------------
    def registered_types(self) -> tuple[str, ...]:
        return tuple(self.heads)

    def grow(self, new_types: Sequence[str], rng: np.random.Generator) -> None:
        """Register one fresh head per new type; existing heads untouched."""
        dup = set(new_types) & set(self.heads)
        if dup:
            raise ValueError(f"entity types already registered: {sorted(dup)}")
        for t in new_types:
            self.heads[t] = TypeHead(self.encoder.config.d_model, self.d_span, rng)

    def named_parameters(self) -> dict[str, nc.Tensor]:
        params = dict(self.encoder.named_parameters())
        for t, head in self.heads.items():
            params[f"heads.{t}.start_w"] = head.start_w
            params[f"heads.{t}.start_b"] = head.start_b
            params[f"heads.{t}.end_w"] = head.end_w
            params[f"heads.{t}.end_b"] = head.end_b
        return params

    def encoder_parameters(self) -> list[nc.Tensor]:
        return self.encoder.parameters()

    def head_parameters(self) -> list[nc.Tensor]:
        return [p for head in self.heads.values() for p in head.parameters()]

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        params = self.named_parameters()
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

    # -- forward paths -----------------------------------------------------
    def logits(
        self,
        token_ids: Sequence[int],
        types: Iterable[str] | None = None,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> dict[str, nc.Tensor]:
        hidden = self.encoder.encode(token_ids, train=train, rng=rng)
        return span_logits(hidden, self.heads, types)

    def sentence_loss(
        self,
        token_ids: Sequence[int],
        gold_spans: Iterable,
        current_types: Sequence[str],
        distilled: Mapping[str, np.ndarray] | None,
        alpha: float,
        beta: float,
        train: bool,
        rng: np.random.Generator | None,
    ) -> nc.Tensor:
        """alpha * BCE over current types + beta * KL over old types.
        The KD term is absent when no distilled labels exist (first step
        or disabled distillation)."""
        old_types = [t for t in self.heads if t not in current_types]
        needed = list(current_types) + (old_types if distilled is not None else [])
        matrices = self.logits(token_ids, needed, train=train, rng=rng)
        gold: dict[str, list[tuple[int, int]]] = {}
        for span in gold_spans:
            gold.setdefault(span[2], []).append((span[0], span[1]))
        loss = nc.mul(bce_loss(matrices, gold, current_types), alpha)
        if distilled is not None and old_types:
            loss = loss + nc.mul(kd_loss(matrices, distilled, old_types), beta)
        return loss

    def teacher_predict(
        self, sentences_ids: Sequence[Sequence[int]], old_types: Sequence[str]
    ) -> list[dict[str, np.ndarray]]:
        """One-off teacher pass: sigmoid probabilities of every old type
        for every sentence. Returns detached arrays that stay fixed while
        the student trains. Empty old_types yields empty label sets."""
        if not old_types:
            return [{} for _ in sentences_ids]
        out = []
        for ids in sentences_ids:
            matrices = self.logits(ids, old_types, train=False)
            out.append(
                {t: nc.sigmoid(matrices[t]).numpy() for t in old_types}
            )
        return out

    def predict(
        self,
        token_ids: Sequence[int],
        types: Iterable[str] | None = None,
        threshold: float | None = None,
    ) -> list[tuple[int, int, str, float]]:
        """Decode mutually non-overlapping spans above the threshold."""
        matrices = self.logits(token_ids, types, train=False)
        probs = {t: nc.sigmoid(m).numpy() for t, m in matrices.items()}
        return decode_flat(probs, self.threshold if threshold is None else threshold)

    def predict_nested(
        self,
        token_ids: Sequence[int],
        types: Iterable[str] | None = None,
        threshold: float | None = None,
    ) -> list[tuple[int, int, str, float]]:
        """Every upper-triangle cell above the threshold, overlap pruning
        skipped: the multi-label matrices natively express nested and
        overlapping mentions; flat aggregation is a separate post-step."""
        thr = self.threshold if threshold is None else threshold
        matrices = self.logits(token_ids, types, train=False)
        out = []
        for t, m in matrices.items():
            probs = nc.sigmoid(m).numpy()
            n = probs.shape[0]
            for i in range(n):
                for j in range(i, n):
                    if probs[i, j] > thr:
                        out.append((i + 1, j + 1, t, float(probs[i, j])))
        return out
