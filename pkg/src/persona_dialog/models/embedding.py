"""Supervised embedding ranker: ``f(x, y) = (A x) . (B y)`` over summed bags."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus import Vocabulary
from ..simulator import EXCHANGE, Dialog
from ..numerics import Rng, bag_embed_padded, clip_global_norm, hinge_rank_loss, init_embedding, scatter_rows, sgd_step
from .encoding import CandidateTable, pad_ids, sample_negatives

SE_DEFAULTS = {
    "PT1": dict(learning_rate=0.01, margin=0.01, dim=32, negatives=100, use_history=True),
    "PT2": dict(learning_rate=0.01, margin=0.01, dim=128, negatives=100, use_history=False),
    "PT3": dict(learning_rate=0.01, margin=0.1, dim=128, negatives=1000, use_history=False),
    "PT4": dict(learning_rate=0.001, margin=0.1, dim=128, negatives=1000, use_history=False),
    "PT5": dict(learning_rate=0.01, margin=0.01, dim=32, negatives=100, use_history=True),
}


@dataclass
class EmbeddingHyper:
    learning_rate: float = 0.01
    margin: float = 0.01
    dim: int = 32
    negatives: int = 100
    use_history: bool = True
    max_grad_norm: float | None = 40.0

    @classmethod
    def for_task(cls, task: str, **overrides) -> "EmbeddingHyper":
        return cls(**{**SE_DEFAULTS[task], **overrides})


def se_encode_input(dialog: Dialog, turn_index: int, use_history: bool) -> list[str]:
    """Input tokens for the exchange at ``turn_index``."""
    last = dialog.turns[turn_index].text.split()
    if not use_history:
        return last
    tokens = []
    for turn in dialog.turns[:turn_index]:
        tokens += turn.text.split()
        if turn.kind == EXCHANGE:
            tokens += turn.bot.split()
    return tokens + last


@dataclass
class EncodedInputs:
    """History lines ``(H, L)`` and, per exchange, how many of them precede it."""

    line_ids: np.ndarray
    n_lines: np.ndarray
    query_ids: np.ndarray
    gold: np.ndarray
    turn_index: np.ndarray

    def __len__(self) -> int:
        return len(self.query_ids)


def encode_inputs(dialog: Dialog, vocab: Vocabulary, candidates: CandidateTable | None) -> EncodedInputs:
    lines, n_lines, queries, gold, turn_index = [], [], [], [], []
    for i, turn in enumerate(dialog.turns):
        if turn.kind == EXCHANGE:
            n_lines.append(len(lines))
            queries.append(vocab.encode(turn.text))
            gold.append(candidates.index.get(turn.bot, -1) if candidates is not None else -1)
            turn_index.append(i)
            lines.append(vocab.encode(turn.text + " " + turn.bot))
        else:
            lines.append(vocab.encode(turn.text))
    return EncodedInputs(
        pad_ids(lines), np.asarray(n_lines, dtype=np.int64), pad_ids(queries),
        np.asarray(gold, dtype=np.int64), np.asarray(turn_index, dtype=np.int64),
    )


class SupervisedEmbedding:
    kind = "embedding"

    def __init__(self, hp: EmbeddingHyper, vocab_size: int, seed: int = 0, dtype=np.float32, params=None):
        self.hp = hp
        if params is None:
            rng = Rng(seed).child("init/embedding")
            params = {"A": init_embedding(rng, vocab_size, hp.dim, dtype), "B": init_embedding(rng, vocab_size, hp.dim, dtype)}
        self.params = params

    def input_embeddings(self, enc: EncodedInputs, params=None):
        A = (self.params if params is None else params)["A"]
        x = bag_embed_padded(A, enc.query_ids)
        if self.hp.use_history and len(enc.line_ids):
            prefix = np.cumsum(bag_embed_padded(A, enc.line_ids), axis=0)
            hist = np.where((enc.n_lines > 0)[:, None], prefix[np.maximum(enc.n_lines - 1, 0)], 0)
            x = x + hist
        return x

    def candidate_embeddings(self, candidates: CandidateTable, params=None) -> np.ndarray:
        return bag_embed_padded((self.params if params is None else params)["B"], candidates.ids)

    def scores(self, enc: EncodedInputs, candidates: CandidateTable, cand_emb=None):
        if cand_emb is None:
            cand_emb = self.candidate_embeddings(candidates)
        return self.input_embeddings(enc) @ cand_emb.T, None

    def loss_and_grads(self, enc: EncodedInputs, candidates: CandidateTable, selected: np.ndarray, params=None):
        P = self.params if params is None else params
        A, B = P["A"], P["B"]
        x = self.input_embeddings(enc, P)
        cand_ids = candidates.ids[selected]
        Y = bag_embed_padded(B, cand_ids)
        s = np.einsum("tcd,td->tc", Y, x)
        margins = self.hp.margin - s[:, :1] + s[:, 1:]
        loss, active = hinge_rank_loss(self.hp.margin, s[:, 0], s[:, 1:])
        ds = np.zeros_like(s)
        ds[:, 1:] = active
        ds[:, 0] = -active.sum(axis=1)
        gA, gB = np.zeros_like(A), np.zeros_like(B)
        dx = np.einsum("tc,tcd->td", ds, Y)
        scatter_rows(gB, cand_ids, ds[:, :, None] * x[:, None, :])
        scatter_rows(gA, enc.query_ids, dx)
        if self.hp.use_history and len(enc.line_ids):
            # line j feeds every exchange with n_lines > j
            per_count = np.zeros((len(enc.line_ids) + 1, dx.shape[1]), dtype=dx.dtype)
            np.add.at(per_count, enc.n_lines, dx)
            dline = np.cumsum(per_count[::-1], axis=0)[::-1][1:]
            scatter_rows(gA, enc.line_ids, dline)
        return loss, {"A": gA, "B": gB}, margins

    def train_step(self, enc: EncodedInputs, candidates: CandidateTable, rng: np.random.Generator, pool=None) -> float:
        if np.any(enc.gold < 0):
            raise ValueError("gold response missing from the candidate set")
        neg = sample_negatives(rng, len(candidates), enc.gold, self.hp.negatives, pool)
        selected = np.concatenate([enc.gold[:, None], neg], axis=1)
        loss, grads, _ = self.loss_and_grads(enc, candidates, selected)
        if not np.isfinite(loss):
            raise FloatingPointError("non-finite loss")
        if not np.isfinite(clip_global_norm(grads, self.hp.max_grad_norm)):
            raise FloatingPointError("non-finite gradient")
        sgd_step(self.params, grads, self.hp.learning_rate)
        return loss
