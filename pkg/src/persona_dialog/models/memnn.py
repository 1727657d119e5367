"""End-to-end memory network ranker, standard and split-memory layouts.

One embedding matrix ``A`` encodes memories, queries and candidates. Each hop
attends over the memory with ``softmax(u . m_i)``, reads ``o = sum p_i m_i``
and updates ``u <- R_k u + o``; memory vectors carry a learned recency
embedding. In the split layout the profile attributes form a second memory
with its own softmax and the two reads are summed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numerics import Rng, bag_embed_padded, clip_global_norm, hinge_rank_loss, init_embedding, scatter_rows, sgd_step
from .encoding import SPLIT, STANDARD, CandidateTable, EncodedDialog, sample_negatives

NEG_FILL = -1e30

MEMNN_DEFAULTS = {
    "PT1": dict(learning_rate=0.001, margin=0.01, dim=20, negatives=100, hops=1),
    "PT2": dict(learning_rate=0.001, margin=0.01, dim=20, negatives=100, hops=1),
    "PT3": dict(learning_rate=0.001, margin=0.01, dim=20, negatives=100, hops=3),
    "PT4": dict(learning_rate=0.001, margin=0.01, dim=20, negatives=100, hops=3),
    "PT5": dict(learning_rate=0.001, margin=0.01, dim=20, negatives=100, hops=3),
}


@dataclass
class MemNNHyper:
    learning_rate: float = 0.001
    margin: float = 0.01
    dim: int = 20
    negatives: int = 100
    hops: int = 3
    memory_size: int = 200
    variant: str = STANDARD
    # joint gradient norm cap per update; None disables it
    max_grad_norm: float | None = 40.0

    @classmethod
    def for_task(cls, task: str, **overrides) -> "MemNNHyper":
        return cls(**{**MEMNN_DEFAULTS[task], **overrides})


@dataclass
class AttentionTrace:
    """Per hop attention weights: ``conversation[k]`` is ``(T, E)``, ``profile[k]`` is ``(T, P)``."""

    conversation: list = field(default_factory=list)
    profile: list = field(default_factory=list)


class MemNN:
    kind = "memnn"

    def __init__(self, hp: MemNNHyper, vocab_size: int, seed: int = 0, dtype=np.float32, params=None):
        if hp.variant not in (STANDARD, SPLIT):
            raise ValueError(f"unknown variant {hp.variant!r}")
        self.hp = hp
        if params is None:
            rng = Rng(seed).child("init/memnn")
            params = {
                "A": init_embedding(rng, vocab_size, hp.dim, dtype),
                "R": np.stack([np.eye(hp.dim, dtype=dtype)] * hp.hops),
                "T": init_embedding(rng, hp.memory_size + 1, hp.dim, dtype),
            }
        self.params = params

    @property
    def split(self) -> bool:
        return self.hp.variant == SPLIT

    # -- forward -------------------------------------------------------

    def _memory(self, enc: EncodedDialog):
        """Visibility mask ``(T, E)`` and recency index ``(T, E)``."""
        E = len(enc.entries)
        j = np.arange(E)[None, :]
        n = enc.n_visible[:, None]
        visible = (j < n) & (j >= n - self.hp.memory_size)
        if not self.split and E:
            visible[:, 0] |= n[:, 0] > 0  # profile line is never truncated
        recency = np.clip(n - 1 - j, 0, self.hp.memory_size)
        return visible, recency

    def forward(self, enc: EncodedDialog, params=None, keep_cache: bool = False):
        """Final controller state ``(T, d)`` and the attention trace."""
        P = self.params if params is None else params
        A, R, Tm = P["A"], P["R"], P["T"]
        visible, recency = self._memory(enc)
        has_any = visible.any(axis=1, keepdims=True)
        base = bag_embed_padded(A, enc.entry_ids)[: len(enc.entries)]
        M = base[None, :, :] + Tm[recency]  # (T, E, d)
        u = bag_embed_padded(A, enc.query_ids)
        prof = bag_embed_padded(A, enc.profile_ids)[: len(enc.profile_entries)] if self.split else None
        trace = AttentionTrace()
        cache = {"visible": visible, "recency": recency, "M": M, "prof": prof, "u": [u], "p": [], "pp": []}
        for k in range(self.hp.hops):
            logits = np.einsum("ted,td->te", M, u)
            logits = np.where(visible, logits, NEG_FILL)
            p = _softmax_rows(logits) * has_any
            o = np.einsum("te,ted->td", p, M)
            trace.conversation.append(p)
            cache["p"].append(p)
            if self.split:
                pp = _softmax_rows(u @ prof.T)
                o = o + pp @ prof
                trace.profile.append(pp)
                cache["pp"].append(pp)
            u = u @ R[k].T + o
            cache["u"].append(u)
        if keep_cache:
            return u, trace, cache
        return u, trace

    def candidate_embeddings(self, candidates: CandidateTable, params=None) -> np.ndarray:
        A = (self.params if params is None else params)["A"]
        return bag_embed_padded(A, candidates.ids)

    def scores(self, enc: EncodedDialog, candidates: CandidateTable, cand_emb=None):
        u, trace = self.forward(enc)
        if cand_emb is None:
            cand_emb = self.candidate_embeddings(candidates)
        return u @ cand_emb.T, trace

    # -- training ------------------------------------------------------

    def loss_and_grads(self, enc: EncodedDialog, candidates: CandidateTable, selected: np.ndarray, params=None):
        """Hinge loss of gold ``selected[:, 0]`` against ``selected[:, 1:]``.

        Returns ``(loss, grads, margins)`` with ``margins`` the pre-hinge values.
        """
        P = self.params if params is None else params
        A = P["A"]
        u_final, _, cache = self.forward(enc, P, keep_cache=True)
        cand_ids = candidates.ids[selected]  # (T, C, L)
        W = bag_embed_padded(A, cand_ids)  # (T, C, d)
        s = np.einsum("tcd,td->tc", W, u_final)
        margins = self.hp.margin - s[:, :1] + s[:, 1:]
        loss, active = hinge_rank_loss(self.hp.margin, s[:, 0], s[:, 1:])

        ds = np.zeros_like(s)
        ds[:, 1:] = active
        ds[:, 0] = -active.sum(axis=1)
        gA = np.zeros_like(A)
        scatter_rows(gA, cand_ids, ds[:, :, None] * u_final[:, None, :])
        grads = self.backward(enc, P, cache, np.einsum("tc,tcd->td", ds, W), gA)
        return loss, grads, margins

    def backward(self, enc: EncodedDialog, params, cache, du: np.ndarray, gA: np.ndarray | None = None) -> dict:
        """Gradients of all parameters given ``du`` = dLoss/d(final state).

        ``gA`` may already hold the candidate-side gradient of ``A``.
        """
        A, R, Tm = params["A"], params["R"], params["T"]
        gA = np.zeros_like(A) if gA is None else gA
        gR = np.zeros_like(R)
        gT = np.zeros_like(Tm)

        M, visible, recency, prof = cache["M"], cache["visible"], cache["recency"], cache["prof"]
        dM = np.zeros_like(M)
        dprof = np.zeros_like(prof) if self.split else None
        for k in reversed(range(self.hp.hops)):
            u_k = cache["u"][k]
            gR[k] += du.T @ u_k
            do = du
            du = du @ R[k]
            p = cache["p"][k]
            dp = np.einsum("td,ted->te", do, M)
            dM += p[:, :, None] * do[:, None, :]
            dlogits = p * (dp - (p * dp).sum(axis=1, keepdims=True))
            dM += dlogits[:, :, None] * u_k[:, None, :]
            du += np.einsum("te,ted->td", dlogits, M)
            if self.split:
                pp = cache["pp"][k]
                dprof += pp.T @ do
                dpp = do @ prof.T
                dl = pp * (dpp - (pp * dpp).sum(axis=1, keepdims=True))
                dprof += dl.T @ u_k
                du += dl @ prof
        dM *= visible[:, :, None]
        E = len(enc.entries)
        if E:
            scatter_rows(gA, enc.entry_ids[:E], dM.sum(axis=0))
            flat = recency.reshape(-1)
            dflat = dM.reshape(-1, dM.shape[-1])
            for j in range(gT.shape[1]):
                gT[:, j] += np.bincount(flat, weights=dflat[:, j], minlength=gT.shape[0]).astype(gT.dtype)
        if self.split and len(enc.profile_entries):
            scatter_rows(gA, enc.profile_ids[: len(enc.profile_entries)], dprof)
        scatter_rows(gA, enc.query_ids, du)
        return {"A": gA, "R": gR, "T": gT}

    def train_step(self, enc: EncodedDialog, candidates: CandidateTable, rng: np.random.Generator, pool=None) -> float:
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


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    if logits.shape[1] == 0:
        return logits.copy()
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)
