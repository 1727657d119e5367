"""Small dense numerical core shared by the rankers.

Embedding matrices are stored row-major as ``(V, d)`` arrays: row ``t`` is the
embedding of token ``t``. Bags of tokens are summed, never averaged.
"""
from __future__ import annotations

import hashlib
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import sparse

INIT_SCALE = 0.1
# element count above which bag sums go through a sparse incidence product
_SPARSE_ABOVE = 200_000


class Rng:
    """Seeded generator with label-derived child streams.

    Child seeds are the first 8 bytes of ``blake2b("<seed>/<label>")`` so any
    two streams are independent of the order in which they were requested.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.gen = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, label: str) -> "Rng":
        digest = hashlib.blake2b(f"{self.seed}/{label}".encode(), digest_size=8).digest()
        return Rng(int.from_bytes(digest, "little"))

    def random(self) -> float:
        return float(self.gen.random())

    def randint(self, n: int) -> int:
        """Uniform integer in ``[0, n)``."""
        return int(self.gen.integers(n))

    def choice(self, seq: Sequence):
        return seq[self.randint(len(seq))]

    def shuffled(self, seq: Sequence) -> list:
        order = self.gen.permutation(len(seq))
        return [seq[i] for i in order]

    def sample(self, seq: Sequence, k: int) -> list:
        idx = self.gen.choice(len(seq), size=k, replace=False)
        return [seq[i] for i in idx]


def init_embedding(rng: Rng, vocab_size: int, dim: int, dtype=np.float32) -> np.ndarray:
    return rng.gen.uniform(-INIT_SCALE, INIT_SCALE, size=(vocab_size, dim)).astype(dtype)


def _check_ids(M: np.ndarray, tokens) -> np.ndarray:
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= M.shape[0]):
        raise IndexError(f"token id out of range for vocabulary of size {M.shape[0]}")
    return ids


def bag_embed(M: np.ndarray, tokens) -> np.ndarray:
    """Sum of the embedding rows of ``tokens``; empty bag gives zeros."""
    ids = _check_ids(M, tokens)
    if ids.size == 0:
        return np.zeros(M.shape[1], dtype=M.dtype)
    return M[ids].sum(axis=0)


def _incidence(ids: np.ndarray, n_cols: int | None = None, dtype=np.float64):
    """Sparse ``(bags, V)`` token-count matrix of a ``-1`` padded id array."""
    flat = ids.reshape(-1, ids.shape[-1]) if ids.ndim else ids.reshape(1, 1)
    bag_of, pos = np.nonzero(flat >= 0)
    cols = flat[bag_of, pos]
    return sparse.csr_matrix((np.ones(len(cols), dtype=dtype), (bag_of, cols)), shape=(len(flat), n_cols))


def bag_embed_padded(M: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Batched bag embedding of a ``(..., L)`` id array padded with ``-1``."""
    if ids.size and ids.max() >= M.shape[0]:
        raise IndexError(f"token id out of range for vocabulary of size {M.shape[0]}")
    if ids.shape[-1] == 0 or ids.size == 0:
        return np.zeros(ids.shape[:-1] + (M.shape[1],), dtype=M.dtype)
    if ids.size * M.shape[1] < _SPARSE_ABOVE:
        pad = ids < 0
        rows = M[np.where(pad, 0, ids)]
        rows[pad] = 0
        return rows.sum(axis=-2)
    out = _incidence(ids, M.shape[0], M.dtype) @ M
    return np.asarray(out, dtype=M.dtype).reshape(ids.shape[:-1] + (M.shape[1],))


def scatter_rows(grad: np.ndarray, ids: np.ndarray, rows: np.ndarray) -> None:
    """Accumulate ``rows[..., :]`` into ``grad[ids]`` for a ``-1`` padded id array.

    ``rows`` has shape ``ids.shape[:-1] + (d,)``: one gradient per bag, fanned
    out to every token of that bag.
    """
    if ids.size == 0 or not (ids >= 0).any():
        return
    d = grad.shape[1]
    if ids.size * d < _SPARSE_ABOVE:
        mask = ids >= 0
        flat_ids = ids[mask]
        flat_rows = rows[np.nonzero(mask)[:-1]]
        uniq, inv = np.unique(flat_ids, return_inverse=True)
        acc = np.zeros((len(uniq), d), dtype=grad.dtype)
        np.add.at(acc, inv, flat_rows)
        grad[uniq] += acc
        return
    S = _incidence(ids, grad.shape[0], rows.dtype).T.tocsr()
    used = np.flatnonzero(np.diff(S.indptr))
    grad[used] += (S[used] @ rows.reshape(-1, d)).astype(grad.dtype, copy=False)


def score_pair(A: np.ndarray, B: np.ndarray, x_tokens, y_tokens) -> float:
    """Bilinear score ``(A x) . (B y)`` of two bags."""
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"embedding dimensions differ: {A.shape[1]} vs {B.shape[1]}")
    return float(bag_embed(A, x_tokens) @ bag_embed(B, y_tokens))


def softmax(scores, axis: int = -1) -> np.ndarray:
    scores = np.asarray(scores)
    if scores.shape[axis] == 0:
        raise ValueError("softmax of an empty vector")
    z = scores - scores.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def hinge_rank_loss(margin: float, pos_score, neg_scores):
    """Sum of ``max(0, margin - pos + neg)`` over negatives.

    Returns ``(loss, active)`` where ``active`` flags negatives whose hinge is
    strictly positive. A hinge sitting exactly on its kink counts as inactive.
    Works on a scalar positive with a 1-D array of negatives, or batched
    ``(B,)`` positives with ``(B, N)`` negatives.
    """
    if margin <= 0:
        raise ValueError("margin must be positive")
    pos = np.asarray(pos_score)
    neg = np.asarray(neg_scores)
    pre = margin - pos[..., None] + neg if pos.ndim else margin - pos + neg
    active = pre > 0
    loss = np.where(active, pre, 0.0).sum()
    return float(loss), active


def sgd_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], learning_rate: float) -> None:
    """In-place ``p -= lr * g``; refuses non-finite gradients."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name}")
    for name, g in grads.items():
        p = params[name]
        p -= (learning_rate * g).astype(p.dtype, copy=False)


def clip_global_norm(grads: Mapping[str, np.ndarray], max_norm: float | None) -> float:
    """Rescale ``grads`` in place so their joint L2 norm is at most ``max_norm``; returns the original norm."""
    norm = float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))
    if max_norm is not None and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def grad_check(
    loss_fn: Callable[[dict], tuple],
    params: dict,
    eps: float = 1e-6,
    n_samples: int = 40,
    seed: int = 0,
    margins_fn: Callable[[dict], np.ndarray] | None = None,
) -> float:
    """Maximum relative error between analytic and central-difference gradients.

    ``loss_fn(params)`` returns ``(loss, grads)``. Up to ``n_samples``
    coordinates per parameter are probed. When ``margins_fn`` is given, any
    probe that moves a pre-hinge margin within ``10 * eps`` of zero is skipped.
    """
    rng = np.random.default_rng(seed)
    _, grads = loss_fn(params)
    worst = 0.0
    for name, p in params.items():
        flat = p.reshape(-1)
        n = flat.size
        idx = np.arange(n) if n <= n_samples else rng.choice(n, size=n_samples, replace=False)
        g_flat = np.asarray(grads[name]).reshape(-1)
        for i in idx:
            old = flat[i]
            flat[i] = old + eps
            if margins_fn is not None and np.any(np.abs(margins_fn(params)) < 10 * eps):
                flat[i] = old
                continue
            f_plus = loss_fn(params)[0]
            flat[i] = old - eps
            if margins_fn is not None and np.any(np.abs(margins_fn(params)) < 10 * eps):
                flat[i] = old
                continue
            f_minus = loss_fn(params)[0]
            flat[i] = old
            numeric = (f_plus - f_minus) / (2 * eps)
            analytic = float(g_flat[i])
            scale = max(abs(numeric), abs(analytic))
            err = abs(numeric - analytic) / scale if scale > 1e-10 else abs(numeric - analytic)
            worst = max(worst, err)
    return worst
