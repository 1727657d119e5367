"""Ranking over the full candidate set."""
from __future__ import annotations

import numpy as np


def predict(model, enc, candidates, cand_emb=None):
    """Best candidate index per exchange and the attention trace (``None`` for
    the embedding model). ``np.argmax`` keeps the lowest index on ties."""
    if len(candidates) == 0:
        raise ValueError("empty candidate set")
    scores, trace = model.scores(enc, candidates, cand_emb)
    return np.argmax(scores, axis=1), trace
