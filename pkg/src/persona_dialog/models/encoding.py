"""Turn dialogs into padded token-id arrays, one batch per dialog."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus import Vocabulary
from ..simulator import EXCHANGE, FACT, PROFILE, Dialog

USER_TAG, BOT_TAG = "$u", "$b"
STANDARD, SPLIT = "standard", "split"


def pad_ids(seqs, width: int | None = None) -> np.ndarray:
    width = width if width is not None else max((len(s) for s in seqs), default=0)
    out = np.full((len(seqs), max(width, 1)), -1, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out


@dataclass
class CandidateTable:
    texts: list
    ids: np.ndarray  # (n_cand, L) padded with -1
    index: dict

    @classmethod
    def build(cls, texts, vocab: Vocabulary) -> "CandidateTable":
        texts = list(texts)
        return cls(texts, pad_ids([vocab.encode(t) for t in texts]), {t: i for i, t in enumerate(texts)})

    def __len__(self) -> int:
        return len(self.texts)


@dataclass
class MemoryEntry:
    time: int  # 1-based line position in the dialog
    locutor: str  # "user", "bot" or "" for the profile
    text: str
    tokens: list


@dataclass
class EncodedDialog:
    """All exchanges of one dialog.

    ``entry_ids`` holds the conversation memory in chronological order; the
    memory of exchange ``t`` is the prefix ``entry_ids[:n_visible[t]]``. In the
    standard layout the profile line is entry 0; in the split layout the
    profile attributes live in ``profile_ids`` instead.
    """

    variant: str
    entries: list
    entry_ids: np.ndarray
    profile_entries: list
    profile_ids: np.ndarray
    query_ids: np.ndarray
    query_texts: list
    n_visible: np.ndarray
    gold: np.ndarray
    turn_index: np.ndarray

    def __len__(self) -> int:
        return len(self.query_ids)


def build_memories(dialog: Dialog, upto: int, variant: str = STANDARD):
    """Memory entries visible before turn ``upto``.

    Returns ``(conversation, profile)`` where ``profile`` is ``None`` in the
    standard layout (the profile line is then conversation entry 0).
    """
    conv: list[MemoryEntry] = []
    profile = None
    time = 0
    for turn in dialog.turns[:upto]:
        time += 1
        if turn.kind == PROFILE:
            if variant == SPLIT:
                profile = [MemoryEntry(0, "", a, [a]) for a in turn.text.split()]
                time -= 1
            else:
                conv.append(MemoryEntry(time, "", turn.text, [USER_TAG] + turn.text.split()))
        elif turn.kind == FACT:
            conv.append(MemoryEntry(time, "user", turn.text, [USER_TAG] + turn.text.split()))
        else:
            conv.append(MemoryEntry(time, "user", turn.text, [USER_TAG] + turn.text.split()))
            time += 1
            conv.append(MemoryEntry(time, "bot", turn.bot, [BOT_TAG] + turn.bot.split()))
    return conv, profile


def encode_dialog(dialog: Dialog, vocab: Vocabulary, candidates: CandidateTable | None, variant: str = STANDARD) -> EncodedDialog:
    entries, profile = build_memories(dialog, len(dialog.turns), variant)
    if profile is None:
        profile = []
    # number of conversation entries preceding each turn
    counts = []
    n = 0
    for turn in dialog.turns:
        counts.append(n)
        if turn.kind == EXCHANGE:
            n += 2
        elif turn.kind == FACT or variant != SPLIT:
            n += 1
    queries, n_visible, gold, turn_index = [], [], [], []
    for i, turn in enumerate(dialog.turns):
        if turn.kind != EXCHANGE:
            continue
        queries.append(vocab.encode(turn.text))
        n_visible.append(counts[i])
        turn_index.append(i)
        gold.append(candidates.index.get(turn.bot, -1) if candidates is not None else -1)
    return EncodedDialog(
        variant=variant,
        entries=entries,
        entry_ids=pad_ids([[vocab[t] for t in e.tokens] for e in entries]),
        profile_entries=profile,
        profile_ids=pad_ids([[vocab[t] for t in e.tokens] for e in profile]),
        query_ids=pad_ids(queries),
        query_texts=[dialog.turns[i].text for i in turn_index],
        n_visible=np.asarray(n_visible, dtype=np.int64),
        gold=np.asarray(gold, dtype=np.int64),
        turn_index=np.asarray(turn_index, dtype=np.int64),
    )


def sample_negatives(rng: np.random.Generator, n_candidates: int, gold: np.ndarray, n: int,
                     pool: np.ndarray | None = None) -> np.ndarray:
    """``n`` distinct non-gold candidate indices per row, uniformly.

    ``pool`` (sorted candidate indices) restricts the draw to a subset of the
    candidate set; by default every candidate is eligible.
    """
    if pool is None:
        if n >= n_candidates:
            raise ValueError(f"cannot sample {n} negatives from {n_candidates} candidates")
        out = np.empty((len(gold), n), dtype=np.int64)
        for row, g in enumerate(gold):
            draw = rng.choice(n_candidates - 1, size=n, replace=False)
            out[row] = draw + (draw >= g)
        return out
    out = np.empty((len(gold), n), dtype=np.int64)
    for row, g in enumerate(gold):
        pos = int(np.searchsorted(pool, g))
        inside = pos < len(pool) and pool[pos] == g
        size = len(pool) - inside
        if n > size:
            raise ValueError(f"cannot sample {n} negatives from a pool of {size}")
        draw = rng.choice(size, size=n, replace=False)
        if inside:
            draw = draw + (draw >= pos)
        out[row] = pool[draw]
    return out
