"""Corpus files: dialog line format, candidate set, vocabulary, generation."""
from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .kb import (
    AGES,
    DIETS,
    GENDERS,
    PARTY_SIZES,
    PRICES,
    KbConfig,
    KnowledgeBase,
    UserProfile,
    generate_kb,
    profile_from_line,
)
from .numerics import Rng
from .simulator import (
    EXCHANGE,
    FACT,
    PROFILE,
    TASKS,
    Dialog,
    DialogTurn,
    contact_info,
    directions_info,
    generate_dialog,
    task_id,
)
from .templates import BOT_TEMPLATES, SILENCE, STYLES, USER_PATTERNS, render_bot_utterance

log = logging.getLogger(__name__)

SPLITS = ("trn", "dev", "tst", "tst-OOV")
FULL_SIZES = {"PT1": 6000, "PT2": 6000, "PT3": 12000, "PT4": 6000, "PT5": 12000}
SMALL_SIZE = 1000
SPEAKER_TAGS = ("$u", "$b")
CANDIDATES_FILE = "candidates.txt"


class CorpusError(ValueError):
    """Malformed corpus file or a corpus inconsistent with its candidates."""


# ---------------------------------------------------------------------------
# line format


def serialize_dialog(d: Dialog) -> str:
    lines = []
    for n, turn in enumerate(d.turns, start=1):
        if turn.kind == EXCHANGE:
            lines.append(f"{n} {turn.text}\t{turn.bot}\n")
        else:
            lines.append(f"{n} {turn.text}\n")
    return "".join(lines)


def serialize_dialogs(dialogs: Iterable[Dialog]) -> str:
    return "\n".join(serialize_dialog(d) for d in dialogs)


def _parse_block(lines: list[tuple[int, str]], task: str | None) -> Dialog:
    turns = []
    for expected, (lineno, line) in enumerate(lines, start=1):
        head, sep, body = line.partition(" ")
        if not sep or not head.isdigit():
            raise CorpusError(f"line {lineno}: missing line number")
        if int(head) != expected:
            raise CorpusError(f"line {lineno}: expected number {expected}, got {head}")
        tabs = body.count("\t")
        if tabs > 1:
            raise CorpusError(f"line {lineno}: more than one tab")
        if tabs == 1:
            if expected == 1:
                raise CorpusError(f"line {lineno}: dialog must open with a profile line")
            user, bot = body.split("\t")
            if not bot:
                raise CorpusError(f"line {lineno}: empty bot utterance")
            turns.append(DialogTurn(EXCHANGE, user, bot))
        elif expected == 1:
            try:
                profile_from_line(body.split(" "))
            except ValueError as exc:
                raise CorpusError(f"line {lineno}: missing profile line ({exc})") from None
            turns.append(DialogTurn(PROFILE, body))
        else:
            turns.append(DialogTurn(FACT, body))
    profile = profile_from_line(turns[0].text.split(" "))
    return Dialog(profile, tuple(turns), task)


def iter_dialogs(text: str, task: str | None = None) -> Iterator[Dialog]:
    block: list[tuple[int, str]] = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        if raw == "":
            if block:
                yield _parse_block(block, task)
                block = []
            continue
        block.append((lineno, raw))
    if block:
        yield _parse_block(block, task)


def parse_dialogs(text: str, task: str | None = None) -> list[Dialog]:
    return list(iter_dialogs(text, task))


def parse_dialog(text: str, task: str | None = None) -> Dialog:
    dialogs = parse_dialogs(text, task)
    if len(dialogs) != 1:
        raise CorpusError(f"expected one dialog, found {len(dialogs)}")
    return dialogs[0]


def read_dialogs(path, task: str | None = None) -> list[Dialog]:
    with open(path, encoding="utf-8", newline="\n") as fh:
        return parse_dialogs(fh.read(), task)


def write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def split_filename(task, split: str) -> str:
    n = task_id(task)[2:]
    return f"personalized-dialog-task{n}-{split}.txt"


# ---------------------------------------------------------------------------
# candidates and vocabulary


def enumerate_bot_utterances(halves: Iterable[KnowledgeBase]) -> set[str]:
    """Every utterance the simulator can emit over the given KB halves."""
    out = set()
    fixed = [t for t, tpl in BOT_TEMPLATES.items() if not tpl.placeholders()]
    for style in STYLES:
        for t in fixed:
            out.add(render_bot_utterance(t, style))
    for kb in halves:
        for c in kb.cuisines:
            for loc in kb.locations:
                for party in PARTY_SIZES:
                    for price in PRICES:
                        out.add(f"api_call {c} {loc} {party} {price}")
        for r in kb.restaurants:
            infos = {directions_info(r)}
            for age in ("young", "elderly"):
                infos.add(contact_info(r, UserProfile("male", age)))
            for style in STYLES:
                out.add(render_bot_utterance("proposal", style, {"restaurant": r.name}))
                for info in infos:
                    out.add(render_bot_utterance("info", style, {"info": info}))
    return out


def build_candidate_set(dialogs: Iterable[Dialog], halves: Iterable[KnowledgeBase]) -> list[str]:
    cands = enumerate_bot_utterances(halves)
    for d in dialogs:
        cands.update(t.bot for t in d.turns if t.kind == EXCHANGE)
    return sorted(cands)


def read_candidates(path) -> list[str]:
    with open(path, encoding="utf-8", newline="\n") as fh:
        return [line.rstrip("\n") for line in fh if line.rstrip("\n")]


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple

    def __post_init__(self):
        object.__setattr__(self, "_ids", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __getitem__(self, token: str) -> int:
        return self._ids[token]

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def encode(self, text: str) -> list[int]:
        return [self._ids[t] for t in text.split()]

    def digest(self) -> bytes:
        return hashlib.sha256("\n".join(self.tokens).encode()).digest()


def build_vocabulary(
    dialogs: Iterable[Dialog],
    candidates: Iterable[str],
    halves: Iterable[KnowledgeBase] = (),
) -> Vocabulary:
    """Whitespace tokens of dialogs, candidates and KB facts; ids sorted by token."""
    tokens = set(SPEAKER_TAGS) | {SILENCE}
    # literal words of every user pattern, so the vocabulary does not depend
    # on which patterns a particular sample happened to draw
    for patterns in USER_PATTERNS.values():
        for pattern in patterns:
            tokens.update(w for w in pattern.split() if not w.startswith("{"))
    for kb in halves:
        tokens.update(kb.cuisines)
        tokens.update(kb.locations)
    tokens.update(PARTY_SIZES + PRICES + GENDERS + AGES + DIETS)
    for d in dialogs:
        for t in d.turns:
            tokens.update(t.text.split())
            if t.bot:
                tokens.update(t.bot.split())
    for c in candidates:
        tokens.update(c.split())
    for kb in halves:
        for f in kb.facts():
            tokens.update((f.subject, f.relation, f.value))
        for dishes in kb.dish_lists.values():
            tokens.update(dishes)
    return Vocabulary(tuple(sorted(tokens)))


# ---------------------------------------------------------------------------
# generation


def split_size(task, variant: str) -> int:
    if variant == "small":
        return SMALL_SIZE
    if variant == "full":
        return FULL_SIZES[task_id(task)]
    raise ValueError(f"unknown variant {variant!r}")


def generate_split(task, split: str, n: int, seed: int, halves, full_profile: bool | None = None) -> list[Dialog]:
    """``n`` dialogs; dialog ``i`` depends only on (seed, task, split, i), so the
    small set is the prefix of the full one."""
    task = task_id(task)
    kb_a, kb_b = halves
    kb = kb_b if split == "tst-OOV" else kb_a
    root = Rng(seed).child(f"corpus/{task}/{split}")
    return [generate_dialog(task, root.child(str(i)), kb, full_profile) for i in range(n)]


def generate_corpus(
    out_dir,
    seed: int,
    tasks=TASKS,
    variant: str = "small",
    splits=SPLITS,
    kb_config: KbConfig | None = None,
    full_profile: bool | None = None,
    n_dialogs: int | None = None,
) -> dict:
    """Write split files, ``candidates.txt`` and ``kb-{A,B}.txt`` to ``out_dir``.

    The candidate file covers every utterance over both halves, independent of
    which tasks were generated, so any subset of tasks shares one candidate set.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    halves = generate_kb(seed, kb_config)
    written = {}
    gold = set()
    for task in tasks:
        n = n_dialogs or split_size(task, variant)
        for split in splits:
            dialogs = generate_split(task, split, n, seed, halves, full_profile)
            gold.update(t.bot for d in dialogs for t in d.turns if t.kind == EXCHANGE)
            path = out / split_filename(task, split)
            write_text(path, serialize_dialogs(dialogs))
            written[path.name] = len(dialogs)
            log.info("wrote %s (%d dialogs)", path, len(dialogs))
    cands = enumerate_bot_utterances(halves)
    missing = gold - cands
    if missing:
        raise CorpusError(f"{len(missing)} generated utterances missing from the candidate set, e.g. {sorted(missing)[0]!r}")
    write_text(out / CANDIDATES_FILE, "".join(c + "\n" for c in sorted(cands)))
    for kb in halves:
        write_text(out / f"kb-{kb.half_id}.txt", kb.export())
    return written


def default_data_dir() -> Path:
    return Path(os.environ.get("PERSONA_DIALOG_DATA", "data"))
