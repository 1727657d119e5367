"""Training and evaluation driver, multi-task runner and attention export."""
from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .corpus import (
    CANDIDATES_FILE,
    SPLITS,
    CorpusError,
    Vocabulary,
    build_vocabulary,
    read_candidates,
    read_dialogs,
    serialize_dialog,
    split_filename,
)
from .kb import PROFILE_STYLES, generate_kb, load_kb
from .models import (
    SPLIT,
    STANDARD,
    CandidateTable,
    EmbeddingHyper,
    MemNN,
    MemNNHyper,
    SupervisedEmbedding,
    encode_dialog,
    encode_inputs,
    load_checkpoint,
    save_checkpoint,
)
from .models.embedding import SE_DEFAULTS
from .models.memnn import MEMNN_DEFAULTS
from .numerics import Rng
from .oracle import DialogState, Oracle, UnknownIntentError
from .simulator import EXCHANGE, FACT, Dialog, generate_dialog, task_id
from .kb import KbFact

log = logging.getLogger(__name__)

MEMNN, EMBEDDING = "memnn", "embedding"
EPOCH_CAP = {"full": 100, "small": 200}
PATIENCE = 10


class ConfigError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    """One training run. Unset hyperparameters fall back to the per-task tables."""

    task: str = "PT1"
    set_variant: str = "small"
    model: str = MEMNN
    memory: str = STANDARD
    learning_rate: float | None = None
    margin: float | None = None
    dim: int | None = None
    negatives: int | None = None
    hops: int | None = None
    use_history: bool | None = None
    memory_size: int = 200
    corpus_seed: int = 0
    train_seed: int = 0
    data_dir: str = "data"
    out_dir: str = "runs"
    max_epochs: int | None = None
    patience: int = PATIENCE
    n_train: int | None = None
    negative_pool: str = "all"
    max_grad_norm: float | None = 40.0

    def __post_init__(self):
        try:
            self.task = task_id(self.task)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.set_variant not in EPOCH_CAP:
            raise ConfigError(f"set_variant must be full or small, got {self.set_variant!r}")
        if self.model not in (MEMNN, EMBEDDING):
            raise ConfigError(f"model must be {MEMNN} or {EMBEDDING}, got {self.model!r}")
        if self.memory not in (STANDARD, SPLIT):
            raise ConfigError(f"memory must be {STANDARD} or {SPLIT}, got {self.memory!r}")
        if self.negative_pool not in ("train", "all"):
            raise ConfigError(f"negative_pool must be train or all, got {self.negative_pool!r}")

    @property
    def epoch_cap(self) -> int:
        return self.max_epochs if self.max_epochs is not None else EPOCH_CAP[self.set_variant]

    def hyper(self):
        chosen = {f.name: getattr(self, f.name) for f in fields(self)}
        if self.model == MEMNN:
            keys = ("learning_rate", "margin", "dim", "negatives", "hops")
            over = {k: chosen[k] for k in keys if chosen[k] is not None}
            return MemNNHyper.for_task(self.task, memory_size=self.memory_size, variant=self.memory,
                                       max_grad_norm=self.max_grad_norm, **over)
        keys = ("learning_rate", "margin", "dim", "negatives", "use_history")
        over = {k: chosen[k] for k in keys if chosen[k] is not None}
        return EmbeddingHyper.for_task(self.task, max_grad_norm=self.max_grad_norm, **over)

    def build_model(self, vocab_size: int):
        hp = self.hyper()
        if self.model == MEMNN:
            return MemNN(hp, vocab_size, seed=self.train_seed)
        return SupervisedEmbedding(hp, vocab_size, seed=self.train_seed)

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kw[key] = _coerce(key, raw)
        return cls(**kw)


_INT_KEYS = {"dim", "negatives", "hops", "memory_size", "corpus_seed", "train_seed", "max_epochs", "patience", "n_train"}
_FLOAT_KEYS = {"learning_rate", "margin", "max_grad_norm"}


def _coerce(key: str, raw):
    if raw is None or not isinstance(raw, str):
        return raw
    if key == "max_grad_norm" and raw.lower() == "none":
        return None
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    if key == "use_history":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"bad boolean for use_history: {raw!r}")
    return raw


def read_config_file(path) -> dict:
    """``key=value`` lines; ``#`` starts a comment; blank lines ignored."""
    values = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{n}: expected key=value")
        values[key.strip()] = value.strip()
    return values


def default_hyperparameters(model: str, task) -> dict:
    table = MEMNN_DEFAULTS if model == MEMNN else SE_DEFAULTS
    return dict(table[task_id(task)])


# ---------------------------------------------------------------------------
# corpus loading


@dataclass
class Corpus:
    splits: dict  # split name -> list[Dialog]
    candidates: list
    vocab: Vocabulary
    table: CandidateTable

    def dialogs(self, split: str) -> list:
        try:
            return self.splits[split]
        except KeyError:
            raise CorpusError(f"split {split!r} not loaded") from None


def load_corpus(data_dir, task, splits: Sequence[str] = SPLITS) -> Corpus:
    data_dir = Path(data_dir)
    cand_path = data_dir / CANDIDATES_FILE
    if not cand_path.exists():
        raise CorpusError(f"no {CANDIDATES_FILE} in {data_dir}")
    candidates = read_candidates(cand_path)
    halves = [load_kb(data_dir / f"kb-{h}.txt", h) for h in ("A", "B") if (data_dir / f"kb-{h}.txt").exists()]
    loaded = {}
    for split in splits:
        path = data_dir / split_filename(task, split)
        if not path.exists():
            raise CorpusError(f"missing split file {path}")
        loaded[split] = read_dialogs(path, task_id(task))
    return make_corpus(loaded, candidates, halves)


def make_corpus(splits: dict, candidates: list, halves=()) -> Corpus:
    vocab = build_vocabulary([d for ds in splits.values() for d in ds], candidates, halves)
    return Corpus(splits, candidates, vocab, CandidateTable.build(candidates, vocab))


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_accuracy: float


@dataclass
class Metrics:
    test_accuracy: float | None = None
    oov_accuracy: float | None = None
    dev_curve: list = field(default_factory=list)
    best_epoch: int | None = None
    wall_clock: float = 0.0

    def rows(self) -> list[list]:
        return [[r.epoch, f"{r.train_loss:.6f}", f"{r.dev_accuracy:.4f}"] for r in self.dev_curve]


def _gold_indices(dialog: Dialog, table: CandidateTable) -> list[int]:
    out = []
    for n, turn in enumerate(dialog.turns, start=1):
        if turn.kind == EXCHANGE:
            if turn.bot not in table.index:
                raise CorpusError(f"gold response missing from candidates (line {n}): {turn.bot!r}")
            out.append(table.index[turn.bot])
    return out


class ModelRanker:
    """Ranks every exchange of a dialog with a trained model."""

    def __init__(self, model, vocab: Vocabulary, table: CandidateTable):
        self.model, self.vocab, self.table = model, vocab, table
        self._cand = model.candidate_embeddings(table)

    def encode(self, dialog: Dialog):
        if isinstance(self.model, MemNN):
            return encode_dialog(dialog, self.vocab, self.table, self.model.hp.variant)
        return encode_inputs(dialog, self.vocab, self.table)

    def rank_encoded(self, enc) -> np.ndarray:
        scores, _ = self.model.scores(enc, self.table, self._cand)
        return np.argmax(scores, axis=1)

    def rank(self, dialog: Dialog) -> np.ndarray:
        return self.rank_encoded(self.encode(dialog))


class OracleRanker:
    def __init__(self, table: CandidateTable, oracle: Oracle | None = None):
        self.table, self.oracle = table, oracle or Oracle()

    def rank(self, dialog: Dialog) -> np.ndarray:
        out = []
        state = DialogState()
        facts: list = []
        for turn in dialog.turns:
            if turn.kind == FACT:
                facts.append(KbFact.parse(turn.text))
            elif turn.kind == EXCHANGE:
                idx, state = self.oracle.rank(state, dialog.profile, turn.text, facts, self.table.index)
                out.append(idx)
        return np.asarray(out, dtype=np.int64)


def evaluate(ranker, dialogs: Sequence[Dialog], table: CandidateTable) -> float:
    """Per-response accuracy in percent over all exchange turns."""
    correct = total = 0
    for d in dialogs:
        gold = np.asarray(_gold_indices(d, table), dtype=np.int64)
        pred = ranker.rank(d)
        correct += int((pred == gold).sum())
        total += len(gold)
    if total == 0:
        raise CorpusError("no exchange turns to evaluate")
    return 100.0 * correct / total


def _accuracy_encoded(ranker: ModelRanker, encoded) -> float:
    correct = total = 0
    for enc in encoded:
        correct += int((ranker.rank_encoded(enc) == enc.gold).sum())
        total += len(enc.gold)
    return 100.0 * correct / max(total, 1)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    model: object
    metrics: Metrics
    checkpoint: Path | None
    config: ExperimentConfig


def _encode_all(model, dialogs, corpus: Corpus):
    out = []
    for d in dialogs:
        enc = (encode_dialog(d, corpus.vocab, corpus.table, model.hp.variant) if isinstance(model, MemNN)
               else encode_inputs(d, corpus.vocab, corpus.table))
        if np.any(enc.gold < 0):
            raise CorpusError("gold response missing from candidates")
        out.append(enc)
    return out


def train(cfg: ExperimentConfig, corpus: Corpus | None = None, out_dir=None,
          progress: Callable[[EpochRecord], None] | None = None,
          train_dialogs=None, dev_dialogs=None, test_sets: dict | None = None) -> TrainResult:
    """Seeded SGD with dev-based early stopping; the best epoch is kept.

    ``train_dialogs``/``dev_dialogs``/``test_sets`` override the corpus splits
    (the multi-task runner passes profile-filtered sets).
    """
    start = time.perf_counter()
    if corpus is None:
        corpus = load_corpus(cfg.data_dir, cfg.task)
    trn = train_dialogs if train_dialogs is not None else corpus.dialogs("trn")
    dev = dev_dialogs if dev_dialogs is not None else corpus.dialogs("dev")
    if cfg.n_train is not None:
        if cfg.n_train > len(trn):
            raise CorpusError(f"requested {cfg.n_train} training dialogs, only {len(trn)} available")
        trn = trn[: cfg.n_train]
    if test_sets is None:
        test_sets = {s: corpus.dialogs(s) for s in ("tst", "tst-OOV") if s in corpus.splits}

    model = cfg.build_model(len(corpus.vocab))
    trn_enc = _encode_all(model, trn, corpus)
    dev_enc = _encode_all(model, dev, corpus)
    # uniform over the whole candidate set by default; "train" restricts to responses seen in training
    pool = np.unique(np.concatenate([e.gold for e in trn_enc])) if cfg.negative_pool == "train" else None
    rng = Rng(cfg.train_seed).child(f"train/{cfg.task}").gen
    metrics = Metrics()
    best_acc, best_params, stale = -1.0, None, 0
    for epoch in range(1, cfg.epoch_cap + 1):
        total = 0.0
        for i in rng.permutation(len(trn_enc)):
            try:
                # overflow shows up as a non-finite loss or gradient, reported below
                with np.errstate(over="ignore", invalid="ignore"):
                    total += model.train_step(trn_enc[i], corpus.table, rng, pool)
            except FloatingPointError as exc:
                raise TrainingDiverged(f"training diverged at epoch {epoch}, training dialog {i}: {exc}") from exc
        acc = _accuracy_encoded(ModelRanker(model, corpus.vocab, corpus.table), dev_enc)
        record = EpochRecord(epoch, total, acc)
        metrics.dev_curve.append(record)
        if progress:
            progress(record)
        log.info("epoch %d loss %.4f dev %.2f", epoch, total, acc)
        if acc > best_acc:
            best_acc, stale, metrics.best_epoch = acc, 0, epoch
            best_params = {k: v.copy() for k, v in model.params.items()}
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.params = best_params
    ranker = ModelRanker(model, corpus.vocab, corpus.table)
    scores = {name: _accuracy_encoded(ranker, _encode_all(model, ds, corpus)) for name, ds in test_sets.items()}
    metrics.test_accuracy = scores.get("tst")
    metrics.oov_accuracy = scores.get("tst-OOV")
    metrics.wall_clock = time.perf_counter() - start
    if metrics.oov_accuracy is not None and metrics.test_accuracy is not None and metrics.oov_accuracy > metrics.test_accuracy:
        log.warning("OOV accuracy %.2f exceeds plain accuracy %.2f", metrics.oov_accuracy, metrics.test_accuracy)

    ckpt = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ckpt = out / "model.ckpt"
        save_checkpoint(ckpt, model, corpus.vocab.digest(), {"task": cfg.task, "best_epoch": metrics.best_epoch})
        write_table(out / "dev_curve", ["epoch", "train_loss", "dev_accuracy"], metrics.rows())
        summary = [["test_accuracy", _fmt(metrics.test_accuracy)], ["oov_accuracy", _fmt(metrics.oov_accuracy)],
                   ["best_epoch", metrics.best_epoch], ["epochs_run", len(metrics.dev_curve)],
                   ["wall_clock_s", f"{metrics.wall_clock:.1f}"]]
        write_table(out / "metrics", ["metric", "value"], summary)
    return TrainResult(model, metrics, ckpt, cfg)


def _fmt(x) -> str:
    return "" if x is None else f"{x:.2f}"


# ---------------------------------------------------------------------------
# reports


def render_csv(header: Sequence, rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def render_text(header: Sequence, rows: Sequence[Sequence]) -> str:
    cells = [[str(c) for c in header]] + [[str(c) for c in r] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def write_table(stem: Path, header, rows) -> None:
    """``stem.csv`` plus an aligned ``stem.txt``."""
    Path(f"{stem}.csv").write_text(render_csv(header, rows), encoding="utf-8")
    Path(f"{stem}.txt").write_text(render_text(header, rows), encoding="utf-8")


# ---------------------------------------------------------------------------
# multi-task


@dataclass
class MultiTaskPlan:
    per_profile_train: int = 1000
    per_profile_dev: int = 200
    per_profile_test: int = 1000
    corpus_seed: int = 0
    train_seed: int = 0
    task: str = "PT5"
    max_epochs: int | None = None
    styles: tuple = PROFILE_STYLES
    base: ExperimentConfig | None = None


@dataclass
class MultiTaskRow:
    profile: str
    specific: float
    multi: float

    @property
    def gain(self) -> float:
        return self.multi - self.specific


def profile_sets(task, split: str, per_profile: int, seed: int, halves, styles=PROFILE_STYLES) -> dict:
    """Draw dialogs until each (gender, age) style has ``per_profile`` of them."""
    buckets = {s: [] for s in styles}
    kb = halves[1] if split == "tst-OOV" else halves[0]
    root = Rng(seed).child(f"multitask/{task_id(task)}/{split}")
    i = 0
    limit = per_profile * len(styles) * 50
    while any(len(b) < per_profile for b in buckets.values()):
        if i >= limit:
            short = [f"{g} {a}" for (g, a), b in buckets.items() if len(b) < per_profile]
            raise CorpusError(f"profile filter yielded fewer than {per_profile} dialogs for {', '.join(short)}")
        d = generate_dialog(task, root.child(str(i)), kb)
        i += 1
        bucket = buckets.get(d.profile.style)
        if bucket is not None and len(bucket) < per_profile:
            bucket.append(d)
    return buckets


def run_multitask(plan: MultiTaskPlan, candidates: list | None = None, out_dir=None,
                  progress: Callable[[str, EpochRecord], None] | None = None) -> list[MultiTaskRow]:
    """Six profile-specific models against one model trained on their union."""
    halves = generate_kb(plan.corpus_seed)
    trn = profile_sets(plan.task, "trn", plan.per_profile_train, plan.corpus_seed, halves, plan.styles)
    dev = profile_sets(plan.task, "dev", plan.per_profile_dev, plan.corpus_seed, halves, plan.styles)
    tst = profile_sets(plan.task, "tst", plan.per_profile_test, plan.corpus_seed, halves, plan.styles)
    if candidates is None:
        from .corpus import enumerate_bot_utterances
        candidates = sorted(enumerate_bot_utterances(halves))
    everything = {"trn": [d for b in trn.values() for d in b], "dev": [d for b in dev.values() for d in b],
                  "tst": [d for b in tst.values() for d in b]}
    corpus = make_corpus(everything, candidates, halves)
    base = plan.base or ExperimentConfig(task=plan.task, set_variant="small", model=MEMNN, memory=STANDARD)
    base = replace(base, task=plan.task, corpus_seed=plan.corpus_seed, train_seed=plan.train_seed,
                   max_epochs=plan.max_epochs if plan.max_epochs is not None else base.max_epochs, n_train=None)

    def report(label):
        return (lambda rec: progress(label, rec)) if progress else None

    multi = train(base, corpus, train_dialogs=everything["trn"], dev_dialogs=everything["dev"],
                  test_sets={}, progress=report("multi"))
    multi_ranker = ModelRanker(multi.model, corpus.vocab, corpus.table)
    rows = []
    for style in plan.styles:
        label = " ".join(style)
        specific = train(base, corpus, train_dialogs=trn[style], dev_dialogs=dev[style], test_sets={},
                     progress=report(label))
        ranker = ModelRanker(specific.model, corpus.vocab, corpus.table)
        rows.append(MultiTaskRow(label, evaluate(ranker, tst[style], corpus.table),
                                 evaluate(multi_ranker, tst[style], corpus.table)))
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_table(Path(out_dir) / "multitask", ["profile", "profile_specific", "multi_profile", "gain"],
                    [[r.profile, f"{r.specific:.2f}", f"{r.multi:.2f}", f"{r.gain:+.2f}"] for r in rows])
    return rows


# ---------------------------------------------------------------------------
# attention export


@dataclass
class AttentionRow:
    block: str  # "profile" or "conversation"
    time: int | str
    locutor: str
    text: str
    weights: list  # one per hop


@dataclass
class AttentionTable:
    user_input: str
    gold: str
    predicted: str
    hops: int
    rows: list

    def header(self) -> list[str]:
        return ["block", "time", "locutor", "text"] + [f"hop{k + 1}" for k in range(self.hops)]

    def table_rows(self) -> list[list]:
        return [[r.block, r.time, r.locutor, r.text] + [f"{w:.6f}" for w in r.weights] for r in self.rows]

    def to_csv(self) -> str:
        return render_csv(self.header(), self.table_rows())

    def to_text(self) -> str:
        tail = f"\nuser input: {self.user_input}\ncorrect answer: {self.gold}\npredicted answer: {self.predicted}\n"
        return render_text(self.header(), self.table_rows()) + tail


def export_attention(model: MemNN, vocab: Vocabulary, table: CandidateTable, dialog: Dialog, turn: int) -> AttentionTable:
    """Per-hop attention of the exchange on line ``turn`` (1-based, as numbered in the corpus file)."""
    if not isinstance(model, MemNN):
        raise ValueError("attention export needs a memory network checkpoint")
    if not 1 <= turn <= len(dialog.turns):
        raise IndexError(f"turn {turn} out of range (dialog has {len(dialog.turns)} lines)")
    if dialog.turns[turn - 1].kind != EXCHANGE:
        raise ValueError(f"line {turn} is not an exchange")
    enc = encode_dialog(dialog, vocab, table, model.hp.variant)
    t = int(np.flatnonzero(enc.turn_index == turn - 1)[0])
    scores, trace = model.scores(enc, table)
    predicted = table.texts[int(np.argmax(scores[t]))]
    rows = []
    if model.split:
        for j, e in enumerate(enc.profile_entries):
            rows.append(AttentionRow("profile", "", "", e.text, [float(p[t, j]) for p in trace.profile]))
    n = int(enc.n_visible[t])
    for j, e in enumerate(enc.entries[:n]):
        rows.append(AttentionRow("conversation", e.time, e.locutor, e.text,
                                 [float(p[t, j]) for p in trace.conversation]))
    return AttentionTable(dialog.turns[turn - 1].text, dialog.turns[turn - 1].bot, predicted, model.hp.hops, rows)


# ---------------------------------------------------------------------------
# verification


@dataclass
class VerifyReport:
    files: int = 0
    dialogs: int = 0
    exchanges: int = 0
    mismatches: list = field(default_factory=list)

    @property
    def agreement(self) -> float:
        return 100.0 * (self.exchanges - len(self.mismatches)) / max(self.exchanges, 1)

    @property
    def ok(self) -> bool:
        return not self.mismatches


def verify_dialogs(dialogs: Sequence[Dialog], label: str = "", report: VerifyReport | None = None,
                   oracle: Oracle | None = None, stop_at_first: bool = False) -> VerifyReport:
    report = report or VerifyReport()
    oracle = oracle or Oracle()
    for k, d in enumerate(dialogs):
        report.dialogs += 1
        state, facts = DialogState(), []
        for n, turn in enumerate(d.turns, start=1):
            if turn.kind == FACT:
                facts.append(KbFact.parse(turn.text))
            elif turn.kind == EXCHANGE:
                report.exchanges += 1
                try:
                    predicted, state = oracle.step(state, d.profile, turn.text, facts)
                except UnknownIntentError as exc:
                    predicted = f"<error: {exc}>"
                if predicted != turn.bot:
                    report.mismatches.append((label, k + 1, n, turn.bot, predicted))
                    if stop_at_first:
                        return report
                    break
    return report


def verify_corpus(data_dir, stop_at_first: bool = False) -> VerifyReport:
    files = sorted(Path(data_dir).glob("personalized-dialog-task*-*.txt"))
    if not files:
        raise CorpusError(f"no corpus files in {data_dir}")
    report = VerifyReport()
    for path in files:
        report.files += 1
        verify_dialogs(read_dialogs(path), path.name, report, stop_at_first=stop_at_first)
        if stop_at_first and report.mismatches:
            break
    return report


def dialog_text(dialog: Dialog) -> str:
    return serialize_dialog(dialog)
