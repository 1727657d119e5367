"""Command-line entry point: generate, train, eval, multitask, inspect, verify."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .corpus import CANDIDATES_FILE, SPLITS, CorpusError, default_data_dir, generate_corpus, read_dialogs, split_filename
from .harness import (
    EMBEDDING,
    MEMNN,
    ConfigError,
    ExperimentConfig,
    ModelRanker,
    MultiTaskPlan,
    OracleRanker,
    TrainingDiverged,
    evaluate,
    export_attention,
    load_corpus,
    read_config_file,
    render_text,
    run_multitask,
    train,
    verify_corpus,
)
from .kb import KbConfigError
from .models import SPLIT, STANDARD, CheckpointError, load_checkpoint
from .oracle import CorpusInconsistency
from .simulator import TASKS, task_id

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3

log = logging.getLogger("persona_dialog")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _task_list(text: str) -> list[str]:
    if text == "all":
        return list(TASKS)
    try:
        return [task_id(t) for t in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _task(text: str) -> str:
    try:
        return task_id(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _train_flags(p: argparse.ArgumentParser) -> None:
    """Flags that override ``--config``; ``None`` means "not given"."""
    p.add_argument("--config", type=Path, help="key=value file; flags override it")
    p.add_argument("--task")
    p.add_argument("--set-variant", dest="set_variant", choices=("full", "small"))
    p.add_argument("--model", choices=(MEMNN, EMBEDDING))
    p.add_argument("--memory", choices=(STANDARD, SPLIT))
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--margin", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--negatives", type=int)
    p.add_argument("--hops", type=int)
    p.add_argument("--use-history", dest="use_history", choices=("true", "false"))
    p.add_argument("--train-seed", dest="train_seed", type=int)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--negative-pool", dest="negative_pool", choices=("all", "train"))
    p.add_argument("--max-grad-norm", dest="max_grad_norm", help="gradient norm cap, or 'none'")
    p.add_argument("--data", dest="data_dir", type=Path)
    p.add_argument("--out", dest="out_dir", type=Path)


_CONFIG_KEYS = ("task", "set_variant", "model", "memory", "learning_rate", "margin", "dim", "negatives", "hops",
                "use_history", "train_seed", "max_epochs", "patience", "n_train", "negative_pool", "max_grad_norm", "data_dir", "out_dir")


def _config(args) -> ExperimentConfig:
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    if "data_dir" not in values:
        values["data_dir"] = str(default_data_dir())
    for key in _CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = str(v)
    return ExperimentConfig.from_mapping(values)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="persona-dialog", description="Personalized restaurant dialog benchmark toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a seeded corpus, candidate set and KB")
    g.add_argument("--task", type=_task_list, default=list(TASKS), help="1-5, comma list, or 'all'")
    g.add_argument("--variant", choices=("full", "small"), default="small")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path, default=None)
    g.add_argument("--dialogs", type=int, default=None, help="override the per-split dialog count")
    g.add_argument("--full-profile", dest="full_profile", action="store_true", default=None,
                   help="show all four profile attributes in every task")

    t = sub.add_parser("train", help="train a ranker with early stopping")
    _train_flags(t)
    t.add_argument("--report", action="store_true", help="also render figures (needs matplotlib)")

    e = sub.add_parser("eval", help="per-response accuracy of a checkpoint or the oracle")
    e.add_argument("--task", type=_task, required=True)
    e.add_argument("--data", type=Path, default=None)
    e.add_argument("--checkpoint", type=Path, help="model checkpoint; omit to score the oracle")
    e.add_argument("--split", action="append", choices=SPLITS, help="repeatable; default tst and tst-OOV")

    m = sub.add_parser("multitask", help="profile-specific models against one multi-profile model")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--train-seed", type=int, default=0)
    m.add_argument("--per-profile", type=int, default=1000)
    m.add_argument("--per-profile-dev", type=int, default=200)
    m.add_argument("--per-profile-test", type=int, default=1000)
    m.add_argument("--memory", choices=(STANDARD, SPLIT), default=STANDARD)
    m.add_argument("--max-epochs", type=int, default=None)
    m.add_argument("--out", type=Path, default=Path("runs/multitask"))

    i = sub.add_parser("inspect", help="export per-hop attention for one exchange")
    i.add_argument("--checkpoint", type=Path, required=True)
    i.add_argument("--task", type=_task, required=True)
    i.add_argument("--data", type=Path, default=None)
    i.add_argument("--split", choices=SPLITS, default="tst")
    i.add_argument("--dialog", type=int, required=True, help="1-based dialog number in the split file")
    i.add_argument("--turn", type=int, required=True, help="line number of the exchange within the dialog")
    i.add_argument("--out", type=Path, default=None, help="stem for .csv/.txt output; default stdout")
    i.add_argument("--report", action="store_true", help="also render a heatmap (needs matplotlib)")

    v = sub.add_parser("verify", help="replay a corpus through the oracle")
    v.add_argument("data", type=Path, nargs="?", default=None)
    return parser


# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    out = args.out or default_data_dir()
    written = generate_corpus(out, args.seed, args.task, args.variant, full_profile=args.full_profile,
                              n_dialogs=args.dialogs)
    for name, n in written.items():
        print(f"{name}\t{n}")
    print(f"{CANDIDATES_FILE}\t{sum(1 for _ in open(Path(out) / CANDIDATES_FILE, encoding='utf-8'))}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out_dir) / f"{cfg.task}-{cfg.model}-{cfg.memory}-{cfg.set_variant}"
    report = verify_corpus(cfg.data_dir)
    if not report.ok:
        print(_mismatch_text(report.mismatches[0]), file=sys.stderr)
        return EXIT_DATA
    result = train(cfg, out_dir=out,
                   progress=lambda r: print(f"epoch {r.epoch}\tloss {r.train_loss:.4f}\tdev {r.dev_accuracy:.2f}", flush=True))
    m = result.metrics
    print(render_text(["metric", "value"], [
        ["test_accuracy", f"{m.test_accuracy:.2f}"], ["oov_accuracy", f"{m.oov_accuracy:.2f}"],
        ["best_epoch", m.best_epoch], ["wall_clock_s", f"{m.wall_clock:.1f}"], ["checkpoint", result.checkpoint],
    ]), end="")
    if args.report:
        from .report import plot_dev_curve
        print(f"figure\t{plot_dev_curve(m.dev_curve, out / 'dev_curve.png')}")
    return EXIT_OK


def cmd_eval(args) -> int:
    data = args.data or default_data_dir()
    splits = args.split or ["tst", "tst-OOV"]
    corpus = load_corpus(data, args.task, splits)
    if args.checkpoint:
        model, _ = load_checkpoint(args.checkpoint, corpus.vocab.digest())
        ranker = ModelRanker(model, corpus.vocab, corpus.table)
    else:
        ranker = OracleRanker(corpus.table)
    rows = [[s, f"{evaluate(ranker, corpus.dialogs(s), corpus.table):.2f}"] for s in splits]
    print(render_text(["split", "accuracy"], rows), end="")
    return EXIT_OK


def cmd_multitask(args) -> int:
    plan = MultiTaskPlan(per_profile_train=args.per_profile, per_profile_dev=args.per_profile_dev,
                         per_profile_test=args.per_profile_test, corpus_seed=args.seed, train_seed=args.train_seed,
                         max_epochs=args.max_epochs,
                         base=ExperimentConfig(task="PT5", model=MEMNN, memory=args.memory))
    rows = run_multitask(plan, out_dir=args.out,
                         progress=lambda label, r: print(f"{label}\tepoch {r.epoch}\tdev {r.dev_accuracy:.2f}", flush=True))
    print(render_text(["profile", "profile_specific", "multi_profile", "gain"],
                      [[r.profile, f"{r.specific:.2f}", f"{r.multi:.2f}", f"{r.gain:+.2f}"] for r in rows]), end="")
    return EXIT_OK


def cmd_inspect(args) -> int:
    data = args.data or default_data_dir()
    corpus = load_corpus(data, args.task, [args.split])
    model, _ = load_checkpoint(args.checkpoint, corpus.vocab.digest())
    dialogs = corpus.dialogs(args.split)
    if not 1 <= args.dialog <= len(dialogs):
        raise UsageError(f"dialog {args.dialog} out of range (1..{len(dialogs)})")
    table = export_attention(model, corpus.vocab, corpus.table, dialogs[args.dialog - 1], args.turn)
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        Path(f"{args.out}.csv").write_text(table.to_csv(), encoding="utf-8")
        Path(f"{args.out}.txt").write_text(table.to_text(), encoding="utf-8")
        print(f"wrote {args.out}.csv and {args.out}.txt")
        if args.report:
            from .report import plot_attention
            print(f"figure\t{plot_attention(table, Path(f'{args.out}.png'))}")
    else:
        print(table.to_text(), end="")
    return EXIT_OK


def _mismatch_text(m) -> str:
    name, dialog, line, gold, predicted = m
    return f"{name}: dialog {dialog}, line {line}: expected {gold!r}, oracle said {predicted!r}"


def cmd_verify(args) -> int:
    report = verify_corpus(args.data or default_data_dir(), stop_at_first=True)
    if report.ok:
        print(f"{report.files} files, {report.dialogs} dialogs, {report.exchanges} bot turns: 100.00% oracle agreement")
        return EXIT_OK
    print("first mismatch: " + _mismatch_text(report.mismatches[0]))
    return EXIT_DATA


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "multitask": cmd_multitask,
    "inspect": cmd_inspect,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, argparse.ArgumentTypeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (CorpusError, CorpusInconsistency, CheckpointError, KbConfigError, FileNotFoundError, IndexError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
