"""Command-line entry point: ``convqa-gen <command> [options]``.

Every command writes a run directory::

    <out-dir>/config.json   effective options (reproduces the run with the seed)
    <out-dir>/outputs/      artifacts
    <out-dir>/report.json   summary
    <out-dir>/log.txt       log
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__

logger = logging.getLogger("convqa_gen")

MODEL_CACHE_ENV = "CONVQA_GEN_MODEL_CACHE"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_SCHEMA = 4
EXIT_GENERATION = 5


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int):
        super().__init__(message)
        self.kind = kind
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, EXIT_USAGE)


# ---------------------------------------------------------------------------
# helpers


def _read(path: str | None, what: str) -> Path:
    if not path:
        raise CliError("usage", f"--{what} is required", EXIT_USAGE)
    p = Path(path)
    if not p.is_file():
        raise CliError("missing_file", f"{what} file not found: {path}", EXIT_MISSING_FILE)
    return p


def _resolve_model_path(path: str) -> Path:
    p = Path(path)
    if not p.exists() and not p.is_absolute() and os.environ.get(MODEL_CACHE_ENV):
        p = Path(os.environ[MODEL_CACHE_ENV]) / path
    if not p.exists():
        raise CliError("missing_file", f"model path not found: {path}", EXIT_MISSING_FILE)
    return p


def _load_dataset(path: str | None, what: str = "dataset", split: str = "train"):
    from .corpus import read_jsonl

    return read_jsonl(_read(path, what), split=split)


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


class RunDir:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.outputs = self.root / "outputs"
        self.outputs.mkdir(parents=True, exist_ok=True)
        self._handler = logging.FileHandler(self.root / "log.txt", mode="w", encoding="utf-8")
        self._handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        logging.getLogger("convqa_gen").addHandler(self._handler)

    def close(self):
        logging.getLogger("convqa_gen").removeHandler(self._handler)
        self._handler.close()


def _generation_config(args, cfg: dict):
    from .config import GenerationConfig

    data = dict(cfg.get("generation", {}))
    for key in ("k", "max_turns", "beam_size", "dedup_on"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    data["seed"] = args.seed
    try:
        return GenerationConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise CliError("schema", f"invalid generation config: {exc}", EXIT_SCHEMA) from exc


def _backend(args, cfg: dict, passages):
    """(scorer, generator) for ``--backend mock`` or ``checkpoint:PATH``."""
    from .models import EchoGenerator, ScriptedSpanScorer, T5Generator, TorchSpanScorer
    from .tokenization import WordTokenizer

    backend = args.backend or cfg.get("backend", "mock")
    if backend == "mock":
        tokenizer = WordTokenizer().fit(p.text for p in passages)
        script = args.script or cfg.get("script")
        scorer = (
            ScriptedSpanScorer.from_file(_read(script, "script"), tokenizer) if script else ScriptedSpanScorer(tokenizer)
        )
        return scorer, EchoGenerator(tokenizer)
    if backend.startswith("checkpoint:"):
        root = _resolve_model_path(backend.split(":", 1)[1])
        return TorchSpanScorer.from_pretrained(root / "cae"), T5Generator.from_pretrained(root / "cqg_ar")
    raise CliError("usage", f"unknown backend {backend!r}", EXIT_USAGE)


# ---------------------------------------------------------------------------
# commands


def cmd_prepare_data(args, cfg, run: RunDir) -> dict:
    from .corpus import (
        dumps_jsonl,
        filter_open_ended,
        loads_jsonl,
        parse_coqa,
        parse_quac,
        resolve_answer_spans,
        split_by_domain,
    )

    raw = _read(args.input, "input").read_bytes()
    fmt = args.format or cfg.get("format", "coqa")
    if fmt == "coqa":
        ds = parse_coqa(raw, split=args.split)
    elif fmt == "quac":
        ds = parse_quac(raw, split=args.split)
    elif fmt == "doqa":
        ds = parse_quac(raw, split=args.split, name="doqa", domain="cooking")
    elif fmt == "jsonl":
        ds = loads_jsonl(raw.decode("utf-8"), split=args.split)
    else:
        raise CliError("usage", f"unknown format {fmt!r}", EXIT_USAGE)
    total_turns = ds.n_turns
    if not args.keep_closed:
        ds = filter_open_ended(ds)
    ds = resolve_answer_spans(ds)
    (run.outputs / "all.jsonl").write_text(dumps_jsonl(ds), encoding="utf-8")
    report = {"format": fmt, "passages": len(ds.passages), "turns_in": total_turns, "turns_out": ds.n_turns}
    in_domains = args.in_domains or cfg.get("in_domains")
    if in_domains:
        inside, outside = split_by_domain(ds, in_domains)
        (run.outputs / "in_domain.jsonl").write_text(dumps_jsonl(inside), encoding="utf-8")
        (run.outputs / "out_domain.jsonl").write_text(dumps_jsonl(outside), encoding="utf-8")
        report.update(in_domain_passages=len(inside.passages), out_domain_passages=len(outside.passages))
    return report


def cmd_build_negatives(args, cfg, run: RunDir) -> dict:
    from collections import Counter

    from .negative_sampling import build_revision_training_set, dumps_examples

    ds = _load_dataset(args.dataset)
    ratio = args.neg_ratio if args.neg_ratio is not None else cfg.get("neg_ratio", 1.0)
    examples = build_revision_training_set(ds, ratio, args.seed)
    (run.outputs / "revision_examples.jsonl").write_text(dumps_examples(examples), encoding="utf-8")
    return {"examples": len(examples), "methods": dict(Counter(e.method.value for e in examples))}


def _train_kwargs(args, cfg) -> dict:
    train = cfg.get("train", {})
    pick = lambda name, default: getattr(args, name) if getattr(args, name) is not None else train.get(name, default)
    return dict(
        epochs=pick("epochs", 2),
        learning_rate=pick("lr", 3e-5),
        batch_size=pick("batch_size", 4),
        model_size=pick("size", "tiny"),
        seed=args.seed,
    )


def cmd_train_cae(args, cfg, run: RunDir) -> dict:
    from .cae import ContextualAnswerExtractor
    from .models import TorchSpanScorer

    ds = _load_dataset(args.dataset)
    scorer = TorchSpanScorer.from_pretrained(_resolve_model_path(args.init)) if args.init else None
    est = ContextualAnswerExtractor(scorer=scorer, **_train_kwargs(args, cfg)).fit(ds)
    est.scorer_.save(run.outputs / "cae")
    report = {"skipped_windows": est.n_skipped_windows_, "train_span_f1": est.score(ds)}
    if args.dev:
        report["dev_span_f1"] = est.score(_load_dataset(args.dev, "dev", split="dev"))
    return report


def cmd_train_cqg_ar(args, cfg, run: RunDir) -> dict:
    from .cqg_ar import AnswerRevisingQuestionGenerator
    from .models import T5Generator
    from .negative_sampling import loads_examples

    ds = _load_dataset(args.dataset)
    examples = loads_examples(_read(args.examples, "examples").read_text(encoding="utf-8"))
    gen = T5Generator.from_pretrained(_resolve_model_path(args.init)) if args.init else None
    est = AnswerRevisingQuestionGenerator(generator=gen, **_train_kwargs(args, cfg))
    est.fit((examples, ds.passage_map()))
    est.generator_.save(run.outputs / "cqg_ar")
    report = {"examples": len(examples)}
    if args.dev_examples:
        dev = loads_examples(_read(args.dev_examples, "dev-examples").read_text(encoding="utf-8"))
        report["dev_meteor"] = est.score((dev, ds.passage_map()))
    return report


def cmd_generate(args, cfg, run: RunDir) -> dict:
    from .corpus import read_jsonl
    from .pipeline import dumps_synthetic, generate_dataset

    passages = read_jsonl(_read(args.passages or cfg.get("passages"), "passages")).passages
    config = _generation_config(args, cfg)
    scorer, generator = _backend(args, cfg, passages)
    workers = args.workers or cfg.get("workers", 1)
    convs, report = generate_dataset(passages, scorer, generator, config, workers=workers)
    (run.outputs / "synthetic.jsonl").write_text(dumps_synthetic(convs, passages), encoding="utf-8")
    return report.to_dict()


def cmd_train_cqa(args, cfg, run: RunDir) -> dict:
    from functools import partial

    from .cqa import CqaRegime, t5_trainer
    from .models import T5Generator

    datasets = {}
    if args.human:
        datasets["human"] = _load_dataset(args.human, "human")
    if args.synthetic:
        datasets["synthetic"] = _load_dataset(args.synthetic, "synthetic")
    kw = _train_kwargs(args, cfg)
    name = args.regime or cfg.get("regime", "InMan")
    try:
        if name == "InMan":
            regime = CqaRegime.in_man("human", kw["epochs"], kw["learning_rate"], kw["batch_size"])
        elif name == "OutSyn":
            regime = CqaRegime.out_syn("synthetic", kw["epochs"], kw["learning_rate"], kw["batch_size"])
        else:
            regime = CqaRegime.in_man_then_out_syn("human", "synthetic", kw["epochs"], kw["learning_rate"],
                                                   args.finetune_lr)
    except ValueError as exc:
        raise CliError("usage", str(exc), EXIT_USAGE) from exc
    missing = [s.dataset for s in regime.stages if s.dataset not in datasets]
    if missing:
        raise CliError("usage", f"regime {name} needs --{missing[0]}", EXIT_USAGE)
    if args.init:
        gen = T5Generator.from_pretrained(_resolve_model_path(args.init))
    else:
        texts = [p.text for d in datasets.values() for p in d.passages]
        texts += [t.question + " " + t.answer for d in datasets.values() for c in d.conversations for t in c.turns]
        gen = T5Generator.from_texts(texts, size=kw["model_size"], seed=args.seed)
    from .cqa import run_regime

    eval_ds = _load_dataset(args.eval, "eval", split="test") if args.eval else None
    gen, report = run_regime(regime, datasets, partial(t5_trainer, seed=args.seed), gen, eval_ds)
    gen.save(run.outputs / "cqa")
    return report


def cmd_evaluate(args, cfg, run: RunDir) -> dict:
    from .cqa import evaluate, evaluate_predictions
    from .models import T5Generator

    gold = _load_dataset(args.gold, "gold", split="test")
    if args.pred:
        preds = {}
        for lineno, line in enumerate(_read(args.pred, "pred").read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                preds[(str(rec["passage_id"]), int(rec["turn"]))] = rec["answer"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CliError("schema", f"{args.pred}:{lineno}: bad prediction record ({exc!r})", EXIT_SCHEMA)
        report = evaluate_predictions(preds, gold)
    elif args.model:
        report = evaluate(T5Generator.from_pretrained(_resolve_model_path(args.model)), gold, beam_size=args.beam_size)
    else:
        raise CliError("usage", "evaluate needs --pred or --model", EXIT_USAGE)
    report.regime = args.regime or ""
    out = report.to_dict()
    _write_json(run.outputs / "evaluation.json", out)
    return out


def _load_synthetic(path):
    from .pipeline import loads_synthetic

    try:
        return loads_synthetic(_read(path, "synthetic").read_text(encoding="utf-8"))
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError("schema", f"{path}: not a synthetic conversation file ({exc!r})", EXIT_SCHEMA) from exc


def cmd_analyze(args, cfg, run: RunDir) -> dict:
    from .analysis import dataset_statistics, revision_distribution, tally_ratings

    report = {}
    if args.synthetic:
        convs = _load_synthetic(args.synthetic)
        report["revision_types"] = revision_distribution(convs)
        report["statistics"] = dataset_statistics(convs).to_dict()
    if args.ratings:
        try:
            report["ratings"] = tally_ratings(_read(p, "ratings").read_text(encoding="utf-8") for p in args.ratings)
        except ValueError as exc:
            raise CliError("schema", str(exc), EXIT_SCHEMA) from exc
    if not report:
        raise CliError("usage", "analyze needs --synthetic and/or --ratings", EXIT_USAGE)
    _write_json(run.outputs / "analysis.json", report)
    return report


def cmd_stats(args, cfg, run: RunDir) -> dict:
    from .analysis import dataset_statistics

    stats = dataset_statistics(_load_dataset(args.dataset)).to_dict()
    _write_json(run.outputs / "stats.json", stats)
    print(json.dumps(stats, indent=2, sort_keys=True))
    return stats


def cmd_export_ratings(args, cfg, run: RunDir) -> dict:
    from .analysis import export_rating_sheets

    convs = _load_synthetic(args.synthetic)
    text = export_rating_sheets(convs, args.per_domain, args.seed, run.outputs / "ratings.csv")
    return {"rows": text.count("\n") - 1}


COMMANDS = {
    "prepare-data": cmd_prepare_data,
    "build-negatives": cmd_build_negatives,
    "train-cae": cmd_train_cae,
    "train-cqg-ar": cmd_train_cqg_ar,
    "generate": cmd_generate,
    "train-cqa": cmd_train_cqa,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
    "stats": cmd_stats,
    "export-ratings": cmd_export_ratings,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file with default options")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out-dir", help="run directory (default: runs/<command>)")
    common.add_argument("--log-level", default="INFO")

    train = _Parser(add_help=False)
    train.add_argument("--epochs", type=int)
    train.add_argument("--lr", type=float)
    train.add_argument("--batch-size", type=int)
    train.add_argument("--size", choices=["tiny", "small"])
    train.add_argument("--init", help="pretrained model directory to start from")

    parser = _Parser(prog="convqa-gen", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare-data", parents=[common], help="parse, filter to open-ended, split by domain")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["coqa", "quac", "doqa", "jsonl"])
    p.add_argument("--split", default="train", choices=["train", "dev", "test"])
    p.add_argument("--in-domains", nargs="*")
    p.add_argument("--keep-closed", action="store_true", help="keep yes/no/unanswerable turns")

    p = sub.add_parser("build-negatives", parents=[common], help="positive + expanded/reduced revision examples")
    p.add_argument("--dataset", required=True)
    p.add_argument("--neg-ratio", type=float)

    p = sub.add_parser("train-cae", parents=[common, train], help="train the span extractor")
    p.add_argument("--dataset", required=True)
    p.add_argument("--dev")

    p = sub.add_parser("train-cqg-ar", parents=[common, train], help="train the question/revision generator")
    p.add_argument("--dataset", required=True, help="canonical dataset holding the passages")
    p.add_argument("--examples", required=True, help="revision examples from build-negatives")
    p.add_argument("--dev-examples")

    p = sub.add_parser("generate", parents=[common], help="synthesize conversations")
    p.add_argument("--passages")
    p.add_argument("--backend", help="mock | checkpoint:PATH (PATH/cae and PATH/cqg_ar)")
    p.add_argument("--script", help="mock scorer script JSON")
    p.add_argument("--workers", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--max-turns", type=int)
    p.add_argument("--beam-size", type=int)
    p.add_argument("--dedup-on", choices=["span", "revised"])

    p = sub.add_parser("train-cqa", parents=[common, train], help="train a CQA model under a regime")
    p.add_argument("--regime", choices=["InMan", "OutSyn", "InManThenOutSyn"])
    p.add_argument("--human")
    p.add_argument("--synthetic")
    p.add_argument("--eval")
    p.add_argument("--finetune-lr", type=float, default=1e-6)

    p = sub.add_parser("evaluate", parents=[common], help="F1/EM per domain")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", help="JSON lines {passage_id, turn, answer}")
    p.add_argument("--model", help="CQA checkpoint directory")
    p.add_argument("--beam-size", type=int, default=1)
    p.add_argument("--regime")

    p = sub.add_parser("analyze", parents=[common], help="revision types, statistics, rating tallies")
    p.add_argument("--synthetic")
    p.add_argument("--ratings", nargs="*")

    p = sub.add_parser("stats", parents=[common], help="words per question/answer, turns per passage")
    p.add_argument("--dataset", required=True)

    p = sub.add_parser("export-ratings", parents=[common], help="blank human-rating CSV")
    p.add_argument("--synthetic", required=True)
    p.add_argument("--per-domain", type=int, default=30)
    return parser


def _emit_error(err: CliError, run: RunDir | None) -> int:
    record = {"status": "error", "kind": err.kind, "message": str(err), "exit_code": err.code}
    print(json.dumps(record), file=sys.stderr)
    if run is not None:
        _write_json(run.root / "error.json", record)
    return err.code


def main(argv: list[str] | None = None) -> int:
    from .corpus import CorpusError
    from .cqg_ar import GenerationMalformed

    run = None
    try:
        args = build_parser().parse_args(argv)
        cfg = {}
        if args.config:
            try:
                cfg = json.loads(_read(args.config, "config").read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise CliError("schema", f"config is not valid JSON: {exc}", EXIT_SCHEMA) from exc
        if args.seed is None:
            args.seed = int(cfg.get("seed", 0))
        logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
        run = RunDir(args.out_dir or cfg.get("out_dir") or Path("runs") / args.command)
        echo = {k: v for k, v in vars(args).items() if k not in ("log_level",)}
        echo["file_config"] = cfg
        _write_json(run.root / "config.json", echo)
        report = COMMANDS[args.command](args, cfg, run)
        _write_json(run.root / "report.json", report)
        return EXIT_OK
    except CliError as err:
        return _emit_error(err, run)
    except CorpusError as exc:
        return _emit_error(CliError("schema", str(exc), EXIT_SCHEMA), run)
    except GenerationMalformed as exc:
        return _emit_error(CliError("generation", str(exc), EXIT_GENERATION), run)
    except Exception as exc:
        logger.exception("command failed")
        return _emit_error(CliError("error", f"{type(exc).__name__}: {exc}", EXIT_ERROR), run)
    finally:
        if run is not None:
            run.close()


if __name__ == "__main__":
    sys.exit(main())
