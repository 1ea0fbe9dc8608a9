"""Command line front end.

Exit codes are shared by every subcommand: 0 success, 2 usage error,
3 data error (including unreadable or unwritable files), 4 numeric abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import check_compatible, load_checkpoint
from .config import SEED_ENV, ModelConfig, TrainConfig, load_json, load_train_file, resolve_seed
from .errors import ConfigError, DataError, SchemaError, TacticTrajError
from .evaluate import predict, predictions_to_jsonl, report_from_predictions
from .game import TabularGame, banzhaf_interaction_exact
from .numeric import SeededRng
from .plot import plot_emit
from .scenes import DatasetConfig, TacticVocabulary, load_scenes, save_scenes
from .synth import SynthConfig, synth_generate
from .train import model_from_checkpoint, train

log = logging.getLogger("tactictraj")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

ALPHA_HELP = (
    "The tactic loss weight alpha_w defaults to 1.0. A tactic 'rate' of 1000 is not "
    "applied, neither as alpha_w nor as a learning rate, because nothing fixes what it "
    "would scale. Set train.alpha_w in the config file to choose another weight."
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _pair(text: str) -> tuple[int, int]:
    try:
        i, j = (int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected i,j with two integers, got {text!r}") from None
    return i, j


def _dataset_for(path_cfg: dict | None) -> DatasetConfig:
    try:
        return DatasetConfig.from_dict(path_cfg or {})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"dataset config: {exc}") from None


def _vocab(path) -> TacticVocabulary:
    if path is None:
        return TacticVocabulary.default()
    try:
        return TacticVocabulary.load(path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: malformed vocabulary ({exc})") from None


# --------------------------------------------------------------------------


def cmd_gen(args) -> int:
    raw = load_json(args.config) if args.config else {}
    if not isinstance(raw, dict) or set(raw) - {"dataset", "synth", "tactic_mix", "seed"}:
        raise ConfigError(f"{args.config}: expected 'dataset', 'synth', 'tactic_mix' and/or 'seed' keys")
    dataset = _dataset_for(raw.get("dataset"))
    vocab = _vocab(args.vocab)
    try:
        synth = SynthConfig(**raw.get("synth", {}))
    except TypeError as exc:
        raise ConfigError(f"synth config: {exc}") from None
    mix = raw.get("tactic_mix")
    if isinstance(mix, dict):
        mix = {int(k): float(v) for k, v in mix.items()}
    seed = resolve_seed(raw.get("seed"), args.seed)
    scenes = synth_generate(SeededRng(seed, ("gen",)), dataset, args.scenes, mix, vocab, synth)
    save_scenes(scenes, args.out)
    if args.vocab_out:
        vocab.save(args.vocab_out)
    log.info("wrote %d scenes to %s (seed %d)", len(scenes), args.out, seed)
    return EXIT_OK


def cmd_train(args) -> int:
    model_cfg, train_cfg, dataset_raw = load_train_file(args.config) if args.config else (ModelConfig(), TrainConfig(), {})
    dataset = _dataset_for(dataset_raw)
    vocab = _vocab(args.vocab)
    if vocab.size != dataset.vocab_size:
        raise ConfigError(f"vocabulary has {vocab.size} entries, dataset expects {dataset.vocab_size}")
    seed = resolve_seed(train_cfg.seed, args.seed)
    train_cfg = TrainConfig.from_dict({**train_cfg.to_dict(), "seed": seed})
    scenes = load_scenes(args.data, dataset, vocab, strict=not args.lenient)

    def report(rec):
        terms = " ".join(f"{k}={rec[k]:.6g}" for k in ("noise", "dist", "unc", "tactic", "bi", "total") if k in rec)
        log.info("%s epoch %d lr %.3g %s", rec["stage"], rec["epoch"], rec["lr"], terms)

    train(scenes, dataset, vocab, model_cfg, train_cfg, out_dir=args.out, resume=args.resume, on_epoch=report)
    log.info("checkpoint written to %s", args.out)
    return EXIT_OK


def _load_for_data(args):
    ckpt = load_checkpoint(args.ckpt)
    scenes = load_scenes(args.data, ckpt.dataset, ckpt.vocab, strict=not args.lenient)
    check_compatible(ckpt, ckpt.dataset, ckpt.vocab)
    if not scenes:
        raise DataError(f"{args.data}: no scenes")
    return ckpt, model_from_checkpoint(ckpt), scenes


def cmd_predict(args) -> int:
    ckpt, model, scenes = _load_for_data(args)
    seed = resolve_seed(ckpt.train_config.seed, args.seed)
    preds = predict(model, scenes, ckpt.norm, seed=seed, batch_size=args.batch_size)
    Path(args.out).write_text(predictions_to_jsonl(preds))
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt, model, scenes = _load_for_data(args)
    seed = resolve_seed(ckpt.train_config.seed, args.seed)
    preds = predict(model, scenes, ckpt.norm, seed=seed, batch_size=args.batch_size)
    snapshot = {**ckpt.config_snapshot(), "eval_seed": seed}
    report = report_from_predictions(preds, ckpt.dataset.fps, snapshot)
    Path(args.report).write_text(report.to_json())
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    for s in sorted(report.ade):
        print(f"{s:.1f}s minADE {report.ade[s]:.4f} minFDE {report.fde[s]:.4f}")
    print(" ".join(f"top{k} {report.topk[k]:.4f}" for k in sorted(report.topk)))
    return EXIT_OK


def cmd_banzhaf(args) -> int:
    game = TabularGame.load(args.game)
    i, j = args.pair
    print(f"{banzhaf_interaction_exact(game, i, j):.10f}")
    return EXIT_OK


def cmd_plot(args) -> int:
    raw = load_json(args.config) if args.config else {}
    dataset = _dataset_for(raw.get("dataset") if isinstance(raw, dict) else None)
    scenes = {s.scene_id: s for s in load_scenes(args.data, dataset, strict=False)}
    if args.scene not in scenes:
        raise DataError(f"{args.data}: no scene with id {args.scene!r}")
    preds = None
    if args.preds:
        with open(args.preds) as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise SchemaError(f"{args.preds}:{lineno}: malformed JSON ({exc.msg})") from None
                if rec.get("scene_id") == args.scene:
                    preds = np.asarray(rec["samples"], dtype=np.float64)
                    break
    svg, csv_path = plot_emit(scenes[args.scene], preds, args.out, dataset.court_extent)
    log.info("wrote %s and %s", svg, csv_path)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="tactictraj",
        description="Tactic-conditioned multi-agent trajectory diffusion.",
        epilog=f"Seed precedence: --seed flag, then ${SEED_ENV}, then the config file.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate synthetic scripted plays")
    p.add_argument("--config", help="JSON with optional dataset, synth, tactic_mix and seed keys")
    p.add_argument("--scenes", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--vocab", help="vocabulary JSON (default: built-in 16 tactics)")
    p.add_argument("--vocab-out", help="also write the vocabulary used")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="run the staged training schedule", epilog=ALPHA_HELP)
    p.add_argument("--data", required=True)
    p.add_argument("--vocab")
    p.add_argument("--config", help="JSON with optional model, train and dataset sections")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--resume", action="store_true", help="continue from the checkpoint in --out")
    p.add_argument("--lenient", action="store_true", help="skip scenes that fail validation")
    p.set_defaults(func=cmd_train)

    for name, target, fn, text in (
        ("predict", "--out", cmd_predict, "write sampled trajectories and ranked tactics as JSON Lines"),
        ("eval", "--report", cmd_eval, "write minADE/minFDE and Top-k accuracy"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--ckpt", required=True)
        p.add_argument("--data", required=True)
        p.add_argument(target, required=True)
        p.add_argument("--seed", type=int, help="sampling seed (default: the training seed)")
        p.add_argument("--batch-size", type=int, default=32)
        p.add_argument("--lenient", action="store_true")
        if name == "eval":
            p.add_argument("--csv", help="also write one CSV row per horizon")
        p.set_defaults(func=fn)

    p = sub.add_parser("banzhaf", help="exact pairwise interaction of a tabular game")
    p.add_argument("--game", required=True)
    p.add_argument("--pair", type=_pair, required=True, help="two player indices, e.g. 0,1")
    p.set_defaults(func=cmd_banzhaf)

    p = sub.add_parser("plot", help="SVG of one scene plus a CSV of its coordinates")
    p.add_argument("--scene", required=True, help="scene id")
    p.add_argument("--data", required=True)
    p.add_argument("--preds", help="predictions JSON Lines from `predict`")
    p.add_argument("--config", help="JSON with an optional dataset section")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except TacticTrajError as exc:
        print(f"tactictraj {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"tactictraj {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
