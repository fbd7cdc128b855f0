"""Command-line interface for the melody adaptation lab.

Typical flow:

    melodylab gen-corpus --profile target-folk --n 100 --out target/
    melodylab pretrain --out runs/pretrain
    melodylab analyze --model runs/pretrain/pretrained.ckpt \\
        --data source=src_test/ --data target=target/ --out runs/analysis
    melodylab compare --model runs/pretrain/pretrained.ckpt \\
        --data target/ --out runs/compare
    melodylab sample --model runs/compare/ce-mcts_0_top0.ckpt --n 4 --out samples/
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

from .baselines import BaselineKind
from .codec import read_token_lines, write_token_lines
from .config import config_hash, load_config, write_config
from .corpus import PRESETS, generate_corpus
from .expansion import apply_expansion
from .experiments import (
    corpus_windows,
    flatten_windows,
    ingest_directory,
    run_genre_analysis,
    run_transfer_comparison,
    sample_and_export,
)
from .mcts import evaluate_selected, mcts_search, write_trace
from .pianoroll import render_pianoroll
from .report import (
    write_genre_csv,
    write_genre_figure,
    write_genre_markdown,
    write_results_csv,
    write_results_figure,
    write_results_markdown,
)
from .seeding import derive_seed
from .vae import init_params, load_checkpoint, reconstruction_accuracy, save_checkpoint, train
from .baselines import BaselineSpec, run_baseline


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="top-level seed")
    parser.add_argument("--config", type=Path, default=None, help="INI config file")
    parser.add_argument("--out", type=Path, required=True, help="output directory")


def _prepare(args) -> tuple:
    cfg = load_config(args.config, seed=args.seed)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out / "resolved.ini")
    return cfg, out


def _write_training_log(log, path) -> None:
    keys = ["epoch", "accuracy", "loss", "reconstruction_nll", "kl_divergence", "beta"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys)
        for record in log:
            if record.get("epoch") == "best":
                continue
            writer.writerow([record.get(k, "") for k in keys])


def cmd_gen_corpus(args) -> int:
    cfg, out = _prepare(args)
    if args.profile == "source-pop":
        profile = cfg.source_profile
    elif args.profile == "target-folk":
        profile = cfg.target_profile
    else:
        print(f"unknown profile {args.profile!r}; choose from {sorted(PRESETS)}")
        return 2
    files = generate_corpus(profile, args.n)
    for i, data in enumerate(files):
        (out / f"{profile.name}_{i:03d}.mid").write_bytes(data)
    print(f"wrote {len(files)} MIDI files to {out}")
    return 0


def cmd_ingest(args) -> int:
    _, out = _prepare(args)
    songs, skipped = ingest_directory(args.data)
    for name in skipped:
        print(f"warning: skipped unparseable file {name}")
    seqs = flatten_windows(songs)
    path = out / "tokens.txt"
    write_token_lines(seqs, path)
    print(f"extracted {len(seqs)} windows from {len(songs)} songs -> {path}")
    return 0


def cmd_pretrain(args) -> int:
    cfg, out = _prepare(args)
    if args.data is not None:
        songs, skipped = ingest_directory(args.data)
        for name in skipped:
            print(f"warning: skipped unparseable file {name}")
        train_windows = flatten_windows(songs)
        test_windows: list = []
    else:
        exp = cfg.experiment
        train_songs = corpus_windows(cfg.source_profile, exp.n_source_train)
        test_profile = cfg.source_profile.with_seed(
            derive_seed(exp.seed, "corpus", "source-test")
        )
        test_songs = corpus_windows(test_profile, exp.n_source_test)
        train_windows = flatten_windows(train_songs)
        test_windows = flatten_windows(test_songs)
    if not train_windows:
        print("no training windows found")
        return 2
    params = init_params(derive_seed(cfg.experiment.seed, "init"), cfg.dims)
    adapted, log = train(params, train_windows, cfg.pretrain)
    ckpt = out / "pretrained.ckpt"
    save_checkpoint(adapted, ckpt)
    _write_training_log(log, out / "training_log.csv")
    train_acc = reconstruction_accuracy(adapted, train_windows)
    print(f"train accuracy: {100 * train_acc:.2f}% over {len(train_windows)} windows")
    if test_windows:
        test_acc = reconstruction_accuracy(adapted, test_windows)
        print(f"held-out source accuracy: {100 * test_acc:.2f}%")
    print(f"checkpoint -> {ckpt}")
    return 0


def cmd_analyze(args) -> int:
    _, out = _prepare(args)
    params = load_checkpoint(args.model)
    dirs = {}
    for spec in args.data:
        name, _, path = spec.partition("=")
        if not path:
            print(f"--data expects name=directory, got {spec!r}")
            return 2
        dirs[name] = Path(path)
    rows = run_genre_analysis(params, dirs)
    write_genre_csv(rows, out / "genre_accuracy.csv")
    write_genre_markdown(rows, out / "genre_accuracy.md")
    write_genre_figure(rows, out / "genre_accuracy.svg")
    for row in rows:
        if row.accuracy is None:
            print(f"{row.name}: {row.error}")
        else:
            print(
                f"{row.name}: {100 * row.accuracy:.2f}% "
                f"({row.n_songs} songs, {row.n_windows} windows)"
            )
    return 0


def cmd_adapt(args) -> int:
    cfg, out = _prepare(args)
    pretrained = load_checkpoint(args.model)
    songs, skipped = ingest_directory(args.data)
    for name in skipped:
        print(f"warning: skipped unparseable file {name}")
    windows = flatten_windows(songs)
    if not windows and args.method != "zero-shot":
        print("no melody windows in the data directory")
        return 2
    seed = derive_seed(cfg.experiment.seed, args.method, "adapt")
    if args.method == "ce-mcts":
        search_cfg = replace(cfg.search, seed=seed)
        result = mcts_search(pretrained, windows, search_cfg)
        write_trace(result.trace, out / "ce-mcts_trace.jsonl")
        for rank, (ce, fit) in enumerate(result.top):
            save_checkpoint(
                apply_expansion(pretrained, ce), out / f"ce-mcts_top{rank}.ckpt"
            )
            print(f"top{rank}: train fitness {100 * fit:.2f}%")
        mean, _ = evaluate_selected(
            [ce for ce, _ in result.top], pretrained, windows
        )
        print(f"evaluations: {result.evaluations}, top-3 train mean {100 * mean:.2f}%")
    else:
        if args.method == "non-transfer":
            base = cfg.non_transfer
        else:
            base = cfg.finetune
        spec_kwargs = {}
        if args.method == "student-teacher":
            spec_kwargs = {
                "distill_weight": cfg.experiment.distill_weight,
                "distill_temperature": cfg.experiment.distill_temperature,
            }
        spec = BaselineSpec(
            BaselineKind(args.method), replace(base, seed=seed), **spec_kwargs
        )
        adapted = run_baseline(spec, pretrained, windows)
        ckpt = out / f"{args.method}.ckpt"
        save_checkpoint(adapted, ckpt)
        if windows:
            acc = reconstruction_accuracy(adapted, windows)
            print(f"train accuracy: {100 * acc:.2f}%")
        print(f"checkpoint -> {ckpt}")
    return 0


def cmd_compare(args) -> int:
    cfg, out = _prepare(args)
    if args.k is not None:
        cfg = replace(cfg, experiment=replace(cfg.experiment, k_folds=args.k))
    pretrained = load_checkpoint(args.model)
    songs, skipped = ingest_directory(args.data)
    for name in skipped:
        print(f"warning: skipped unparseable file {name}")
    if len(songs) < cfg.experiment.k_folds:
        print("not enough songs with melodies for the requested folds")
        return 2
    report = run_transfer_comparison(
        pretrained,
        songs,
        cfg,
        out_dir=out,
        metadata={"config_hash": config_hash(cfg)},
    )
    write_results_csv(report, out / "results.csv")
    write_results_markdown(report, out / "results.md")
    write_results_figure(report, out / "results.svg")
    for approach in report.approaches:
        print(
            f"{approach}: train {100 * report.train_average(approach):.2f}% "
            f"test {100 * report.test_average(approach):.2f}%"
        )
    print(f"tables -> {out / 'results.csv'}, {out / 'results.md'}")
    return 0


def cmd_sample(args) -> int:
    cfg, out = _prepare(args)
    params = load_checkpoint(args.model)
    written = sample_and_export(
        params, args.n, args.temperature, cfg.experiment.seed, out
    )
    print(f"wrote {len(written)} samples (MIDI + SVG) to {out}")
    return 0


def cmd_render(args) -> int:
    _, out = _prepare(args)
    seqs = read_token_lines(args.tokens)
    for i, seq in enumerate(seqs):
        render_pianoroll(seq, out / f"pianoroll_{i:03d}.svg")
    print(f"rendered {len(seqs)} piano rolls to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="melodylab",
        description="Adapt a small pretrained melody VAE to an "
        "out-of-distribution genre and compare transfer approaches.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="write a synthetic MIDI corpus")
    p.add_argument("--profile", required=True, help="source-pop or target-folk")
    p.add_argument("--n", type=int, required=True, help="number of songs")
    _add_common(p)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("ingest", help="extract melody windows to a token file")
    p.add_argument("--data", type=Path, required=True, help="MIDI directory")
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("pretrain", help="train the source model")
    p.add_argument(
        "--data", type=Path, default=None,
        help="MIDI directory (default: generate the source corpus)",
    )
    _add_common(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("analyze", help="accuracy of a model over MIDI directories")
    p.add_argument("--model", type=Path, required=True, help="checkpoint path")
    p.add_argument(
        "--data", action="append", required=True, metavar="NAME=DIR",
        help="named dataset directory (repeatable)",
    )
    _add_common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("adapt", help="run one adaptation method")
    p.add_argument(
        "--method", required=True,
        choices=[k.value for k in BaselineKind] + ["ce-mcts"],
    )
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True, help="target MIDI directory")
    _add_common(p)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("compare", help="full k-fold transfer comparison")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True, help="target MIDI directory")
    p.add_argument("--k", type=int, default=None, help="override fold count")
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sample", help="draw prior samples to MIDI + SVG")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--temperature", type=float, default=1.0)
    _add_common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("render", help="piano-roll SVGs from a token file")
    p.add_argument("--tokens", type=Path, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_render)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
