"""Experiment pipelines: ingestion, the genre-probe analysis, the k-fold
transfer comparison, and prior sampling with export."""

from __future__ import annotations

import hashlib
from dataclasses import replace
from pathlib import Path

from .baselines import BaselineKind, BaselineSpec, run_baseline
from .codec import MelodySequence, decode_tokens, extract_melodies, quantize
from .config import RunConfig
from .corpus import GenreProfile, generate_corpus
from .expansion import apply_expansion
from .folds import kfold_split
from .mcts import evaluate_selected, mcts_search, write_trace
from .pianoroll import render_pianoroll
from .report import ExperimentReport, GenreRow
from .seeding import derive_seed, rng_for
from .smf import MidiError, extract_notes, parse_midi, write_midi
from .vae import ModelParams, reconstruction_accuracy, save_checkpoint
from .vae.network import decode_sample

MIDI_SUFFIXES = (".mid", ".midi")


class NoMelodiesExtracted(ValueError):
    """A dataset directory produced zero usable melody windows."""


def windows_from_bytes(name: str, data: bytes) -> list[MelodySequence]:
    midi = parse_midi(data)
    notes, tempo = extract_notes(midi)
    grid = quantize(notes, tempo, midi.division)
    return extract_melodies(grid, source_id=name)


def ingest_directory(path) -> tuple[dict[str, list[MelodySequence]], list[str]]:
    """Per-song melody windows from every MIDI file in a directory.

    Unparseable files are skipped and reported; songs yielding no windows
    are omitted. Returns (songs by filename, skipped filenames)."""
    path = Path(path)
    songs: dict[str, list[MelodySequence]] = {}
    skipped: list[str] = []
    for entry in sorted(path.iterdir()):
        if entry.suffix.lower() not in MIDI_SUFFIXES:
            continue
        try:
            windows = windows_from_bytes(entry.name, entry.read_bytes())
        except MidiError:
            skipped.append(entry.name)
            continue
        if windows:
            songs[entry.name] = windows
    return songs, skipped


def corpus_windows(profile: GenreProfile, n_songs: int) -> dict[str, list[MelodySequence]]:
    """Generate a corpus in memory and extract its melody windows."""
    songs: dict[str, list[MelodySequence]] = {}
    for i, data in enumerate(generate_corpus(profile, n_songs)):
        name = f"{profile.name}_{i:03d}.mid"
        windows = windows_from_bytes(name, data)
        if windows:
            songs[name] = windows
    return songs


def flatten_windows(
    songs: dict[str, list[MelodySequence]], ids=None
) -> list[MelodySequence]:
    names = sorted(songs) if ids is None else list(ids)
    out: list[MelodySequence] = []
    for name in names:
        out.extend(songs[name])
    return out


def corpus_fingerprint(songs: dict[str, list[MelodySequence]]) -> str:
    digest = hashlib.sha256()
    for name in sorted(songs):
        digest.update(name.encode("utf-8"))
        for seq in songs[name]:
            digest.update(bytes(seq.tokens))
    return digest.hexdigest()[:16]


# ---------------------------------------------------------------------------
# genre analysis
# ---------------------------------------------------------------------------


def run_genre_analysis(
    params: ModelParams, genre_dirs: dict[str, Path]
) -> list[GenreRow]:
    """Reconstruction accuracy of one model over named MIDI directories.

    A directory with no usable melodies is reported as a row with an
    error marker instead of aborting the run."""
    rows: list[GenreRow] = []
    for name, directory in genre_dirs.items():
        songs, _ = ingest_directory(directory)
        windows = flatten_windows(songs)
        if not windows:
            rows.append(
                GenreRow(name, None, 0, 0, error=NoMelodiesExtracted.__name__)
            )
            continue
        accuracy = reconstruction_accuracy(params, windows)
        rows.append(GenreRow(name, accuracy, len(songs), len(windows)))
    return rows


# ---------------------------------------------------------------------------
# transfer comparison
# ---------------------------------------------------------------------------


def _baseline_spec(approach: str, cfg: RunConfig, seed: int) -> BaselineSpec:
    kind = BaselineKind(approach)
    if kind == BaselineKind.NON_TRANSFER:
        base = cfg.non_transfer
    else:
        base = cfg.finetune
    train_cfg = replace(base, seed=seed)
    if kind == BaselineKind.STUDENT_TEACHER:
        return BaselineSpec(
            kind,
            train_cfg,
            distill_weight=cfg.experiment.distill_weight,
            distill_temperature=cfg.experiment.distill_temperature,
        )
    return BaselineSpec(kind, train_cfg)


def run_transfer_comparison(
    pretrained: ModelParams,
    songs: dict[str, list[MelodySequence]],
    cfg: RunConfig,
    out_dir: Path | None = None,
    metadata: dict | None = None,
) -> ExperimentReport:
    """Adapt per approach on each fold's train songs and record train/test
    reconstruction accuracy; cross-validation splits by song so windows from
    one song never straddle train and test."""
    experiment = cfg.experiment
    seed = experiment.seed
    approaches = list(experiment.approaches)
    folds = kfold_split(sorted(songs), experiment.k_folds, derive_seed(seed, "folds"))
    train: dict[str, list[float]] = {a: [] for a in approaches}
    test: dict[str, list[float]] = {a: [] for a in approaches}
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    for fold in folds:
        train_windows = flatten_windows(songs, fold.train_ids)
        test_windows = flatten_windows(songs, fold.test_ids)
        for approach in approaches:
            if approach == "ce-mcts":
                search_cfg = replace(
                    cfg.search, seed=derive_seed(seed, "ce-mcts", fold.fold_index)
                )
                result = mcts_search(pretrained, train_windows, search_cfg)
                selected = [ce for ce, _ in result.top]
                train_acc = sum(f for _, f in result.top) / len(result.top)
                test_acc, _ = evaluate_selected(selected, pretrained, test_windows)
                if out_dir is not None:
                    write_trace(
                        result.trace,
                        out_dir / f"ce-mcts_{fold.fold_index}_trace.jsonl",
                    )
                    for rank, (ce, _) in enumerate(result.top):
                        save_checkpoint(
                            apply_expansion(pretrained, ce),
                            out_dir / f"ce-mcts_{fold.fold_index}_top{rank}.ckpt",
                        )
            else:
                spec = _baseline_spec(
                    approach, cfg, derive_seed(seed, approach, fold.fold_index)
                )
                adapted = run_baseline(spec, pretrained, train_windows)
                train_acc = reconstruction_accuracy(adapted, train_windows)
                test_acc = reconstruction_accuracy(adapted, test_windows)
                if out_dir is not None:
                    save_checkpoint(
                        adapted, out_dir / f"{approach}_{fold.fold_index}.ckpt"
                    )
            train[approach].append(train_acc)
            test[approach].append(test_acc)

    meta = {
        "seed": seed,
        "k_folds": experiment.k_folds,
        "corpus_fingerprint": corpus_fingerprint(songs),
    }
    if metadata:
        meta.update(metadata)
    return ExperimentReport(approaches, experiment.k_folds, train, test, meta)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def sample_and_export(
    params: ModelParams,
    n: int,
    temperature: float,
    seed: int,
    out_dir,
) -> list[tuple[Path, Path]]:
    """Draw n prior samples, writing a MIDI file and piano-roll SVG each."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = rng_for(seed, "sample")
    written: list[tuple[Path, Path]] = []
    for i in range(n):
        z = rng.standard_normal(params.dims.latent)
        seq = decode_sample(params, z, rng, temperature, source_id=f"sample_{i:03d}")
        notes = decode_tokens(seq)
        midi_path = out_dir / f"sample_{i:03d}.mid"
        svg_path = out_dir / f"sample_{i:03d}.svg"
        midi_path.write_bytes(write_midi(notes, division=480))
        render_pianoroll(seq, svg_path)
        written.append((midi_path, svg_path))
    return written
