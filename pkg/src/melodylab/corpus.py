"""Synthetic genre corpora: motif-based monophonic melody generation.

Two presets stand in for the private datasets: "source-pop" imitates
mainstream western pop melodies (wide register, major scale, leaps,
sparser rhythms); "target-folk" encodes the out-of-distribution trait
list (narrow register, conjunct steps, motif repetition at varying
pitches, rapid repeated notes, dense sixteenth rhythms).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .seeding import derive_seed
from .smf import NoteEvent, TempoMap, write_midi

SONG_BARS = 8
STEPS_PER_BAR = 16
SONG_STEPS = SONG_BARS * STEPS_PER_BAR
DIVISION = 480
STEP_TICKS = DIVISION // 4
VELOCITY = 96


class InvalidProfile(ValueError):
    """Profile fields violate their documented ranges."""


@dataclass(frozen=True)
class GenreProfile:
    name: str
    register_low: int
    register_high: int
    scale_degrees: tuple[int, ...]  # semitone offsets from the tonic pitch class
    conjunct_prob: float  # P(+-1 scale step | pitch moves)
    leap_max: int  # leaps span 2..leap_max scale steps
    repeat_prob: float  # P(repeat the previous pitch)
    motif_length: int
    motif_repeats: int  # placements per motif, transposed per placement
    rest_density: float  # P(rest gap after a note)
    duration_choices: tuple[int, ...]  # note lengths in sixteenth steps
    duration_weights: tuple[float, ...]
    tonic_choices: tuple[int, ...] = tuple(range(12))  # per-song tonic pitch classes
    seed: int = 0

    def __post_init__(self) -> None:
        if not 21 <= self.register_low < self.register_high <= 108:
            raise InvalidProfile("register bounds must satisfy 21 <= low < high <= 108")
        if self.register_high - self.register_low < 12:
            raise InvalidProfile("register must span at least one octave")
        degrees = self.scale_degrees
        if not degrees or len(set(degrees)) != len(degrees):
            raise InvalidProfile("scale degrees must be non-empty and unique")
        if any(not 0 <= d < 12 for d in degrees):
            raise InvalidProfile("scale degrees must lie in 0..11")
        for p in (self.conjunct_prob, self.repeat_prob, self.rest_density):
            if not 0.0 <= p <= 1.0:
                raise InvalidProfile("probabilities must lie in [0, 1]")
        if self.leap_max < 2:
            raise InvalidProfile("leap_max must be at least 2 scale steps")
        if self.motif_length < 1 or self.motif_repeats < 1:
            raise InvalidProfile("motif length and repeats must be positive")
        if len(self.duration_choices) != len(self.duration_weights):
            raise InvalidProfile("duration choices and weights must align")
        if any(d < 1 for d in self.duration_choices):
            raise InvalidProfile("durations must be positive sixteenth steps")
        if any(w < 0 for w in self.duration_weights) or sum(self.duration_weights) <= 0:
            raise InvalidProfile("duration weights must be non-negative, not all zero")
        if not self.tonic_choices or any(
            not 0 <= t < 12 for t in self.tonic_choices
        ):
            raise InvalidProfile("tonic choices must be pitch classes in 0..11")

    def with_seed(self, seed: int) -> "GenreProfile":
        return replace(self, seed=seed)


def source_pop_profile(seed: int = 0) -> GenreProfile:
    return GenreProfile(
        name="source-pop",
        register_low=48,
        register_high=84,
        scale_degrees=(0, 2, 4, 5, 7, 9, 11),
        conjunct_prob=0.6,
        leap_max=5,
        repeat_prob=0.1,
        motif_length=6,
        motif_repeats=2,
        rest_density=0.15,
        duration_choices=(2, 4, 8),
        duration_weights=(0.45, 0.45, 0.1),
        tonic_choices=(0, 5, 7),  # key-normalized corpus: the pop staples
        seed=seed,
    )


def target_folk_profile(seed: int = 0) -> GenreProfile:
    return GenreProfile(
        name="target-folk",
        register_low=60,
        register_high=72,
        scale_degrees=(0, 1, 4, 5, 7, 8, 10),
        conjunct_prob=0.85,
        leap_max=3,
        repeat_prob=0.3,
        motif_length=5,
        motif_repeats=4,
        rest_density=0.05,
        duration_choices=(1, 2),
        duration_weights=(0.6, 0.4),
        seed=seed,
    )


PRESETS = {
    "source-pop": source_pop_profile,
    "target-folk": target_folk_profile,
}


def _song_rng(profile: GenreProfile, index: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(profile.seed, "song", index))


def _sample_motif(profile: GenreProfile, rng: np.random.Generator):
    """Motif = list of (scale-step move, duration steps, rest gap steps)."""
    weights = np.asarray(profile.duration_weights, dtype=np.float64)
    weights = weights / weights.sum()
    motif = []
    for _ in range(profile.motif_length):
        if rng.random() < profile.repeat_prob:
            move = 0
        else:
            direction = 1 if rng.random() < 0.5 else -1
            if rng.random() < profile.conjunct_prob:
                move = direction
            else:
                move = direction * int(rng.integers(2, profile.leap_max + 1))
        duration = int(rng.choice(profile.duration_choices, p=weights))
        gap = int(rng.integers(1, 3)) if rng.random() < profile.rest_density else 0
        motif.append((move, duration, gap))
    return motif


def _reflect(idx: int, n: int) -> int:
    """Bounce an index off the ends of the playable scale."""
    if n == 1:
        return 0
    period = 2 * (n - 1)
    idx %= period
    return idx if idx < n else period - idx


def song_notes(profile: GenreProfile, index: int) -> list[NoteEvent]:
    """Deterministic 8-bar melody for (profile.seed, song index)."""
    rng = _song_rng(profile, index)
    tonic_pc = int(profile.tonic_choices[rng.integers(len(profile.tonic_choices))])
    allowed = [
        p
        for p in range(profile.register_low, profile.register_high + 1)
        if (p - tonic_pc) % 12 in profile.scale_degrees
    ]
    idx = len(allowed) // 2 + int(rng.integers(-2, 3))
    idx = _reflect(idx, len(allowed))

    notes: list[NoteEvent] = []
    pos = 0
    while pos < SONG_STEPS:
        motif = _sample_motif(profile, rng)
        entry = idx
        for _ in range(profile.motif_repeats):
            offset = int(rng.integers(-2, 3))
            idx = _reflect(entry + offset, len(allowed))
            for move, duration, gap in motif:
                idx = _reflect(idx + move, len(allowed))
                duration = min(duration, SONG_STEPS - pos)
                notes.append(
                    NoteEvent(
                        onset_ticks=pos * STEP_TICKS,
                        duration_ticks=duration * STEP_TICKS,
                        pitch=allowed[idx],
                        velocity=VELOCITY,
                    )
                )
                pos += duration + gap
                if pos >= SONG_STEPS:
                    return notes
    return notes


def generate_corpus(profile: GenreProfile, n_songs: int) -> list[bytes]:
    """Render n_songs deterministic MIDI files (120 BPM, PPQ 480)."""
    if n_songs < 0:
        raise InvalidProfile("n_songs must be non-negative")
    return [
        write_midi(song_notes(profile, i), TempoMap(), DIVISION)
        for i in range(n_songs)
    ]


def mean_abs_interval(notes: list[NoteEvent]) -> float:
    """Mean absolute pitch move between consecutive notes (0 for < 2 notes)."""
    if len(notes) < 2:
        return 0.0
    pitches = np.array([n.pitch for n in notes], dtype=np.float64)
    return float(np.abs(np.diff(pitches)).mean())
