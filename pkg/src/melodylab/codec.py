"""Token codec between note events and 2-bar, 32-step, 90-class melody
sequences.

Token semantics: 0 releases the sounding note before silence, 1 continues
(sustain or rest), 2..89 start a note at MIDI pitch 21 + (token - 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .smf import NoteEvent, TempoMap

SEQ_LEN = 32
VOCAB = 90
TOKEN_NOTE_OFF = 0
TOKEN_REST = 1
PITCH_MIN = 21
PITCH_MAX = 108
STEPS_PER_QUARTER = 4
MIN_ONSETS_PER_WINDOW = 2

# 32 sixteenth steps at 120 BPM span exactly 4.0 seconds
SECONDS_PER_STEP_DEFAULT = 0.125


def token_for_pitch(pitch: int) -> int:
    return 2 + pitch - PITCH_MIN


def pitch_for_token(token: int) -> int:
    return PITCH_MIN + token - 2


def fold_pitch(pitch: int) -> int:
    """Octave-fold a pitch into the 21..108 playable range."""
    while pitch > PITCH_MAX:
        pitch -= 12
    while pitch < PITCH_MIN:
        pitch += 12
    return pitch


@dataclass(frozen=True)
class MelodySequence:
    tokens: tuple[int, ...]
    source_id: str = ""

    def __post_init__(self) -> None:
        if len(self.tokens) != SEQ_LEN:
            raise ValueError(f"expected {SEQ_LEN} tokens, got {len(self.tokens)}")
        if any(not 0 <= t < VOCAB for t in self.tokens):
            raise ValueError("token outside 0..89")


@dataclass
class TokenGrid:
    """Per-sixteenth-step cells: pitch (-1 for silence) and an onset flag."""

    pitches: np.ndarray  # int16, -1 = silence
    onsets: np.ndarray  # bool

    def __post_init__(self) -> None:
        if self.pitches.shape != self.onsets.shape:
            raise ValueError("pitch and onset arrays must align")

    @property
    def steps(self) -> int:
        return len(self.pitches)


def quantize(
    notes: list[NoteEvent],
    tempo: TempoMap | None = None,
    division: int = 480,
) -> TokenGrid:
    """Snap notes to the sixteenth grid (step = division/4 ticks) as a
    monophonic skyline: where notes overlap, the highest pitch wins the cell.

    Zero-length results after snapping get one step. The grid is padded
    with silence to a multiple of 32 steps so trailing partial windows
    survive slicing. The tempo map is carried by callers for tick-to-seconds
    conversions; snapping itself is metrical.
    """
    del tempo  # snapping is in ticks, not seconds
    if not notes:
        return TokenGrid(np.full(0, -1, dtype=np.int16), np.zeros(0, dtype=bool))
    step_ticks = division / STEPS_PER_QUARTER

    snapped = []
    last_step = 0
    for n in notes:
        on = int(math.floor(n.onset_ticks / step_ticks + 0.5))
        off = int(math.floor((n.onset_ticks + n.duration_ticks) / step_ticks + 0.5))
        if off <= on:
            off = on + 1
        snapped.append((on, off, n.pitch))
        last_step = max(last_step, off)

    steps = ((last_step + SEQ_LEN - 1) // SEQ_LEN) * SEQ_LEN
    pitches = np.full(steps, -1, dtype=np.int16)
    onsets = np.zeros(steps, dtype=bool)
    for on, off, pitch in snapped:
        span = pitches[on:off]
        mask = span < pitch
        span[mask] = pitch
        if pitches[on] == pitch:
            onsets[on] = True
    # a cell re-onsets when the winning pitch changes between steps
    changed = np.zeros(steps, dtype=bool)
    changed[0] = pitches[0] >= 0
    changed[1:] = (pitches[1:] >= 0) & (pitches[1:] != pitches[:-1])
    return TokenGrid(pitches, onsets | changed)


def extract_melodies(grid: TokenGrid, source_id: str = "") -> list[MelodySequence]:
    """Slice the grid into non-overlapping 32-step windows from step 0 and
    encode each into tokens. Windows with fewer than 2 note-ons are
    discarded; out-of-range pitches are octave-folded.
    """
    out: list[MelodySequence] = []
    for w in range(grid.steps // SEQ_LEN):
        lo = w * SEQ_LEN
        tokens: list[int] = []
        sounding = False  # a note started within this window is still held
        onset_count = 0
        for s in range(lo, lo + SEQ_LEN):
            pitch = int(grid.pitches[s])
            if pitch < 0:
                tokens.append(TOKEN_NOTE_OFF if sounding else TOKEN_REST)
                sounding = False
            elif grid.onsets[s]:
                tokens.append(token_for_pitch(fold_pitch(pitch)))
                sounding = True
                onset_count += 1
            else:
                # sustained cell; a tail crossing the window boundary has no
                # in-window onset and reads as a rest
                tokens.append(TOKEN_REST)
        if onset_count >= MIN_ONSETS_PER_WINDOW:
            sid = f"{source_id}#w{w}" if source_id else ""
            out.append(MelodySequence(tuple(tokens), sid))
    return out


def encode_onehot(seq: MelodySequence) -> np.ndarray:
    """One-hot encode a sequence as a 32x90 float matrix."""
    mat = np.zeros((SEQ_LEN, VOCAB), dtype=np.float64)
    mat[np.arange(SEQ_LEN), list(seq.tokens)] = 1.0
    return mat


def batch_onehot(seqs: list[MelodySequence]) -> np.ndarray:
    """Stack sequences into a (B, 32, 90) one-hot array."""
    mat = np.zeros((len(seqs), SEQ_LEN, VOCAB), dtype=np.float64)
    for i, seq in enumerate(seqs):
        mat[i, np.arange(SEQ_LEN), list(seq.tokens)] = 1.0
    return mat


def batch_tokens(seqs: list[MelodySequence]) -> np.ndarray:
    return np.array([seq.tokens for seq in seqs], dtype=np.int64)


def decode_tokens(
    seq: MelodySequence,
    tempo: TempoMap | None = None,
    division: int = 480,
    velocity: int = 96,
) -> list[NoteEvent]:
    """Inverse of extraction for monophonic sequences: a note-on starts a
    note that sustains through rest tokens until a note-off, a new note-on,
    or sequence end."""
    del tempo  # note times are metrical ticks; tempo applies at rendering
    if division % STEPS_PER_QUARTER:
        raise ValueError("division must be a multiple of 4 for exact steps")
    step_ticks = division // STEPS_PER_QUARTER
    notes: list[NoteEvent] = []
    start: int | None = None
    pitch = 0

    def close(end_step: int) -> None:
        nonlocal start
        if start is not None:
            notes.append(
                NoteEvent(
                    onset_ticks=start * step_ticks,
                    duration_ticks=(end_step - start) * step_ticks,
                    pitch=pitch,
                    velocity=velocity,
                )
            )
            start = None

    for s, token in enumerate(seq.tokens):
        if token == TOKEN_NOTE_OFF:
            close(s)
        elif token != TOKEN_REST:
            close(s)
            start = s
            pitch = pitch_for_token(token)
    close(SEQ_LEN)
    return notes


def write_token_lines(seqs: list[MelodySequence], path) -> None:
    """Write sequences as lines of 32 space-separated integers; each line is
    preceded by a `#` provenance comment when the sequence carries one."""
    with open(path, "w", encoding="utf-8") as fh:
        for seq in seqs:
            if seq.source_id:
                fh.write(f"# {seq.source_id}\n")
            fh.write(" ".join(str(t) for t in seq.tokens) + "\n")


def read_token_lines(path) -> list[MelodySequence]:
    seqs: list[MelodySequence] = []
    provenance = ""
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                provenance = line[1:].strip()
                continue
            tokens = tuple(int(tok) for tok in line.split())
            seqs.append(MelodySequence(tokens, provenance))
            provenance = ""
    return seqs
