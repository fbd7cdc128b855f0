"""Tests for the melody token codec."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from melodylab.codec import (
    SEQ_LEN,
    TOKEN_NOTE_OFF,
    TOKEN_REST,
    VOCAB,
    MelodySequence,
    batch_onehot,
    decode_tokens,
    encode_onehot,
    extract_melodies,
    fold_pitch,
    quantize,
    read_token_lines,
    token_for_pitch,
    write_token_lines,
)
from melodylab.smf import NoteEvent, note_sort_key


def seq(tokens, pad=TOKEN_REST):
    return MelodySequence(tuple(tokens) + (pad,) * (SEQ_LEN - len(tokens)))


# ---------------------------------------------------------------------------
# quantization
# ---------------------------------------------------------------------------


class TestQuantize:
    def test_snap_to_nearest_step(self):
        grid = quantize([NoteEvent(10, 480, 60, 64)], division=480)  # step=120
        assert grid.pitches[0] == 60 and grid.onsets[0]

    def test_zero_length_after_snap_gets_one_step(self):
        grid = quantize([NoteEvent(0, 10, 60, 64)], division=480)
        assert grid.pitches[0] == 60 and grid.pitches[1] == -1

    def test_skyline_highest_pitch_wins(self):
        notes = sorted(
            [NoteEvent(0, 480, 60, 64), NoteEvent(0, 480, 72, 64)], key=note_sort_key
        )
        grid = quantize(notes, division=480)
        assert list(grid.pitches[:4]) == [72] * 4

    def test_grid_padded_to_window_multiple(self):
        grid = quantize([NoteEvent(0, 480, 60, 64)], division=480)
        assert grid.steps == SEQ_LEN
        grid = quantize([NoteEvent(0, 480 * 9, 60, 64)], division=480)
        assert grid.steps == 2 * SEQ_LEN

    def test_empty(self):
        assert quantize([], division=480).steps == 0

    def test_matches_per_step_max_pitch_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            notes = []
            for _ in range(rng.integers(1, 20)):
                onset = int(rng.integers(0, 3000))
                dur = int(rng.integers(1, 900))
                pitch = int(rng.integers(30, 100))
                notes.append(NoteEvent(onset, dur, pitch, 64))
            notes.sort(key=note_sort_key)
            grid = quantize(notes, division=480)
            # brute force: per step, the max pitch over snapped covering notes
            for s in range(grid.steps):
                best = -1
                for n in notes:
                    on = int(np.floor(n.onset_ticks / 120 + 0.5))
                    off = int(np.floor((n.onset_ticks + n.duration_ticks) / 120 + 0.5))
                    if off <= on:
                        off = on + 1
                    if on <= s < off:
                        best = max(best, n.pitch)
                assert grid.pitches[s] == best


# ---------------------------------------------------------------------------
# window extraction
# ---------------------------------------------------------------------------


class TestExtractMelodies:
    def test_all_silent_grid_yields_nothing(self):
        grid = quantize([], division=480)
        assert extract_melodies(grid) == []

    def test_single_onset_window_discarded(self):
        grid = quantize([NoteEvent(0, 480, 60, 64)], division=480)
        assert extract_melodies(grid) == []

    def test_spec_token_layout(self):
        notes = sorted(
            [NoteEvent(0, 480, 60, 64), NoteEvent(960, 240, 62, 64)],
            key=note_sort_key,
        )
        melodies = extract_melodies(quantize(notes, division=480))
        expected = [41, 1, 1, 1, 0, 1, 1, 1, 43, 1, 0] + [1] * 21
        assert list(melodies[0].tokens) == expected

    def test_octave_folding(self):
        assert fold_pitch(110) == 98
        assert fold_pitch(12) == 24
        notes = sorted(
            [NoteEvent(0, 120, 110, 64), NoteEvent(240, 120, 110, 64)],
            key=note_sort_key,
        )
        melodies = extract_melodies(quantize(notes, division=480))
        assert melodies[0].tokens[0] == token_for_pitch(98)

    def test_windows_do_not_overlap(self):
        notes = [NoteEvent(i * 240, 120, 60 + (i % 3), 64) for i in range(40)]
        grid = quantize(notes, division=480)
        melodies = extract_melodies(grid, source_id="song")
        assert len(melodies) == grid.steps // SEQ_LEN
        assert [m.source_id for m in melodies] == [
            f"song#w{i}" for i in range(len(melodies))
        ]


# ---------------------------------------------------------------------------
# one-hot encoding
# ---------------------------------------------------------------------------


class TestOneHot:
    def test_extreme_tokens(self):
        m = encode_onehot(seq([0]))
        assert m[0, 0] == 1.0 and m[0].sum() == 1.0
        m = encode_onehot(seq([89]))
        assert m[0, 89] == 1.0

    @given(st.lists(st.integers(0, VOCAB - 1), min_size=SEQ_LEN, max_size=SEQ_LEN))
    def test_row_sums_are_one(self, tokens):
        m = encode_onehot(MelodySequence(tuple(tokens)))
        assert m.shape == (SEQ_LEN, VOCAB)
        np.testing.assert_array_equal(m.sum(axis=1), np.ones(SEQ_LEN))

    def test_batch_matches_single(self):
        seqs = [seq([41, 1, 0]), seq([89, 2, 3])]
        batch = batch_onehot(seqs)
        np.testing.assert_array_equal(batch[0], encode_onehot(seqs[0]))
        np.testing.assert_array_equal(batch[1], encode_onehot(seqs[1]))


# ---------------------------------------------------------------------------
# decoding and round-trip
# ---------------------------------------------------------------------------


@st.composite
def valid_monophonic_sequences(draw):
    """Token sequences reachable from extraction: note-off only while a note
    sounds, at least two onsets."""
    tokens = []
    sounding = False
    onsets = 0
    while len(tokens) < SEQ_LEN:
        if sounding:
            move = draw(st.sampled_from(["on", "off", "sustain"]))
        else:
            move = draw(st.sampled_from(["on", "rest"]))
        if move == "on":
            tokens.append(draw(st.integers(2, VOCAB - 1)))
            sounding = True
            onsets += 1
        elif move == "off":
            tokens.append(TOKEN_NOTE_OFF)
            sounding = False
        else:
            tokens.append(TOKEN_REST)
    if onsets < 2:
        tokens[0] = draw(st.integers(2, VOCAB - 1))
        tokens[1] = draw(st.integers(2, VOCAB - 1))
    return MelodySequence(tuple(tokens))


class TestDecode:
    def test_sustain_until_off(self):
        notes = decode_tokens(seq([41, 1, 1, 0]))
        assert notes == [NoteEvent(0, 360, 60, 96)]

    def test_all_rest_decodes_to_nothing(self):
        assert decode_tokens(seq([])) == []

    def test_note_held_to_sequence_end(self):
        notes = decode_tokens(seq([41] + [1] * 31))
        assert notes == [NoteEvent(0, 31 * 120 + 120, 60, 96)]

    def test_new_onset_closes_previous(self):
        notes = decode_tokens(seq([41, 43, 0]))
        assert [(n.onset_ticks, n.duration_ticks, n.pitch) for n in notes] == [
            (0, 120, 60),
            (120, 120, 62),
        ]

    @settings(max_examples=200, deadline=None)
    @given(valid_monophonic_sequences())
    def test_codec_roundtrip(self, s):
        notes = decode_tokens(s)
        melodies = extract_melodies(quantize(notes, division=480))
        assert len(melodies) == 1
        assert melodies[0].tokens == s.tokens


# ---------------------------------------------------------------------------
# text serialization
# ---------------------------------------------------------------------------


class TestTokenLines:
    def test_roundtrip_with_provenance(self, tmp_path):
        seqs = [
            MelodySequence(tuple([41] * SEQ_LEN), "a.mid#w0"),
            MelodySequence(tuple(range(32)), ""),
        ]
        path = tmp_path / "tokens.txt"
        write_token_lines(seqs, path)
        again = read_token_lines(path)
        assert [s.tokens for s in again] == [s.tokens for s in seqs]
        assert again[0].source_id == "a.mid#w0"

    def test_rejects_bad_length(self):
        with pytest.raises(ValueError):
            MelodySequence((1, 2, 3))
