"""Piano-roll SVG rendering of token sequences.

Figure conventions: the x-axis is time in seconds, limited to the 4 seconds
a 2-bar sequence spans at 120 BPM; the y-axis is MIDI pitch over the full
0..127 range; each continuous note is one red rectangle. Output bytes are
deterministic for identical input.
"""

from __future__ import annotations

from .codec import SECONDS_PER_STEP_DEFAULT, MelodySequence, decode_tokens
from .smf import NoteEvent

TIME_MAX = 4.0
PITCH_MIN = 0
PITCH_MAX = 127

WIDTH, HEIGHT = 860, 460
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 64, 16, 16, 48
PLOT_W = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
PLOT_H = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

NOTE_COLOR = "#cc2222"
X_TICKS = (0, 1, 2, 3, 4)
Y_TICKS = (0, 32, 64, 96, 127)

STEP_TICKS = 120  # PPQ 480 sixteenths, matching decode_tokens defaults


def _x(t: float) -> float:
    return MARGIN_LEFT + (t / TIME_MAX) * PLOT_W


def _y(pitch: float) -> float:
    # pitch p occupies the band [p, p+1) of a 128-band axis
    return MARGIN_TOP + (1.0 - (pitch + 1) / 128.0) * PLOT_H


def _note_rect(note: NoteEvent) -> str:
    t0 = note.onset_ticks / STEP_TICKS * SECONDS_PER_STEP_DEFAULT
    dt = note.duration_ticks / STEP_TICKS * SECONDS_PER_STEP_DEFAULT
    return (
        f'    <rect class="note" x="{_x(t0):.2f}" y="{_y(note.pitch):.2f}" '
        f'width="{dt / TIME_MAX * PLOT_W:.2f}" height="{PLOT_H / 128.0:.2f}" '
        f'fill="{NOTE_COLOR}" />'
    )


def pianoroll_svg(tokens: MelodySequence) -> str:
    """Render one sequence as an SVG document string."""
    notes = decode_tokens(tokens)
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" data-time-max="{TIME_MAX:.1f}" '
        f'data-pitch-min="{PITCH_MIN}" data-pitch-max="{PITCH_MAX}">',
        f'  <rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff" />',
        '  <g class="grid" stroke="#dddddd" stroke-width="1">',
    ]
    for t in X_TICKS:
        lines.append(
            f'    <line x1="{_x(t):.2f}" y1="{MARGIN_TOP}" '
            f'x2="{_x(t):.2f}" y2="{MARGIN_TOP + PLOT_H}" />'
        )
    for p in Y_TICKS:
        y = _y(p) + PLOT_H / 256.0  # center of the pitch band
        lines.append(
            f'    <line x1="{MARGIN_LEFT}" y1="{y:.2f}" '
            f'x2="{MARGIN_LEFT + PLOT_W}" y2="{y:.2f}" />'
        )
    lines.append("  </g>")
    lines.append('  <g class="notes">')
    lines.extend(_note_rect(n) for n in notes)
    lines.append("  </g>")
    lines.append('  <g class="axes" stroke="#000000" stroke-width="1">')
    lines.append(
        f'    <line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP + PLOT_H}" '
        f'x2="{MARGIN_LEFT + PLOT_W}" y2="{MARGIN_TOP + PLOT_H}" />'
    )
    lines.append(
        f'    <line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" '
        f'x2="{MARGIN_LEFT}" y2="{MARGIN_TOP + PLOT_H}" />'
    )
    lines.append("  </g>")
    lines.append('  <g class="labels" font-family="sans-serif" font-size="12">')
    for t in X_TICKS:
        lines.append(
            f'    <text class="x-tick" x="{_x(t):.2f}" '
            f'y="{MARGIN_TOP + PLOT_H + 16}" text-anchor="middle">{t}</text>'
        )
    for p in Y_TICKS:
        lines.append(
            f'    <text class="y-tick" x="{MARGIN_LEFT - 6}" '
            f'y="{_y(p) + PLOT_H / 256.0 + 4:.2f}" text-anchor="end">{p}</text>'
        )
    lines.append(
        f'    <text x="{MARGIN_LEFT + PLOT_W / 2:.2f}" y="{HEIGHT - 8}" '
        f'text-anchor="middle">time (s)</text>'
    )
    lines.append(
        f'    <text x="14" y="{MARGIN_TOP + PLOT_H / 2:.2f}" text-anchor="middle" '
        f'transform="rotate(-90 14 {MARGIN_TOP + PLOT_H / 2:.2f})">pitch</text>'
    )
    lines.append("  </g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def render_pianoroll(tokens: MelodySequence, path) -> None:
    """Write the piano-roll SVG; byte output is deterministic per input."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(pianoroll_svg(tokens))
