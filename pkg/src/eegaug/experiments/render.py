"""Grayscale heatmaps of TFRs as binary PGM or SVG.

Rows are frequencies with the lowest at the bottom; columns are time. Each
TFR cell becomes a ``scale`` x ``scale`` block. Without a channel selection
the channels are stacked top to bottom in channel order; a comparison TFR is
placed to the right of the first one.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from ..wavelet import Normalization, Tfr


class RenderError(ValueError):
    pass


def _intensity(tfr: Tfr) -> np.ndarray:
    """Map values to 0..255; unit-range maps -1..1, magnitudes use their own min..max."""
    v = np.asarray(tfr.values, dtype=np.float64)
    if tfr.normalization is Normalization.UNIT_RANGE:
        scaled = (v + 1.0) / 2.0
    else:
        lo, hi = v.min(), v.max()
        scaled = np.full_like(v, 0.5) if hi == lo else (v - lo) / (hi - lo)
    return np.clip(np.round(scaled * 255.0), 0, 255).astype(np.uint8)


def heatmap(tfr: Tfr, channel: int | None = None) -> np.ndarray:
    """Cell intensities [rows, cols] with frequency increasing upwards."""
    img = _intensity(tfr)
    if channel is not None:
        if not 0 <= channel < img.shape[0]:
            raise RenderError(f"channel {channel} outside 0..{img.shape[0] - 1}")
        img = img[channel : channel + 1]
    return np.concatenate([c[::-1] for c in img], axis=0)


def compose(tfrs: Sequence[Tfr], channel: int | None = None, scale: int = 1) -> np.ndarray:
    if not tfrs:
        raise RenderError("nothing to render")
    if scale < 1:
        raise RenderError("scale must be a positive integer")
    maps = [heatmap(t, channel) for t in tfrs]
    if len({m.shape[0] for m in maps}) != 1:
        raise RenderError("side-by-side TFRs must have the same number of rows")
    img = np.concatenate(maps, axis=1)
    return np.kron(img, np.ones((scale, scale), dtype=np.uint8))


def pgm_bytes(img: np.ndarray) -> bytes:
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode() + img.astype(np.uint8).tobytes()


def svg_text(cells: np.ndarray, scale: int) -> str:
    h, w = cells.shape
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w * scale}" height="{h * scale}" '
        f'viewBox="0 0 {w * scale} {h * scale}" shape-rendering="crispEdges">'
    ]
    for r in range(h):
        for c in range(w):
            g = int(cells[r, c])
            out.append(f'<rect x="{c * scale}" y="{r * scale}" width="{scale}" height="{scale}" '
                       f'fill="rgb({g},{g},{g})"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_tfr(sample: Tfr, path, *, scale: int = 4, channel: int | None = None,
               compare: Tfr | None = None) -> Path:
    """Write a heatmap of ``sample`` (and ``compare`` beside it); format from the suffix."""
    p = Path(path)
    tfrs = [sample] if compare is None else [sample, compare]
    suffix = p.suffix.lower()
    if suffix not in (".pgm", ".svg"):
        raise RenderError(f"unsupported image format {p.suffix!r}; use .pgm or .svg")
    try:
        if suffix == ".pgm":
            p.write_bytes(pgm_bytes(compose(tfrs, channel, scale)))
        else:
            p.write_text(svg_text(compose(tfrs, channel, 1), scale))
    except OSError as exc:
        raise RenderError(f"cannot write {p}: {exc}") from None
    return p
