"""Procedural screen-content generators and corpus splitting.

Four deterministic generators stand in for captured screen datasets:
web-page layouts, password keypads, charts, and desktop scenes.  Each
returns the radiance field together with the structure masks it used
(key regions, bar extents, window rectangles), so downstream tests can
assert semantic properties without any vision heuristics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grids import child_rng

__all__ = [
    "CATEGORIES",
    "SceneSpec",
    "Scene",
    "CorpusSplit",
    "generate",
    "make_split",
]

CATEGORIES = ("websight", "password", "chart", "screen")
_SIZE_BOUNDS = (32, 256)


@dataclass(frozen=True)
class SceneSpec:
    category: str
    size: tuple = (64, 64)
    seed: int = 0

    def validate(self) -> "SceneSpec":
        if self.category not in CATEGORIES:
            raise ValueError(f"category must be one of {CATEGORIES}, got {self.category!r}")
        h, w = self.size
        for n in (h, w):
            if n < _SIZE_BOUNDS[0] or n > _SIZE_BOUNDS[1] or (n & (n - 1)) != 0:
                raise ValueError(
                    f"size must be powers of two within {_SIZE_BOUNDS}, got {self.size}"
                )
        return self


@dataclass(frozen=True)
class Scene:
    """Radiance in [0, 1] plus the masks of the structures drawn into it."""

    image: np.ndarray
    regions: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple
    val: tuple
    test: tuple


def _rect(img, y0, y1, x0, x1, value):
    img[y0:y1, x0:x1] = value
    mask = np.zeros(img.shape, dtype=bool)
    mask[y0:y1, x0:x1] = True
    return mask


def _websight(rng, h, w):
    img = np.full((h, w), 0.88)
    regions = {}
    header_h = max(2, h // 8)
    regions["header"] = _rect(img, 0, header_h, 0, w, rng.uniform(0.15, 0.3))
    n_lines = rng.integers(3, 7)
    y = header_h + max(1, h // 16)
    line_h = max(1, h // 24)
    for i in range(n_lines):
        if y + line_h >= h:
            break
        width = int(w * rng.uniform(0.4, 0.9))
        x0 = max(1, w // 16)
        regions[f"text_{i}"] = _rect(img, y, y + line_h, x0, x0 + width, rng.uniform(0.35, 0.55))
        y += line_h + max(1, h // 20)
    n_blocks = rng.integers(1, 3)
    for i in range(n_blocks):
        bh = int(h * rng.uniform(0.15, 0.3))
        bw = int(w * rng.uniform(0.2, 0.4))
        y0 = int(rng.integers(h // 2, max(h // 2 + 1, h - bh)))
        x0 = int(rng.integers(0, max(1, w - bw)))
        regions[f"block_{i}"] = _rect(img, y0, y0 + bh, x0, x0 + bw, rng.uniform(0.5, 0.75))
    return img, regions, {}


def _password(rng, h, w):
    img = np.full((h, w), rng.uniform(0.06, 0.16))
    regions = {}
    rows, cols = 4, 3
    pad_y = max(1, h // 20)
    pad_x = max(1, w // 16)
    cell_h = (h - (rows + 1) * pad_y) // rows
    cell_w = (w - (cols + 1) * pad_x) // cols
    highlight = int(rng.integers(0, rows * cols))
    base = rng.uniform(0.28, 0.42)
    # per-key jitter keeps distinct seeds measurably apart even when the
    # highlight position and base shade happen to coincide
    jitter = rng.uniform(-0.04, 0.04, size=rows * cols)
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            y0 = pad_y + r * (cell_h + pad_y)
            x0 = pad_x + c * (cell_w + pad_x)
            value = min(1.0, 1.9 * base) if i == highlight else base + jitter[i]
            regions[f"key_{i}"] = _rect(img, y0, y0 + cell_h, x0, x0 + cell_w, value)
    return img, regions, {"highlight_index": highlight, "n_keys": rows * cols}


def _chart(rng, h, w):
    img = np.full((h, w), 0.86)
    regions = {}
    margin = max(2, min(h, w) // 10)
    axis_v = max(1, min(h, w) // 48)
    regions["axis_y"] = _rect(img, margin, h - margin, margin, margin + axis_v, 0.1)
    regions["axis_x"] = _rect(img, h - margin - axis_v, h - margin, margin, w - margin, 0.1)
    plot_x0 = margin + axis_v + 1
    plot_x1 = w - margin
    plot_y1 = h - margin - axis_v - 1
    if rng.random() < 0.6:
        n_bars = int(rng.integers(4, 9))
        slot = (plot_x1 - plot_x0) // n_bars
        for i in range(n_bars):
            bar_h = int((plot_y1 - margin) * rng.uniform(0.2, 1.0))
            x0 = plot_x0 + i * slot + max(1, slot // 6)
            x1 = plot_x0 + (i + 1) * slot - max(1, slot // 6)
            regions[f"bar_{i}"] = _rect(
                img, plot_y1 - bar_h, plot_y1, x0, x1, rng.uniform(0.25, 0.55)
            )
        meta = {"n_bars": n_bars}
    else:
        xs = np.arange(plot_x0, plot_x1)
        knots = rng.uniform(margin, plot_y1, size=5)
        ys = np.interp(np.linspace(0, 4, xs.size), np.arange(5), knots).astype(int)
        mask = np.zeros((h, w), dtype=bool)
        thickness = max(1, h // 48)
        for x, y in zip(xs, ys):
            img[y:y + thickness, x] = 0.2
            mask[y:y + thickness, x] = True
        regions["line"] = mask
        meta = {"n_bars": 0}
    return img, regions, meta


def _screen(rng, h, w):
    img = np.full((h, w), rng.uniform(0.35, 0.45))
    regions = {}
    bar_h = max(2, h // 12)
    regions["taskbar"] = _rect(img, h - bar_h, h, 0, w, 0.12)
    n_windows = int(rng.integers(2, 5))
    for i in range(n_windows):
        wh = int(h * rng.uniform(0.25, 0.5))
        ww = int(w * rng.uniform(0.3, 0.55))
        y0 = int(rng.integers(0, max(1, h - bar_h - wh)))
        x0 = int(rng.integers(0, max(1, w - ww)))
        regions[f"window_{i}"] = _rect(img, y0, y0 + wh, x0, x0 + ww, rng.uniform(0.7, 0.9))
        title_h = max(1, wh // 6)
        _rect(img, y0, y0 + title_h, x0, x0 + ww, 0.55)
    icon = max(1, min(h, w) // 24)
    step = 3 * icon
    for i in range(3):
        for j in range(2):
            y0, x0 = icon + i * step, icon + j * step
            if y0 + icon < h - bar_h and x0 + icon < w:
                _rect(img, y0, y0 + icon, x0, x0 + icon, 0.65)
    return img, regions, {"n_windows": n_windows}


_GENERATORS = {
    "websight": _websight,
    "password": _password,
    "chart": _chart,
    "screen": _screen,
}


def generate(spec: SceneSpec) -> Scene:
    """Render one deterministic scene for ``(category, size, seed)``."""
    spec.validate()
    h, w = spec.size
    rng = child_rng(spec.seed, CATEGORIES.index(spec.category), h, w)
    img, regions, meta = _GENERATORS[spec.category](rng, h, w)
    return Scene(image=np.clip(img, 0.0, 1.0), regions=regions, meta=meta)


def make_split(n: int, seed: int) -> CorpusSplit:
    """Shuffled 8:1:1 split of ``range(n)``.

    Subset sizes floor the exact shares; leftover items go to train,
    then val, then test (so n=17 gives 14/2/1).  Requires ``n >= 10``.
    """
    if n < 10:
        raise ValueError(f"corpus size must be >= 10 to split 8:1:1, got {n}")
    shares = (0.8, 0.1, 0.1)
    sizes = [int(np.floor(s * n)) for s in shares]
    for i in range(n - sum(sizes)):
        sizes[i % 3] += 1
    perm = child_rng(seed, 101).permutation(n)
    train = tuple(int(i) for i in perm[: sizes[0]])
    val = tuple(int(i) for i in perm[sizes[0]: sizes[0] + sizes[1]])
    test = tuple(int(i) for i in perm[sizes[0] + sizes[1]:])
    return CorpusSplit(train=train, val=val, test=test)
