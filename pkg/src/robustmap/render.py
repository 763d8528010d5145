"""Static SVG scatter plots of embedding maps.

Role coloring follows the convention used throughout: clean points green,
perturbed red, misclassified gray. Label coloring assigns one palette color
per class. The non-overlapping-only view keeps just the pairs whose
persisted overlap flag is False, hiding misclassified points, while axes
stay fixed to the full map's extent so filtered views stay comparable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedmap import ROLE_CLEAN, ROLE_MISCLASSIFIED, ROLE_PERTURBED, EmbeddingMap
from .errors import ConfigurationError

ROLE_COLORS = {
    ROLE_CLEAN: "#2ca02c",
    ROLE_PERTURBED: "#d62728",
    ROLE_MISCLASSIFIED: "#7f7f7f",
}

LABEL_PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)

WIDTH, HEIGHT = 640, 480
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 50, 150, 20, 40
MARKER_RADIUS = 3.0


@dataclass(frozen=True)
class RenderOptions:
    show: str = "all"  # "all" | "non-overlapping-only"
    color_by: str = "role"  # "role" | "label"
    per_pair_overlap: list[bool] | None = None

    def __post_init__(self):
        if self.show not in ("all", "non-overlapping-only"):
            raise ConfigurationError(f"unknown show mode {self.show!r}")
        if self.color_by not in ("role", "label"):
            raise ConfigurationError(f"unknown color_by {self.color_by!r}")


def data_viewport(emap: EmbeddingMap):
    """Affine data->pixel transform anchored to the full map's padded bbox."""
    pts = emap.points
    x_min, x_max = float(pts[:, 0].min()), float(pts[:, 0].max())
    y_min, y_max = float(pts[:, 1].min()), float(pts[:, 1].max())
    x_pad = 0.05 * (x_max - x_min) if x_max > x_min else 0.5
    y_pad = 0.05 * (y_max - y_min) if y_max > y_min else 0.5
    x_min, x_max = x_min - x_pad, x_max + x_pad
    y_min, y_max = y_min - y_pad, y_max + y_pad
    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def to_px(x, y):
        px = MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w
        py = MARGIN_TOP + (y_max - y) / (y_max - y_min) * plot_h
        return px, py

    return to_px, (x_min, x_max, y_min, y_max)


def _visible_indices(emap: EmbeddingMap, options: RenderOptions) -> np.ndarray:
    if options.show == "all":
        return np.arange(len(emap))
    if options.per_pair_overlap is None:
        raise ConfigurationError(
            "non-overlapping-only view needs the persisted per-pair overlap flags"
        )
    overlap = np.asarray(options.per_pair_overlap, dtype=bool)
    keep = []
    for i, role in enumerate(emap.roles):
        if role == ROLE_MISCLASSIFIED:
            continue
        pair = emap.pair_index[i]
        if pair < 0 or pair >= overlap.size:
            raise ConfigurationError(f"pair index {pair} missing from overlap flags")
        if not overlap[pair]:
            keep.append(i)
    return np.array(keep, dtype=int)


def _legend_entries(emap, options, visible):
    if options.color_by == "role":
        present = []
        for role in (ROLE_CLEAN, ROLE_PERTURBED, ROLE_MISCLASSIFIED):
            if any(emap.roles[i] == role for i in visible):
                present.append((role, ROLE_COLORS[role]))
        if not present:  # keep an informative legend even for empty views
            present = [(ROLE_CLEAN, ROLE_COLORS[ROLE_CLEAN]),
                       (ROLE_PERTURBED, ROLE_COLORS[ROLE_PERTURBED])]
        return present
    classes = sorted(set(int(l) for l in emap.true_labels))
    return [(f"class {c}", LABEL_PALETTE[c % len(LABEL_PALETTE)]) for c in classes]


def render_map(emap: EmbeddingMap, options: RenderOptions = RenderOptions()) -> str:
    """Render the map to an SVG document string."""
    if len(emap) == 0:
        raise ConfigurationError("cannot render an empty map")
    to_px, (x_min, x_max, y_min, y_max) = data_viewport(emap)
    visible = _visible_indices(emap, options)

    left, top = MARGIN_LEFT, MARGIN_TOP
    right = WIDTH - MARGIN_RIGHT
    bottom = HEIGHT - MARGIN_BOTTOM
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        '<g class="axes" stroke="#333333" stroke-width="1">',
        f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}"/>',
        "</g>",
        '<g class="axis-labels" font-family="sans-serif" font-size="11" fill="#333333">',
        f'<text x="{left}" y="{bottom + 16}">{x_min:.3g}</text>',
        f'<text x="{right - 30}" y="{bottom + 16}">{x_max:.3g}</text>',
        f'<text x="{left - 45}" y="{bottom}">{y_min:.3g}</text>',
        f'<text x="{left - 45}" y="{top + 10}">{y_max:.3g}</text>',
        "</g>",
        '<g class="markers">',
    ]
    for i in visible:
        px, py = to_px(emap.points[i, 0], emap.points[i, 1])
        if options.color_by == "role":
            color = ROLE_COLORS[emap.roles[i]]
        else:
            color = LABEL_PALETTE[int(emap.true_labels[i]) % len(LABEL_PALETTE)]
        out.append(
            f'<circle cx="{px:.4f}" cy="{py:.4f}" r="{MARKER_RADIUS}" '
            f'fill="{color}" fill-opacity="0.75"/>'
        )
    out.append("</g>")
    out.append('<g class="legend" font-family="sans-serif" font-size="12">')
    lx = right + 15
    for k, (label, color) in enumerate(_legend_entries(emap, options, visible)):
        ly = top + 12 + 18 * k
        out.append(f'<circle cx="{lx}" cy="{ly - 4}" r="4" fill="{color}"/>')
        out.append(f'<text x="{lx + 10}" y="{ly}">{label}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
