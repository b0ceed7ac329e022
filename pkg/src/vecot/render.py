"""Standalone SVG view of a labelled 2D point cloud."""

import xml.etree.ElementTree as ET

import numpy as np

from ._validation import check_labels
from .exceptions import SizeMismatch

# fixed palette, cycled for labels above 12
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939",
)


def label_color(label):
    """Color for agent ``label >= 1``; label 0 reuses the first entry as a hollow stroke."""
    return PALETTE[(int(label) - 1) % len(PALETTE)] if label > 0 else "#444444"


def render_svg(measure, labels, size=480, margin=24, max_radius=14.0):
    """SVG document with one background rectangle and one circle per point.

    Radii are proportional to the square root of the point weight. Agent
    points are filled with their palette color; unsold points (label 0)
    are drawn hollow.

    Raises
    ------
    SizeMismatch
        The measure is not two-dimensional or ``labels`` has the wrong length.
    """
    if measure.dim != 2:
        raise SizeMismatch(f"rendering needs 2D points, got d={measure.dim}")
    labels = check_labels(labels, measure.n_points, int(np.max(labels, initial=0)))
    pts = measure.points
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    inner = size - 2 * margin
    xy = margin + (pts - lo) / span * inner
    xy[:, 1] = size - xy[:, 1]  # y axis points up
    radius = max_radius * np.sqrt(measure.weights / measure.weights.max())

    root = ET.Element("svg", {
        "xmlns": "http://www.w3.org/2000/svg",
        "width": str(size), "height": str(size), "viewBox": f"0 0 {size} {size}",
    })
    ET.SubElement(root, "rect", {"x": "0", "y": "0", "width": str(size), "height": str(size),
                                 "fill": "#ffffff"})
    for (x, y), r, lab in zip(xy, radius, labels):
        attrs = {"cx": f"{x:.3f}", "cy": f"{y:.3f}", "r": f"{max(r, 0.5):.3f}",
                 "data-label": str(int(lab))}
        if lab > 0:
            attrs.update(fill=label_color(lab), stroke="none")
        else:
            attrs.update(fill="none", stroke=label_color(0))
            attrs["stroke-width"] = "1.5"
        ET.SubElement(root, "circle", attrs)
    return ET.tostring(root, encoding="unicode") + "\n"
