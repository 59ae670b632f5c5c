"""Euler characteristic and local maxima of excursion sets on a 2D pixel lattice.

Each active pixel is a closed unit square, so the excursion set is a cubical
complex whose EC is ``V - E + F``. Diagonally touching pixels share a corner
and are therefore connected.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LatticeField",
    "count_local_maxima",
    "curve_to_csv",
    "ec_curve",
    "euler_characteristic",
    "excursion_mask",
    "hull_side",
]


@dataclass(frozen=True)
class LatticeField:
    """Field values on a square pixel grid with unit spacing.

    ``degenerate_draws`` records how many classification draws were
    rejected while generating the field (bubbles simulation only).
    """

    values: np.ndarray
    degenerate_draws: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError(f"field must be a square 2D array, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def side(self):
        return self.values.shape[0]

    @property
    def spacing(self):
        return 1.0


def hull_side(n_pixels_per_side):
    """Side of the region spanned by pixel centres, ``L - 1`` for ``L`` pixels."""
    return n_pixels_per_side - 1


def _values(field):
    return field.values if isinstance(field, LatticeField) else np.asarray(field)


def excursion_mask(field, u):
    """Boolean mask of pixels with value ``>= u``."""
    return _values(field) >= u


def _cell_levels(values):
    # level at which each vertex / edge / face of the closed-pixel complex appears:
    # the max of its incident pixels (missing neighbours count as -inf)
    v = np.asarray(values, dtype=float)
    if v.ndim != 2:
        raise ValueError("expected a 2D array")
    h, w = v.shape
    padded = np.full((h + 2, w + 2), -np.inf)
    padded[1:-1, 1:-1] = v
    verts = np.maximum(
        np.maximum(padded[:-1, :-1], padded[:-1, 1:]), np.maximum(padded[1:, :-1], padded[1:, 1:])
    )
    inner_cols = padded[:, 1:-1]
    horiz = np.maximum(inner_cols[:-1], inner_cols[1:])
    inner_rows = padded[1:-1, :]
    vert = np.maximum(inner_rows[:, :-1], inner_rows[:, 1:])
    edges = np.concatenate([horiz.ravel(), vert.ravel()])
    return verts.ravel(), edges, v.ravel()


def euler_characteristic(mask):
    """EC of the union of closed unit squares at the ``True`` pixels."""
    bits = np.asarray(mask, dtype=bool)
    verts, edges, faces = _cell_levels(bits.astype(float))
    return int(np.count_nonzero(verts > 0) - np.count_nonzero(edges > 0) + np.count_nonzero(faces > 0))


def ec_curve(field, thresholds):
    """EC of the excursion set at each threshold, from one sort of the cell levels.

    ``thresholds`` must be ascending.
    """
    us = np.asarray(thresholds, dtype=float)
    if us.ndim != 1:
        raise ValueError("thresholds must be a 1D sequence")
    if np.any(np.diff(us) < 0):
        raise ValueError("thresholds must be sorted ascending")
    counts = []
    for levels in _cell_levels(_values(field)):
        levels = np.sort(levels)
        # number of cells with level >= u
        counts.append(levels.size - np.searchsorted(levels, us, side="left"))
    return (counts[0] - counts[1] + counts[2]).astype(int)


def count_local_maxima(field, u):
    """Interior pixels strictly above all 8 neighbours and at least ``u``.

    Plateaus do not count.
    """
    v = _values(field)
    if min(v.shape) < 3:
        return 0
    centre = v[1:-1, 1:-1]
    is_max = centre >= u
    h, w = v.shape
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            is_max &= centre > v[1 + dr : h - 1 + dr, 1 + dc : w - 1 + dc]
    return int(np.count_nonzero(is_max))


def curve_to_csv(thresholds, ecs):
    buf = io.StringIO()
    buf.write("# schema: tiltec.ec_curve/v1 columns=threshold,ec\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["threshold", "ec"])
    for u, e in zip(thresholds, ecs):
        writer.writerow([repr(float(u)), int(e)])
    return buf.getvalue()
