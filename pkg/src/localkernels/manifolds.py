"""Synthetic manifolds with known intrinsic coordinates, and point-cloud CSV I/O.

Every generator is deterministic given its arguments. Grids sample the
half-open square ``[0, 2pi)^2`` so that seam points are never duplicated;
``sampling="iid"`` draws the intrinsic coordinates uniformly at random
from a seeded generator instead.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataFormatError

__all__ = [
    "PointCloud",
    "torus_angles",
    "generate_flat_torus_r4",
    "generate_embedded_torus_r3",
    "generate_ellipse",
    "apply_torus_diffeomorphism",
    "apply_sphere_inversion",
    "load_csv",
    "save_csv",
]


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PointCloud:
    """N points in R^n with optional intrinsic coordinates and labels.

    Labels establish correspondence between clouds: two clouds built from
    the same intrinsic samples share labels (and order).
    """

    points: np.ndarray
    intrinsic: Optional[np.ndarray] = None
    labels: Optional[tuple] = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"points must be an N x n matrix with N, n >= 1, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            bad = int(np.argwhere(~np.isfinite(pts))[0, 0])
            raise ValueError(f"non-finite coordinate at point {bad}")
        object.__setattr__(self, "points", _frozen(pts))

        if self.intrinsic is not None:
            t = np.asarray(self.intrinsic, dtype=float)
            if t.ndim == 1:
                t = t[:, None]
            if t.shape[0] != pts.shape[0]:
                raise ValueError(f"intrinsic has {t.shape[0]} rows, expected {pts.shape[0]}")
            if not np.all(np.isfinite(t)):
                raise ValueError("non-finite intrinsic coordinate")
            object.__setattr__(self, "intrinsic", _frozen(t))

        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != pts.shape[0]:
                raise ValueError(f"{len(labels)} labels for {pts.shape[0]} points")
            if len(set(labels)) != len(labels):
                raise ValueError("labels must be unique within a cloud")
            object.__setattr__(self, "labels", labels)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def intrinsic_dim(self) -> int:
        return 0 if self.intrinsic is None else self.intrinsic.shape[1]

    def __len__(self):
        return self.n_points

    def permuted(self, order: Sequence[int]) -> "PointCloud":
        order = np.asarray(order)
        return PointCloud(
            self.points[order],
            None if self.intrinsic is None else self.intrinsic[order],
            None if self.labels is None else tuple(self.labels[i] for i in order),
            name=self.name,
        )


def torus_angles(grid_size: int, sampling: str = "grid", seed: Optional[int] = None):
    """(theta, phi) samples on [0, 2pi)^2, ``grid_size**2`` of them."""
    if int(grid_size) != grid_size or grid_size < 2:
        raise ValueError(f"grid_size must be an integer >= 2, got {grid_size}")
    m = int(grid_size)
    if sampling == "grid":
        a = 2 * np.pi * np.arange(m) / m
        theta, phi = np.meshgrid(a, a, indexing="ij")
        return theta.ravel(), phi.ravel()
    if sampling == "iid":
        rng = np.random.default_rng(seed)
        u = rng.uniform(0.0, 2 * np.pi, size=(m * m, 2))
        return u[:, 0], u[:, 1]
    raise ValueError(f"unknown sampling {sampling!r}; use 'grid' or 'iid'")


def _labels(n):
    return tuple(str(i) for i in range(n))


def generate_flat_torus_r4(grid_size: int, sampling: str = "grid", seed: Optional[int] = None) -> PointCloud:
    """Flat torus isometrically embedded as (sin t, cos t, sin p, cos p)."""
    theta, phi = torus_angles(grid_size, sampling, seed)
    pts = np.column_stack([np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)])
    return PointCloud(pts, np.column_stack([theta, phi]), _labels(len(theta)), name="flat_torus_r4")


def generate_embedded_torus_r3(
    grid_size: int,
    major_radius: float = 2.0,
    sampling: str = "grid",
    seed: Optional[int] = None,
) -> PointCloud:
    """Torus of revolution ((R + sin t) cos p, (R + sin t) sin p, cos t)."""
    if not major_radius > 1:
        raise ValueError(f"major_radius must exceed 1 for an embedded torus, got {major_radius}")
    theta, phi = torus_angles(grid_size, sampling, seed)
    r = major_radius + np.sin(theta)
    pts = np.column_stack([r * np.cos(phi), r * np.sin(phi), np.cos(theta)])
    return PointCloud(pts, np.column_stack([theta, phi]), _labels(len(theta)), name="torus_r3")


def generate_ellipse(count: int, minor_axis: float) -> PointCloud:
    """Points (cos t_j, a sin t_j) with t_j = 2 pi j / count, j = 1..count."""
    if int(count) != count or count < 3:
        raise ValueError(f"count must be an integer >= 3, got {count}")
    if not minor_axis > 0:
        raise ValueError(f"minor_axis must be positive, got {minor_axis}")
    theta = 2 * np.pi * np.arange(1, int(count) + 1) / count
    pts = np.column_stack([np.cos(theta), minor_axis * np.sin(theta)])
    return PointCloud(pts, theta[:, None], _labels(len(theta)), name="ellipse")


def apply_torus_diffeomorphism(cloud: PointCloud) -> PointCloud:
    """H(x, y, z) = (x, y, (2 + sin(3 a) / 2) z) with a the full-plane angle of (x, y)."""
    if cloud.dim != 3:
        raise ValueError(f"expected points in R^3, got dimension {cloud.dim}")
    x, y, z = cloud.points.T
    on_axis = (x == 0) & (y == 0)
    if np.any(on_axis):
        raise ValueError(f"point {int(np.argmax(on_axis))} lies on the z-axis; angle undefined")
    factor = 2.0 + np.sin(3.0 * np.arctan2(y, x)) / 2.0
    pts = np.column_stack([x, y, factor * z])
    return PointCloud(pts, cloud.intrinsic, cloud.labels, name=(cloud.name + "_diffeo").lstrip("_"))


def apply_sphere_inversion(cloud: PointCloud, center, radius: float = 1.0) -> PointCloud:
    """x -> c + r^2 (x - c) / |x - c|^2, a conformal map of R^n minus the center."""
    c = np.asarray(center, dtype=float)
    if c.shape != (cloud.dim,):
        raise ValueError(f"center must have length {cloud.dim}")
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    d = cloud.points - c
    r2 = np.einsum("ij,ij->i", d, d)
    if np.any(r2 == 0):
        raise ValueError(f"point {int(np.argmin(r2))} coincides with the inversion center")
    pts = c + radius**2 * d / r2[:, None]
    return PointCloud(pts, cloud.intrinsic, cloud.labels, name=(cloud.name + "_inverted").lstrip("_"))


# -- CSV ---------------------------------------------------------------------


def _header(cloud: PointCloud):
    cols = [f"x{i + 1}" for i in range(cloud.dim)]
    cols += [f"t{i + 1}" for i in range(cloud.intrinsic_dim)]
    if cloud.labels is not None:
        cols.append("label")
    return cols


def save_csv(cloud: PointCloud, path) -> None:
    """Write ``x1..xn[,t1..td][,label]`` with 17 significant digits."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_header(cloud))
        for i in range(cloud.n_points):
            row = [format(v, ".17g") for v in cloud.points[i]]
            if cloud.intrinsic is not None:
                row += [format(v, ".17g") for v in cloud.intrinsic[i]]
            if cloud.labels is not None:
                row.append(cloud.labels[i])
            w.writerow(row)


def _parse_header(cols):
    xs, ts, has_label = [], [], False
    for pos, c in enumerate(cols):
        c = c.strip()
        if c == "label":
            if pos != len(cols) - 1:
                raise DataFormatError("'label' must be the last column", row=1)
            has_label = True
        elif c.startswith("x") and c[1:].isdigit():
            if ts:
                raise DataFormatError("x columns must precede t columns", row=1)
            xs.append(int(c[1:]))
        elif c.startswith("t") and c[1:].isdigit():
            ts.append(int(c[1:]))
        else:
            raise DataFormatError(f"unrecognised column {c!r}", row=1)
    if not xs:
        raise DataFormatError("no coordinate columns x1..xn", row=1)
    if xs != list(range(1, len(xs) + 1)) or ts != list(range(1, len(ts) + 1)):
        raise DataFormatError("columns must be numbered consecutively from 1", row=1)
    return len(xs), len(ts), has_label


def load_csv(path) -> PointCloud:
    """Read a cloud written by :func:`save_csv` (or any file with that header)."""
    path = Path(path)
    with path.open("r", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise DataFormatError("empty file", row=1)
    n, d, has_label = _parse_header(rows[0])
    width = n + d + int(has_label)
    pts, intr, labels = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise DataFormatError(f"expected {width} fields, got {len(row)}", row=lineno)
        try:
            vals = [float(v) for v in row[: n + d]]
        except ValueError as exc:
            raise DataFormatError(f"non-numeric field ({exc})", row=lineno) from None
        pts.append(vals[:n])
        intr.append(vals[n:])
        if has_label:
            labels.append(row[-1])
    if not pts:
        raise DataFormatError("no data rows", row=2)
    try:
        return PointCloud(
            np.array(pts),
            np.array(intr) if d else None,
            tuple(labels) if has_label else None,
            name=path.stem,
        )
    except ValueError as exc:
        raise DataFormatError(str(exc)) from None
