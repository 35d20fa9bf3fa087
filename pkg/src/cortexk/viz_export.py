"""Retinal projections, argmax fields, glyph renders, level sets and shape statistics.

Raster convention: row 0 is the largest ``y``, column 0 the smallest ``x``,
so images read the way the plane is drawn.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .filterbank import DiscreteBank, EndstopParams, GaborParams, gabor_array, wrap_orientation
from .formats import normalize_gray
from .geometry import Axis


@dataclass(frozen=True)
class Projection2D:
    """A field reduced along one axis; ``values`` follow the order of ``axes``."""

    axes: tuple
    values: np.ndarray
    source: str = ""
    reduced: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != tuple(a.count for a in self.axes):
            raise ValueError("projection values do not match its axes")
        if not np.all(np.isfinite(values)):
            raise ValueError("projection values must be finite")
        object.__setattr__(self, "axes", tuple(self.axes))
        object.__setattr__(self, "values", values)

    @property
    def names(self) -> tuple:
        return tuple(a.name for a in self.axes)

    def axis(self, name: str) -> Axis:
        return self.axes[self.names.index(name)]

    @property
    def width(self) -> int:
        return self.axis("x").count

    @property
    def height(self) -> int:
        return self.axis("y").count

    def yx(self) -> np.ndarray:
        """Values indexed ``[iy, ix]`` (needs exactly the axes x and y)."""
        if sorted(self.names) != ["x", "y"]:
            raise ValueError(f"not a planar projection: axes {self.names}")
        return self.values if self.names == ("y", "x") else self.values.T

    def raster(self) -> np.ndarray:
        return self.yx()[::-1]


@dataclass(frozen=True)
class ArgmaxField:
    """Per-pixel maximizing coordinate of the reduced axis, valid where ``mask``."""

    axes: tuple
    index: np.ndarray
    coord: np.ndarray
    mask: np.ndarray
    reduced: Axis
    peak: np.ndarray

    def yx(self, arr) -> np.ndarray:
        names = tuple(a.name for a in self.axes)
        if sorted(names) != ["x", "y"]:
            raise ValueError(f"not a planar field: axes {names}")
        return arr if names == ("y", "x") else arr.T


def _field_parts(field):
    grid = getattr(field, "grid", None)
    if grid is None:
        raise TypeError("expected a KernelField or Activation")
    return grid, np.asarray(field.values, dtype=float)


def as_projection(field, source: str = "") -> Projection2D:
    """Wrap a field that already lives on a planar grid."""
    grid, values = _field_parts(field)
    return Projection2D(grid.axes, values, source)


def project_max(field, axis: str, source: str = "") -> Projection2D:
    grid, values = _field_parts(field)
    k = grid.axis_index(axis)
    axes = tuple(a for a in grid.axes if a.name != axis)
    return Projection2D(axes, values.max(axis=k), source, axis)


def argmax_feature(field, axis: str, threshold: float) -> ArgmaxField:
    """Maximizing coordinate along ``axis`` wherever the maximum exceeds ``threshold``.

    ``np.argmax`` returns the first maximizer, which is the smallest coordinate.
    """
    if np.isnan(threshold):
        raise ValueError("threshold must not be NaN")
    grid, values = _field_parts(field)
    k = grid.axis_index(axis)
    ax = grid.axis(axis)
    idx = np.argmax(values, axis=k)
    peak = np.max(values, axis=k)
    axes = tuple(a for a in grid.axes if a.name != axis)
    return ArgmaxField(axes, idx, ax.values[idx], peak > threshold, ax, peak)


def default_threshold(values, percentile: float = 90.0) -> float:
    """Percentile of the strictly positive values; ``inf`` when there are none."""
    values = np.asarray(values, dtype=float)
    pos = values[values > 0]
    if pos.size == 0:
        return float("inf")
    return float(np.percentile(pos, percentile))


# ---------------------------------------------------------------------------
# glyphs


def glyph_stamp(bank, coord, size: int) -> np.ndarray:
    """``size x size`` real-part miniature of the filter at ``coord``, peak |value| 1.

    ``bank`` is a ``GaborParams``/``EndstopParams`` (``coord`` is an
    orientation) or a ``DiscreteBank`` (``coord`` is a filter index).
    Rows run from top (+v) to bottom (-v).
    """
    if size < 1 or size % 2 == 0:
        raise ValueError(f"glyph size must be odd, got {size}")
    if isinstance(bank, DiscreteBank):
        vals = np.real(bank.stack[int(round(coord))])
        h, w = vals.shape
        rows = np.minimum((np.arange(size) + 0.5) * h // size, h - 1).astype(int)
        cols = np.minimum((np.arange(size) + 0.5) * w // size, w - 1).astype(int)
        # filter rows grow with v; flip so +v is at the top
        st = vals[np.ix_(rows, cols)][::-1]
    else:
        if isinstance(bank, EndstopParams):
            gps = [(bank.cS, bank.short), (-bank.cL, bank.long)]
            reach = 2.0 * max(bank.long.sigma, bank.long.ell)
        elif isinstance(bank, GaborParams):
            gps = [(1.0, bank)]
            reach = 2.0 * max(bank.sigma, bank.ell)
        else:
            raise TypeError(f"cannot render glyphs for {type(bank).__name__}")
        r = reach * np.linspace(-1.0, 1.0, size) if size > 1 else np.zeros(1)
        U, V = np.meshgrid(r, r[::-1], indexing="xy")
        st = sum(c * np.real(gabor_array(gp, 0.0, 0.0, float(coord), U, V)) for c, gp in gps)
    m = np.abs(st).max()
    return st / m if m > 0 else st


def render_glyph_field(af: ArgmaxField, bank, glyph_size: int = 9, stride: int = 1,
                       spacing: Optional[int] = None) -> np.ndarray:
    """Grayscale raster (floats in [0, 1]) with one glyph per masked lattice site.

    Sites are taken every ``stride`` pixels and laid out ``spacing`` canvas
    pixels apart.  Stamps add on a mid-grey background and saturate at
    black and white.
    """
    if glyph_size < 1 or glyph_size % 2 == 0:
        raise ValueError(f"glyph size must be odd, got {glyph_size}")
    spacing = glyph_size if spacing is None else int(spacing)
    mask = af.yx(af.mask)[::-1]
    coord = af.yx(af.coord)[::-1]
    h, w = mask.shape
    sh, sw = (h - 1) // stride, (w - 1) // stride
    canvas = np.zeros((sh * spacing + glyph_size, sw * spacing + glyph_size))
    cache = {}
    for i in range(0, h, stride):
        for j in range(0, w, stride):
            if not mask[i, j]:
                continue
            c = float(coord[i, j])
            if c not in cache:
                cache[c] = glyph_stamp(bank, c, glyph_size)
            r0 = (i // stride) * spacing
            c0 = (j // stride) * spacing
            canvas[r0:r0 + glyph_size, c0:c0 + glyph_size] += cache[c]
    return np.clip(0.5 + 0.5 * canvas, 0.0, 1.0)


# ---------------------------------------------------------------------------
# orientation-map overlays


def orientation_hue(theta, period: float = np.pi) -> np.ndarray:
    """Hue in [0, 1): ``theta`` in (-period/2, period/2] maps linearly."""
    theta = np.asarray(theta, dtype=float)
    return np.mod(theta + period / 2, period) / period


def hsv_full_to_rgb(hue) -> np.ndarray:
    """RGB of fully saturated, full-value colours."""
    h6 = 6.0 * np.asarray(hue, dtype=float)[..., None]
    rgb = np.abs(h6 - np.array([3.0, 2.0, 4.0])) * np.array([1.0, -1.0, -1.0]) + np.array([-1.0, 2.0, 2.0])
    return np.clip(rgb, 0.0, 1.0)


def orientation_map_image(pmap, period: float = np.pi) -> np.ndarray:
    return hsv_full_to_rgb(orientation_hue(pmap.theta, period))[::-1]


def overlay_threshold(proj: Projection2D, pmap, threshold: float, origin=(0.0, 0.0),
                      period: float = np.pi) -> np.ndarray:
    """Orientation map in hue, pixels of ``proj`` above ``threshold`` in black, origin in white."""
    vals = proj.yx()
    if vals.shape != pmap.theta.shape:
        raise ValueError(f"projection is {vals.shape[::-1]} (w, h) but the map is {pmap.theta.shape[::-1]}")
    rgb = hsv_full_to_rgb(orientation_hue(pmap.theta, period))
    rgb[vals > threshold] = 0.0
    iy, ix = pmap.index(*origin)
    rgb[iy, ix] = 1.0
    return rgb[::-1]


def wrapped_orientation_distance(a, b, period: float = np.pi) -> np.ndarray:
    d = np.mod(np.asarray(a, dtype=float) - b, period)
    return np.minimum(d, period - d)


def patchiness(theta_map, mask, theta0: float, period: float = np.pi) -> float:
    """Mean wrapped orientation distance to ``theta0`` over the masked pixels."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty mask")
    return float(wrapped_orientation_distance(np.asarray(theta_map)[mask], theta0, period).mean())


def random_mask_baseline(theta_map, size: int, theta0: float, trials: int = 1000, seed: int = 0,
                         period: float = np.pi) -> np.ndarray:
    """``patchiness`` of ``trials`` uniformly random pixel sets of ``size`` pixels."""
    flat = np.asarray(theta_map, dtype=float).ravel()
    if not 0 < size <= flat.size:
        raise ValueError("mask size must be between 1 and the map size")
    rng = np.random.default_rng(seed)
    d = wrapped_orientation_distance(flat, theta0, period)
    return np.array([d[rng.choice(flat.size, size, replace=False)].mean() for _ in range(trials)])


# ---------------------------------------------------------------------------
# level sets and components


def level_set_mask(field, level: float) -> np.ndarray:
    """Grid points on the level or with an axis neighbour on the other side of it."""
    grid, values = _field_parts(field)
    s = values - level
    out = s == 0
    for k, ax in enumerate(grid.axes):
        if ax.count < 2:
            continue
        nxt = np.roll(s, -1, axis=k)
        cross = (s > 0) & (nxt < 0) | (s < 0) & (nxt > 0)
        if not ax.periodic:
            edge = [slice(None)] * s.ndim
            edge[k] = -1
            cross[tuple(edge)] = False
        out |= cross | np.roll(cross, 1, axis=k)
    return out


def level_set(field, level: float) -> np.ndarray:
    """``(n, ndim)`` coordinates of the level-set points."""
    grid, _ = _field_parts(field)
    mask = level_set_mask(field, level)
    return np.stack([c[mask] for c in grid.coords().values()], axis=1)


def label_components(mask, axes, connectivity: int = 1):
    """Connected components of ``mask``; periodic axes glue their two ends.

    ``connectivity=1`` is face adjacency (6 neighbours in 3D), larger values
    add edge and corner neighbours as in ``ndimage.generate_binary_structure``.
    Returns ``(labels, count)`` with labels ``1..count`` and ``0`` off the mask.
    """
    mask = np.asarray(mask, dtype=bool)
    structure = ndimage.generate_binary_structure(mask.ndim, connectivity)
    pads = [(1, 1) if ax.periodic and n > 1 else (0, 0) for ax, n in zip(axes, mask.shape)]
    # one wrapped layer on each periodic side lets ndimage see the neighbours across the seam
    labels, n = ndimage.label(np.pad(mask, pads, mode="wrap"), structure=structure)
    core = tuple(slice(a, a + s) for (a, _), s in zip(pads, mask.shape))
    parent = np.arange(n + 1)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    if any(a for a, _ in pads):
        idx = np.indices(labels.shape)
        orig = tuple(np.mod(i - a, s) + a for i, (a, _), s in zip(idx, pads, mask.shape))
        twin = labels[orig]
        both = labels > 0
        for a, b in set(zip(labels[both].tolist(), twin[both].tolist())):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    core_labels = labels[core]
    roots = np.array([find(i) for i in range(n + 1)])
    used = np.unique(roots[core_labels[core_labels > 0]])
    relabel = np.zeros(n + 1, dtype=int)
    relabel[1:] = np.searchsorted(used, roots[1:]) + 1
    return np.where(core_labels > 0, relabel[core_labels], 0), int(used.size)


def count_components(field, level: float) -> int:
    """Number of connected components of ``{K > level}``."""
    grid, values = _field_parts(field)
    return label_components(values > level, grid.axes)[1]


# ---------------------------------------------------------------------------
# shape statistics


def _planar_coords(proj: Projection2D):
    X, Y = np.meshgrid(proj.axis("x").values, proj.axis("y").values, indexing="xy")
    return X, Y, proj.yx()


def cone_mass_ratio(field, axis_angle: float, half_angle: float = np.pi / 6) -> float:
    """Mass of the double cone about ``axis_angle`` over that of the orthogonal double cone.

    Mass is the measure-weighted sum of the field over all non-spatial
    coordinates; the origin belongs to neither cone.
    """
    grid, values = _field_parts(field)
    c = grid.coords()
    ang = np.arctan2(c["y"], c["x"])
    r = np.hypot(c["x"], c["y"])
    w = values * grid.weights
    d_ax = wrapped_orientation_distance(ang, axis_angle)
    d_orth = wrapped_orientation_distance(ang, axis_angle + np.pi / 2)
    axial = w[(d_ax <= half_angle) & (r > 0)].sum()
    orth = w[(d_orth <= half_angle) & (r > 0)].sum()
    return float(axial / orth) if orth > 0 else float("inf")


def origin_component(proj: Projection2D, threshold: float, origin=(0.0, 0.0)) -> np.ndarray:
    """Face-connected suprathreshold region of the planar projection that contains ``origin``.

    Returned as a ``[iy, ix]`` mask (empty if the origin is subthreshold).
    """
    X, Y, vals = _planar_coords(proj)
    labels, _ = label_components(vals > threshold, (proj.axis("y"), proj.axis("x")))
    iy = proj.axis("y").index_of(origin[1])
    ix = proj.axis("x").index_of(origin[0])
    lab = labels[iy, ix]
    return labels == lab if lab else np.zeros_like(vals, dtype=bool)


def region_anisotropy(proj: Projection2D, threshold: float, origin=(0.0, 0.0)):
    """Second-moment anisotropy of the origin's suprathreshold region.

    Returns ``(ratio, angle)``: the ratio of the covariance eigenvalues
    (``inf`` for a segment) and the direction of the major axis, mod pi.
    """
    X, Y, _ = _planar_coords(proj)
    m = origin_component(proj, threshold, origin)
    if m.sum() < 2:
        raise ValueError("region has fewer than two pixels")
    cov = np.cov(np.stack([X[m], Y[m]]), bias=True)
    ev, evec = np.linalg.eigh(cov)
    angle = float(wrap_orientation(np.arctan2(evec[1, 1], evec[0, 1])))
    ratio = float(ev[1] / ev[0]) if ev[0] > 1e-12 * ev[1] else float("inf")
    return ratio, angle


def ridge_radius(proj: Projection2D, threshold: float, axis_angle: float, min_axial: float = 0.5) -> float:
    """Radius of the circle through the origin, tangent to ``axis_angle``, fitted to the field ridge.

    For each row across the axis (fixed axial coordinate ``s``, ``|s| >=
    min_axial``) the ridge point is the strongest suprathreshold pixel;
    with ``w`` its lateral offset the fit minimizes
    ``sum (2|w| - kappa (s^2 + w^2))^2``.  A straight field gives ``inf``.
    """
    X, Y, vals = _planar_coords(proj)
    c, s_ = np.cos(axis_angle), np.sin(axis_angle)
    S = X * c + Y * s_
    W = -X * s_ + Y * c
    step = min(proj.axis("x").step, proj.axis("y").step)
    rows = np.round(S / step).astype(int)
    num = den = 0.0
    sup = vals > threshold
    for r in np.unique(rows[sup]):
        if abs(r * step) < min_axial - 1e-9:
            continue
        sel = sup & (rows == r)
        k = np.argmax(np.where(sel, vals, -np.inf))
        s, w = S.flat[k], W.flat[k]
        r2 = s * s + w * w
        num += 2 * abs(w) * r2
        den += r2 * r2
    if den == 0:
        raise ValueError("no suprathreshold rows away from the origin")
    kappa = num / den
    return float("inf") if kappa <= 1e-12 else 1.0 / kappa


def axial_argmax_agreement(af: ArgmaxField, line_angle: float, expected: float, tol: float,
                           max_radius: float, period: float = np.pi) -> float:
    """Fraction of masked pixels on the line through the origin at ``line_angle``
    (within ``max_radius``) whose argmax lies within ``tol`` of ``expected``."""
    names = tuple(a.name for a in af.axes)
    X, Y = np.meshgrid(af.axes[names.index("x")].values, af.axes[names.index("y")].values, indexing="xy")
    mask = af.yx(af.mask)
    coord = af.yx(af.coord)
    dist_line = np.abs(-X * np.sin(line_angle) + Y * np.cos(line_angle))
    step = min(a.step for a in af.axes)
    on = mask & (dist_line < 0.5 * step) & (np.hypot(X, Y) <= max_radius)
    if not on.any():
        raise ValueError("no suprathreshold pixels on the line")
    d = wrapped_orientation_distance(coord[on], expected, period)
    return float(np.mean(d <= tol + 1e-9))


def projection_image(proj: Projection2D, lo=None, hi=None) -> np.ndarray:
    """Grayscale raster of a planar projection, linearly scaled."""
    return normalize_gray(proj.raster(), lo, hi)
