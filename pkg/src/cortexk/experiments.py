"""Experiment pipelines shared by the command line, the scripts and the tests.

Each function takes plain parameters, performs no I/O and returns numpy
results or fields.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .filterbank import (
    DiscreteBank,
    EndstopParams,
    GaborParams,
    SpatioTemporalParams,
    ingest_discrete_bank,
    synthetic_learned_bank,
)
from .geometry import Axis, FeatureGrid
from .kernel import PatchSpec, spatiotemporal_kernel, truncate_kernel
from .propagation import (
    Activation,
    DiscreteGridKernel,
    EndstopGridKernel,
    GaborGridKernel,
    KernelField,
    Nonlinearity,
    evolve_activation,
    generate_pinwheel,
    iterate_kernel,
    kernel_field,
    lift_image,
    propagate_pinwheel,
    transition_operator,
)
from .viz_export import (
    argmax_feature,
    default_threshold,
    patchiness,
    project_max,
    random_mask_baseline,
    ridge_radius,
)


def theta_axis(half: float = 1.5, step: float = 0.15, count: int = 0) -> Axis:
    """Orientation axis: ``count > 0`` gives ``count`` periodic samples of the
    circle centred on 0, otherwise the window ``[-half, half]``."""
    if count > 0:
        period = 2 * np.pi
        return Axis("theta", -(count // 2) * period / count, period / count, count, True)
    return Axis.symmetric("theta", half, step)


def spatial_grid(x_half: float, y_half: float, step: float, theta: Axis, extra: Sequence[Axis] = ()) -> FeatureGrid:
    axes = (Axis.symmetric("x", x_half, step), Axis.symmetric("y", y_half, step), theta) + tuple(extra)
    return FeatureGrid(axes)


# ---------------------------------------------------------------------------
# Gabor bank: kernel and propagation


def gabor_kernel_field(gp: GaborParams, grid: FeatureGrid, origin=(0.0, 0.0, 0.0),
                       patch: Optional[PatchSpec] = None) -> KernelField:
    o = dict(zip(("x", "y", "theta"), origin))
    f = kernel_field(GaborGridKernel(gp), grid, o)
    return truncate_kernel(f, patch) if patch is not None else f


def propagate(kernel, grid: FeatureGrid, origin: dict, n: int, h: Nonlinearity = Nonlinearity(),
              method: str = "auto", history: bool = True):
    """Iterated kernels ``K_1 .. K_n`` around ``origin`` (one field per step when ``history``)."""
    S = transition_operator(kernel, grid, h, method)
    p0 = grid.flat_index(**origin)
    return iterate_kernel(S, p0, n, history=history)


def gabor_propagation(gp: GaborParams, grid: FeatureGrid, n: int = 4, origin=(0.0, 0.0, 0.0),
                      patch: Optional[PatchSpec] = PatchSpec(1.0), h: Nonlinearity = Nonlinearity(),
                      method: str = "auto", history: bool = True):
    kernel = GaborGridKernel(gp, patch)
    return propagate(kernel, grid, dict(zip(("x", "y", "theta"), origin)), n, h, method, history)


# ---------------------------------------------------------------------------
# endstopping and curvature


def es_bank(length: float, lam: float = 1.0, sigma: float = 0.5, cS: float = 2.0, cL: float = 1.0):
    """Endstopped bank whose short component has axial scale ``length``; the long one has twice that.

    ``cL == 0`` switches endstopping off and returns the plain bank of that length.
    """
    if cL == 0:
        return GaborParams(lam, sigma, length)
    return EndstopParams(cS, cL, GaborParams(lam, sigma, length), GaborParams(lam, sigma, 2 * length))


def bank_kernel(bank, patch: Optional[PatchSpec] = None):
    if isinstance(bank, EndstopParams):
        return EndstopGridKernel(bank, patch)
    return GaborGridKernel(bank, patch)


@dataclass
class CurvatureResult:
    lengths: tuple
    radii: tuple
    plain_radius: float
    fields: list = field(default_factory=list, repr=False)

    @property
    def monotone(self) -> bool:
        """Radius nonincreasing as the ES length decreases."""
        order = np.argsort(self.lengths)[::-1]
        r = np.asarray(self.radii)[order]
        return bool(np.all(r[1:] <= r[:-1]))

    @property
    def plain_margin(self) -> float:
        """Plain-cell radius over the largest ES radius."""
        return self.plain_radius / max(self.radii)


def curvature_experiment(lengths=(1.0, 0.7, 0.5), lam: float = 1.0, sigma: float = 0.5,
                         cS: float = 2.0, cL: float = 1.0, half: float = 2.0, step: float = 0.1,
                         theta_count: int = 21, n: int = 2, patch: Optional[PatchSpec] = PatchSpec(1.0),
                         percentile: float = 90.0, plain_length: float = 1.0,
                         method: str = "auto") -> CurvatureResult:
    """Association fields of ES banks and of the plain cell, with fitted ridge radii.

    The preferred axis of the origin filter (orientation 0) is the y axis.
    """
    grid = spatial_grid(half, half, step, theta_axis(count=theta_count))
    origin = {"x": 0.0, "y": 0.0, "theta": 0.0}
    axis_angle = np.pi / 2

    def radius(kernel):
        k = propagate(kernel, grid, origin, n, method=method, history=False)
        proj = project_max(k, "theta")
        return ridge_radius(proj, default_threshold(proj.values, percentile), axis_angle), k

    radii, fields = [], []
    for L in lengths:
        r, k = radius(bank_kernel(es_bank(L, lam, sigma, cS, cL), patch))
        radii.append(r)
        fields.append(k)
    plain, k = radius(GaborGridKernel(GaborParams(lam, sigma, plain_length), patch))
    fields.append(k)
    return CurvatureResult(tuple(lengths), tuple(radii), plain, fields)


# ---------------------------------------------------------------------------
# pinwheel surface


@dataclass
class PinwheelResult:
    pmap: object
    kn: KernelField = field(repr=False)
    threshold: float = 0.0
    statistic: float = 0.0
    baseline: np.ndarray = field(default=None, repr=False)

    @property
    def baseline_p5(self) -> float:
        return float(np.percentile(self.baseline, 5))

    @property
    def patchy(self) -> bool:
        return self.statistic < self.baseline_p5


def pinwheel_experiment(size: int = 81, step: float = 0.1, m: int = 30, k: float = 2 * np.pi / 5, seed: int = 0,
                        gp: GaborParams = GaborParams(), n: int = 6, patch: Optional[PatchSpec] = PatchSpec(1.0),
                        percentile: float = 90.0, trials: int = 1000, method: str = "auto") -> PinwheelResult:
    pmap = generate_pinwheel(size, size, m, k, seed, step)
    kn = propagate_pinwheel(pmap, gp, (0.0, 0.0), n, patch, method=method)
    vals = kn.values  # [iy, ix]
    thr = default_threshold(vals, percentile)
    mask = vals > thr
    theta0 = pmap.theta_at(0.0, 0.0)
    stat = patchiness(pmap.theta, mask, theta0)
    base = random_mask_baseline(pmap.theta, int(mask.sum()), theta0, trials, seed)
    return PinwheelResult(pmap, kn, thr, stat, base)


# ---------------------------------------------------------------------------
# learned bank


def learned_bank(count: int = 128, size: int = 16, seed: int = 0, pad: int = 5, crop: int = 11,
                 raw=None, delta: float = 1.0) -> DiscreteBank:
    if raw is None:
        raw = synthetic_learned_bank(count, size, seed)
    return DiscreteBank(ingest_discrete_bank(raw, pad, crop, delta))


def learned_grid(bank: DiscreteBank, half: int = 12) -> FeatureGrid:
    d = bank.delta
    axes = (Axis.symmetric("x", half * d, d), Axis.symmetric("y", half * d, d), Axis("f", 0, 1, len(bank)))
    return FeatureGrid(axes, weights=1.0)


def learned_kernel_field(bank: DiscreteBank, f0: int, half: int = 12, kernel=None) -> KernelField:
    kernel = DiscreteGridKernel(bank) if kernel is None else kernel
    return kernel_field(kernel, learned_grid(bank, half), {"x": 0.0, "y": 0.0, "f": f0})


# ---------------------------------------------------------------------------
# spatiotemporal


def spatiotemporal_field(sp: SpatioTemporalParams, grid: FeatureGrid, origin=(0.0, 0.0, 0.0, 0.0),
                         family: str = "inseparable", C: float = 1.0, C0: float = 1.0) -> KernelField:
    """Factorized kernel around ``origin`` (x, y, theta, alpha) on a 4D grid.

    ``family="C"`` uses the C-weighted profiles, expanded bilinearly.
    """
    c = grid.coords()
    x0, y0, t0, a0 = origin

    def K(sign, sign0):
        return spatiotemporal_kernel(sp, c["x"], c["y"], c["theta"], sign * c["alpha"], x0, y0, t0, sign0 * a0)

    if family == "inseparable":
        vals = K(1, 1)
    elif family == "C":
        if not (0 <= C <= 1 and 0 <= C0 <= 1):
            raise ValueError("separability indices must lie in [0, 1]")
        vals = (C * C0 * K(1, 1) + C * (1 - C0) * K(1, -1)
                + (1 - C) * C0 * K(-1, 1) + (1 - C) * (1 - C0) * K(-1, -1))
    else:
        raise ValueError(f"unknown spatiotemporal family {family!r}")
    return KernelField(grid, np.asarray(vals, dtype=float), tuple(origin))


# ---------------------------------------------------------------------------
# image lift and evolution


def image_grid(shape, step: float, theta: Axis) -> tuple:
    """Feature grid on the pixel lattice of an image centred on the origin, and that origin."""
    h, w = shape
    ox, oy = -(w - 1) / 2 * step, -(h - 1) / 2 * step
    axes = (Axis("x", ox, step, w), Axis("y", oy, step, h), theta)
    return FeatureGrid(axes), (ox, oy)


def lift_and_evolve(image, gp: GaborParams, step: float, theta: Axis, n: int,
                    patch: Optional[PatchSpec] = PatchSpec(1.0), h: Nonlinearity = Nonlinearity(),
                    method: str = "auto") -> list:
    """``[I_0, ..., I_n]`` for a grayscale image (values in [0, 1])."""
    grid, origin = image_grid(np.shape(image), step, theta)
    I0 = lift_image(np.asarray(image, dtype=float), gp, grid, h, step, origin)
    if not np.any(I0.values):
        return [Activation(grid, np.zeros(grid.shape), k) for k in range(n + 1)]
    S = transition_operator(GaborGridKernel(gp, patch), grid, h, method)
    return evolve_activation(S, I0, n, history=True)


def bar_image(size: int, angle: float, length: float, width: float = 1.0, centre=None,
              gaps: Sequence[tuple] = ()) -> np.ndarray:
    """Bright bar (in pixels) through ``centre`` along direction ``angle``.

    ``gaps`` lists axial intervals ``(a, b)`` left dark.  Row index grows
    with ``y``.
    """
    c = (size - 1) / 2 if centre is None else centre
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    s = (xx - c) * np.cos(angle) + (yy - c) * np.sin(angle)
    w = -(xx - c) * np.sin(angle) + (yy - c) * np.cos(angle)
    img = (np.abs(s) <= length / 2) & (np.abs(w) <= width / 2)
    for a, b in gaps:
        img &= ~((s > a) & (s < b))
    return img.astype(float)


def glyph_cone_agreement(af, cone_axis: float, half_angle: float, tol: float) -> float:
    """Fraction of masked pixels inside the double cone about ``cone_axis`` whose
    glyph axis (``theta + pi/2``) is within ``tol`` of the cone axis."""
    names = tuple(a.name for a in af.axes)
    X, Y = np.meshgrid(af.axes[names.index("x")].values, af.axes[names.index("y")].values, indexing="xy")
    mask = af.yx(af.mask)
    ang = np.arctan2(Y, X)
    d = np.mod(ang - cone_axis, np.pi)
    inside = mask & (np.minimum(d, np.pi - d) <= half_angle) & (np.hypot(X, Y) > 0)
    if not inside.any():
        raise ValueError("no masked pixels in the cone")
    g = np.mod(af.yx(af.coord)[inside] + np.pi / 2 - cone_axis, np.pi)
    return float(np.mean(np.minimum(g, np.pi - g) <= tol + 1e-9))


def argmax_theta(field: KernelField, percentile: float = 90.0):
    proj = project_max(field, "theta")
    return argmax_feature(field, "theta", default_threshold(proj.values, percentile))
