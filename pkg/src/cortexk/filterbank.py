"""Receptive-profile filter families.

Every analytic family shares one rotation convention: for a filter centred
at ``(x, y)`` with orientation ``theta``

    X =  (u - x) cos(theta) + (v - y) sin(theta)
    Y = -(u - x) sin(theta) + (v - y) cos(theta)

so ``X`` runs across the stripes (the modulation direction) and ``Y`` along
the edge axis of the profile.

Banks expose ``samples(p, steps)``, which returns the filter sampled on the
global lattice ``{k * step}`` of each coordinate, as an ``(offsets, array)``
pair.  Array axes are ordered ``(v, u)`` for planar filters and
``(s, v, u)`` for spatiotemporal ones; ``offsets`` holds the lattice index of
element ``[0, 0(, 0)]`` in the same order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi
# Half-width of the sampling window, in Gaussian scales.
WINDOW_SCALES = 4.0


def wrap_angle(theta):
    """Reduce angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), TWO_PI)


def wrap_orientation(theta):
    """Reduce undirected orientations (period pi) to (-pi/2, pi/2]."""
    return np.pi / 2 - np.mod(np.pi / 2 - np.asarray(theta, dtype=float), np.pi)


@dataclass(frozen=True)
class GaborParams:
    """Wavelength and Gaussian scale of a Gabor bank.

    ``length`` is the Gaussian scale along the edge axis; ``None`` gives the
    isotropic profile with ``length == sigma``.
    """

    lam: float = 1.0
    sigma: float = 0.5
    length: Optional[float] = None

    def __post_init__(self):
        if not (self.lam > 0 and np.isfinite(self.lam)):
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.length is not None and not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length}")

    @property
    def ell(self) -> float:
        return self.sigma if self.length is None else self.length

    @property
    def eta(self) -> float:
        """Squared L2 norm of every filter of the bank."""
        return np.pi * self.sigma * self.ell


@dataclass(frozen=True)
class FeaturePoint:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0
    t: Optional[float] = None
    alpha: Optional[float] = None
    C: Optional[float] = None
    f: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "theta", float(wrap_angle(self.theta)))
        if self.C is not None and not 0.0 <= self.C <= 1.0:
            raise ValueError(f"separability index C must lie in [0, 1], got {self.C}")

    def replace(self, **changes) -> "FeaturePoint":
        values = dict(x=self.x, y=self.y, theta=self.theta, t=self.t,
                      alpha=self.alpha, C=self.C, f=self.f)
        values.update(changes)
        return FeaturePoint(**values)


@dataclass(frozen=True)
class EndstopParams:
    """Weights and component profiles of ``cS * psi_S - cL * psi_L``."""

    cS: float = 2.0
    cL: float = 1.0
    short: GaborParams = field(default_factory=lambda: GaborParams(1.0, 0.5, 0.5))
    long: GaborParams = field(default_factory=lambda: GaborParams(1.0, 0.5, 1.0))

    def __post_init__(self):
        if not self.cS > self.cL > 0:
            raise ValueError(f"endstopping needs cS > cL > 0, got cS={self.cS}, cL={self.cL}")


@dataclass(frozen=True)
class SpatioTemporalParams:
    lam: float = 1.0
    sigma: float = 0.5
    beta: float = 1.0

    def __post_init__(self):
        GaborParams(self.lam, self.sigma)
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")

    @property
    def spatial(self) -> GaborParams:
        return GaborParams(self.lam, self.sigma)


@dataclass(frozen=True)
class DiscreteFilter:
    """A sampled filter; ``center`` is the raw-array pixel (row, col) it was centred on."""

    values: np.ndarray
    delta: float = 1.0
    center: tuple = (0, 0)

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise ValueError("a discrete filter must be a 2D array")
        if not np.all(np.isfinite(values)):
            raise ValueError("filter values must be finite")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class PinwheelMap:
    """Orientation field ``theta[iy, ix]`` sampled at ``(xs[ix], ys[iy])``."""

    xs: np.ndarray
    ys: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape != (ys.size, xs.size):
            raise ValueError(f"theta has shape {theta.shape}, expected {(ys.size, xs.size)}")
        for name, arr in (("xs", xs), ("ys", ys), ("theta", theta)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def index(self, x: float, y: float) -> tuple:
        ix = _grid_index(self.xs, x, "x")
        iy = _grid_index(self.ys, y, "y")
        return iy, ix

    def theta_at(self, x: float, y: float) -> float:
        return float(self.theta[self.index(x, y)])


def _grid_index(axis: np.ndarray, value: float, name: str) -> int:
    i = int(np.argmin(np.abs(axis - value)))
    step = abs(axis[1] - axis[0]) if axis.size > 1 else 1.0
    if abs(axis[i] - value) > 1e-9 * max(step, 1.0):
        raise ValueError(f"{name}={value} is not a point of the map grid")
    return i


# ---------------------------------------------------------------------------
# pointwise evaluation


def _rotated(x, y, theta, u, v):
    c, s = np.cos(theta), np.sin(theta)
    du, dv = u - x, v - y
    return du * c + dv * s, -du * s + dv * c


def gabor_array(gp: GaborParams, x, y, theta, u, v):
    """Broadcasting Gabor evaluation on raw coordinates."""
    X, Y = _rotated(x, y, theta, u, v)
    return np.exp(2j * np.pi * X / gp.lam) * np.exp(-X**2 / (2 * gp.sigma**2) - Y**2 / (2 * gp.ell**2))


def gabor_value(gp: GaborParams, p: FeaturePoint, u, v):
    """Value of the Gabor profile indexed by ``p`` at retinal point(s) ``(u, v)``."""
    out = gabor_array(gp, p.x, p.y, p.theta, np.asarray(u, float), np.asarray(v, float))
    return complex(out) if out.ndim == 0 else out


def endstopped_value(ep: EndstopParams, p: FeaturePoint, u, v):
    u, v = np.asarray(u, float), np.asarray(v, float)
    out = (ep.cS * gabor_array(ep.short, p.x, p.y, p.theta, u, v)
           - ep.cL * gabor_array(ep.long, p.x, p.y, p.theta, u, v))
    return complex(out) if out.ndim == 0 else out


def rectify(z):
    return np.maximum(z, 0.0)


def endstopped_response(ep: EndstopParams, RS, RL):
    """Rectified endstopped response from the short and long linear responses."""
    out = rectify(ep.cS * rectify(RS) - ep.cL * rectify(RL))
    return float(out) if np.ndim(out) == 0 else out


def _require(p: FeaturePoint, *names):
    missing = [n for n in names if getattr(p, n) is None]
    if missing:
        raise ValueError(f"feature point lacks {', '.join(missing)}")


def spatiotemporal_array(sp: SpatioTemporalParams, x, y, theta, t, alpha, u, v, s):
    X, Y = _rotated(x, y, theta, u, v)
    tau = s - t
    phase = np.exp(-2j * np.pi * (X / sp.lam + alpha * tau))
    return phase * np.exp(-(X**2 + Y**2) / (2 * sp.sigma**2) - tau**2 / (2 * sp.beta**2))


def spatiotemporal_value(sp: SpatioTemporalParams, p: FeaturePoint, u, v, s):
    """Inseparable spatiotemporal Gabor with peak time ``p.t`` and velocity ``p.alpha``."""
    _require(p, "t", "alpha")
    out = spatiotemporal_array(sp, p.x, p.y, p.theta, p.t, p.alpha,
                               np.asarray(u, float), np.asarray(v, float), np.asarray(s, float))
    return complex(out) if out.ndim == 0 else out


def c_weighted_value(sp: SpatioTemporalParams, p: FeaturePoint, u, v, s):
    """Mixture ``C psi_alpha + (1 - C) psi_-alpha`` of the two motion directions."""
    _require(p, "t", "alpha", "C")
    if p.alpha < 0:
        raise ValueError("alpha must be nonnegative when C is given")
    u, v, s = (np.asarray(a, float) for a in (u, v, s))
    plus = spatiotemporal_array(sp, p.x, p.y, p.theta, p.t, p.alpha, u, v, s)
    minus = spatiotemporal_array(sp, p.x, p.y, p.theta, p.t, -p.alpha, u, v, s)
    out = p.C * plus + (1.0 - p.C) * minus
    return complex(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# banks


def _lattice_range(center: float, radius: float, step: float) -> np.ndarray:
    lo = int(np.floor((center - radius) / step))
    hi = int(np.ceil((center + radius) / step))
    return np.arange(lo, hi + 1)


class AnalyticBank:
    """Base for closed-form banks sampled on demand."""

    ndim = 2

    def evaluate(self, p: FeaturePoint, *coords):
        raise NotImplementedError

    def radii(self, p: FeaturePoint) -> tuple:
        """Sampling half-widths around the filter centre, one per coordinate."""
        raise NotImplementedError

    def centre(self, p: FeaturePoint) -> tuple:
        return (p.x, p.y)

    def default_steps(self) -> tuple:
        raise NotImplementedError

    def samples(self, p: FeaturePoint, steps: Sequence[float]):
        centre = self.centre(p)
        idx = [_lattice_range(c, r, h) for c, r, h in zip(centre, self.radii(p), steps)]
        coords = [i * h for i, h in zip(idx, steps)]
        # meshgrid in (.., v, u) axis order
        mesh = np.meshgrid(*coords[::-1], indexing="ij")[::-1]
        values = self.evaluate(p, *mesh)
        offsets = tuple(int(i[0]) for i in idx[::-1])
        return offsets, np.asarray(values, dtype=complex)


class GaborBank(AnalyticBank):
    def __init__(self, gp: GaborParams = GaborParams()):
        self.gp = gp

    def evaluate(self, p, u, v):
        return gabor_array(self.gp, p.x, p.y, p.theta, u, v)

    def radii(self, p):
        r = WINDOW_SCALES * max(self.gp.sigma, self.gp.ell)
        return (r, r)

    def default_steps(self):
        h = min(self.gp.sigma, self.gp.ell) / 20
        return (h, h)


class EndstopBank(AnalyticBank):
    def __init__(self, ep: EndstopParams):
        self.ep = ep

    def evaluate(self, p, u, v):
        return endstopped_value(self.ep, p, u, v)

    def radii(self, p):
        r = WINDOW_SCALES * max(self.ep.short.sigma, self.ep.short.ell,
                                self.ep.long.sigma, self.ep.long.ell)
        return (r, r)

    def default_steps(self):
        h = min(self.ep.short.sigma, self.ep.short.ell, self.ep.long.sigma, self.ep.long.ell) / 20
        return (h, h)


class SpatioTemporalBank(AnalyticBank):
    """Inseparable spatiotemporal Gabors; ``weighted=True`` uses the C-mixture."""

    ndim = 3

    def __init__(self, sp: SpatioTemporalParams, weighted: bool = False):
        self.sp = sp
        self.weighted = weighted

    def evaluate(self, p, u, v, s):
        if self.weighted:
            return c_weighted_value(self.sp, p, u, v, s)
        return spatiotemporal_value(self.sp, p, u, v, s)

    def centre(self, p):
        _require(p, "t")
        return (p.x, p.y, p.t)

    def radii(self, p):
        r = WINDOW_SCALES * self.sp.sigma
        return (r, r, WINDOW_SCALES * self.sp.beta)

    def default_steps(self):
        h = self.sp.sigma / 20
        return (h, h, self.sp.beta / 20)


class DiscreteBank:
    """Learned filters ``psi_f`` translated over the pixel lattice.

    Feature points carry ``f`` (filter index) and a position that must lie
    on the lattice of spacing ``delta``.
    """

    ndim = 2

    def __init__(self, filters: Sequence[DiscreteFilter]):
        if not filters:
            raise ValueError("empty filter bank")
        shapes = {f.values.shape for f in filters}
        deltas = {f.delta for f in filters}
        if len(shapes) != 1 or len(deltas) != 1:
            raise ValueError("all filters of a bank must share shape and spacing")
        self.filters = list(filters)
        self.shape = shapes.pop()
        self.delta = deltas.pop()
        self.stack = np.stack([f.values for f in self.filters]).astype(complex)
        self.stack.setflags(write=False)

    def __len__(self):
        return len(self.filters)

    def default_steps(self):
        return (self.delta, self.delta)

    def lattice_index(self, value: float) -> int:
        k = value / self.delta
        if abs(k - round(k)) > 1e-9:
            raise ValueError(f"position {value} is not on the filter lattice (spacing {self.delta})")
        return int(round(k))

    def samples(self, p: FeaturePoint, steps: Sequence[float] = None):
        if steps is not None and any(abs(h - self.delta) > 1e-12 * self.delta for h in steps):
            raise ValueError(f"discrete bank is sampled at spacing {self.delta}, not {tuple(steps)}")
        _require(p, "f")
        h, w = self.shape
        ix, iy = self.lattice_index(p.x), self.lattice_index(p.y)
        return (iy - h // 2, ix - w // 2), self.stack[p.f]

    def normalized(self, eta: float = 1.0) -> "DiscreteBank":
        out = []
        for f in self.filters:
            norm2 = np.sum(np.abs(f.values) ** 2) * f.delta**2
            out.append(DiscreteFilter(f.values * np.sqrt(eta / norm2), f.delta, f.center))
        return DiscreteBank(out)


class PinwheelBank:
    """Sub-bank ``psi_{x, y, theta(x, y)}`` selected by an orientation map."""

    def __init__(self, bank, pmap: PinwheelMap):
        self.bank = bank
        self.map = pmap
        self.ndim = bank.ndim

    def full_point(self, x: float, y: float) -> FeaturePoint:
        return FeaturePoint(x, y, self.map.theta_at(x, y))

    def default_steps(self):
        return self.bank.default_steps()

    def samples(self, p: FeaturePoint, steps):
        return self.bank.samples(self.full_point(p.x, p.y), steps)


def pinwheel_restrict(bank, pmap: PinwheelMap) -> PinwheelBank:
    if isinstance(bank, DiscreteBank):
        for arr, name in ((pmap.xs, "x"), (pmap.ys, "y")):
            k = arr / bank.delta
            if np.any(np.abs(k - np.round(k)) > 1e-9):
                raise ValueError(f"map {name}-grid does not match the bank lattice")
    return PinwheelBank(bank, pmap)


# ---------------------------------------------------------------------------
# learned banks


def centre_index(values: np.ndarray) -> tuple:
    """Pixel of the maximum (modulus for complex arrays); ties go to the first in row-major order."""
    values = np.asarray(values)
    key = np.abs(values) if np.iscomplexobj(values) else values
    return np.unravel_index(int(np.argmax(key)), values.shape)


def ingest_discrete_bank(raw: Sequence[np.ndarray], pad: int = 5, crop: int = 11,
                         delta: float = 1.0) -> list:
    """Zero-pad, centre on the maximum and crop each raw filter."""
    if len(raw) == 0:
        raise ValueError("empty filter bank")
    if crop % 2 == 0 or crop <= 0:
        raise ValueError(f"crop size must be odd and positive, got {crop}")
    if pad < 0:
        raise ValueError("padding must be nonnegative")
    arrays = [np.asarray(r) for r in raw]
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays) or len(shape) != 2:
        raise ValueError("raw filters must be 2D arrays of equal shape")
    if crop > min(shape) + 2 * pad:
        raise ValueError(f"crop {crop} exceeds padded size {tuple(s + 2 * pad for s in shape)}")
    half = crop // 2
    out = []
    for a in arrays:
        padded = np.pad(a, pad)
        r, c = centre_index(padded)
        window = np.zeros((crop, crop), dtype=padded.dtype)
        r0, c0 = r - half, c - half
        rs, cs = max(r0, 0), max(c0, 0)
        re, ce = min(r0 + crop, padded.shape[0]), min(c0 + crop, padded.shape[1])
        window[rs - r0:re - r0, cs - c0:ce - c0] = padded[rs:re, cs:ce]
        out.append(DiscreteFilter(window, delta, (int(r - pad), int(c - pad))))
    return out


def synthetic_learned_bank(count: int = 128, size: int = 16, seed: int = 0,
                           noise: float = 0.02) -> list:
    """Seeded stand-in for a sparse-coding basis: localized, oriented, bandpass.

    Returns ``count`` real ``size x size`` arrays of unit L2 norm.
    """
    rng = np.random.default_rng(seed)
    rows, cols = np.mgrid[0:size, 0:size].astype(float)
    out = []
    for _ in range(count):
        theta = rng.uniform(0, np.pi)
        lam = rng.uniform(4.0, 8.0)
        sx = rng.uniform(0.25, 0.35) * lam
        sy = sx * rng.uniform(2.0, 3.0)
        phase = rng.uniform(0, TWO_PI)
        cx, cy = rng.uniform(4, size - 5, size=2)
        X, Y = _rotated(cx, cy, theta, cols, rows)
        g = np.cos(TWO_PI * X / lam + phase) * np.exp(-X**2 / (2 * sx**2) - Y**2 / (2 * sy**2))
        g = g + noise * rng.standard_normal(g.shape) * np.abs(g).max()
        g -= g.mean()
        out.append(g / np.linalg.norm(g))
    return out


def dominant_orientation(values: np.ndarray) -> float:
    """Edge-axis direction (radians, mod pi) in (u, v) = (col, row) coordinates.

    Taken from the peak of the power spectrum: the modulation wave vector is
    perpendicular to the edge axis.
    """
    values = np.real(np.asarray(values, dtype=complex))
    n = 64
    power = np.abs(np.fft.fft2(values - values.mean(), s=(n, n))) ** 2
    power[0, 0] = 0.0
    ky, kx = np.unravel_index(int(np.argmax(power)), power.shape)
    fy = np.fft.fftfreq(n)[ky]
    fx = np.fft.fftfreq(n)[kx]
    return float(wrap_orientation(np.arctan2(fy, fx) + np.pi / 2))
