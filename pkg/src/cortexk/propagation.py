"""Normalized transition operator, iterated kernels and image evolution."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import fft as sfft
from scipy.spatial import cKDTree

from .filterbank import (
    DiscreteBank,
    EndstopParams,
    GaborParams,
    PinwheelMap,
    SpatioTemporalParams,
    WINDOW_SCALES,
    gabor_array,
)
from .geometry import Axis, FeatureGrid
from .kernel import (
    PatchSpec,
    discrete_correlation_table,
    endstop_kernel,
    gabor_kernel,
    gabor_pair_inner,
    patch_mask,
    spatiotemporal_kernel,
)

# Largest grid materialized as a dense operator table.
DENSE_LIMIT = 4000


class DegenerateKernelError(ValueError):
    """A normalization integral of the rectified kernel vanished."""


@dataclass(frozen=True)
class Nonlinearity:
    kind: str = "rectifier"
    tau: float = 0.0

    def __post_init__(self):
        if self.kind not in ("rectifier", "logistic", "identity"):
            raise ValueError(f"unknown nonlinearity {self.kind!r}")
        if self.tau < 0:
            raise ValueError("threshold tau must be nonnegative")

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "rectifier":
            return np.maximum(z - self.tau, 0.0)
        if self.kind == "logistic":
            return 0.5 * (1.0 + np.tanh(0.5 * z))
        return z


@dataclass(frozen=True)
class KernelField:
    grid: FeatureGrid
    values: np.ndarray
    origin: tuple
    n: int = 0
    init: str = "raw"
    nonlinearity: str = ""
    truncated: Optional[float] = None

    def with_values(self, values, **changes) -> "KernelField":
        return replace(self, values=np.asarray(values, dtype=float).reshape(self.grid.shape), **changes)

    def integral(self) -> float:
        return float(np.sum(self.values * self.grid.weights))

    def l1(self) -> float:
        return float(np.sum(np.abs(self.values) * self.grid.weights))


@dataclass(frozen=True)
class Activation:
    grid: FeatureGrid
    values: np.ndarray
    n: int = 0

    def integral(self) -> float:
        return float(np.sum(self.values * self.grid.weights))


# ---------------------------------------------------------------------------
# kernels on grids
#
# A grid kernel is called with two dicts of broadcastable coordinate arrays
# keyed by axis name and returns K(P, Q).  ``shift_invariant`` kernels depend
# on the spatial coordinates only through x_P - x_Q and y_P - y_Q.


class GaborGridKernel:
    shift_invariant = True

    def __init__(self, gp: GaborParams = GaborParams(), patch: Optional[PatchSpec] = None):
        self.gp = gp
        self.patch = patch

    def __call__(self, P, Q):
        if self.gp.ell == self.gp.sigma:
            k = gabor_kernel(self.gp, P["x"], P["y"], P["theta"], Q["x"], Q["y"], Q["theta"])
        else:
            k = np.real(gabor_pair_inner(self.gp, P["x"], P["y"], P["theta"],
                                         self.gp, Q["x"], Q["y"], Q["theta"]))
        if self.patch is not None:
            k = np.where(patch_mask(self.patch, P["x"], P["y"], P["theta"], Q["x"], Q["y"], Q["theta"]), k, 0.0)
        return k

    def support_radius(self, rtol: float = 1e-14) -> float:
        return 2 * max(self.gp.sigma, self.gp.ell) * math.sqrt(math.log(1 / rtol))


class EndstopGridKernel:
    shift_invariant = True

    def __init__(self, ep: EndstopParams, patch: Optional[PatchSpec] = None):
        self.ep = ep
        self.patch = patch

    def __call__(self, P, Q):
        k = endstop_kernel(self.ep, P["x"], P["y"], P["theta"], Q["x"], Q["y"], Q["theta"])
        if self.patch is not None:
            k = np.where(patch_mask(self.patch, P["x"], P["y"], P["theta"], Q["x"], Q["y"], Q["theta"]), k, 0.0)
        return k

    def support_radius(self, rtol: float = 1e-14) -> float:
        s = max(self.ep.long.sigma, self.ep.long.ell)
        return 2 * s * math.sqrt(math.log(1 / rtol))


class SpatioTemporalGridKernel:
    shift_invariant = True

    def __init__(self, sp: SpatioTemporalParams):
        self.sp = sp

    def __call__(self, P, Q):
        return spatiotemporal_kernel(self.sp, P["x"], P["y"], P["theta"], P["alpha"],
                                     Q["x"], Q["y"], Q["theta"], Q["alpha"])

    def support_radius(self, rtol: float = 1e-14) -> float:
        return 2 * self.sp.sigma * math.sqrt(math.log(1 / rtol))


class DiscreteGridKernel:
    """Kernel of a learned bank over positions (lattice units of ``delta``) and index ``f``."""

    shift_invariant = True

    def __init__(self, bank: DiscreteBank):
        self.bank = bank
        self.table = discrete_correlation_table(bank)
        self.h, self.w = bank.shape

    def __call__(self, P, Q):
        d = self.bank.delta
        dx = np.rint((np.asarray(P["x"]) - Q["x"]) / d).astype(int)
        dy = np.rint((np.asarray(P["y"]) - Q["y"]) / d).astype(int)
        f = np.asarray(P["f"]).astype(int)
        g = np.asarray(Q["f"]).astype(int)
        dx, dy, f, g = np.broadcast_arrays(dx, dy, f, g)
        inside = (np.abs(dx) < self.w) & (np.abs(dy) < self.h)
        out = np.zeros(dx.shape)
        out[inside] = self.table[f[inside], g[inside], dy[inside] + self.h - 1, dx[inside] + self.w - 1]
        return out

    def support_radius(self, rtol: float = 0.0) -> float:
        return max(self.h, self.w) * self.bank.delta


class PinwheelGridKernel:
    """2D kernel of the sub-bank selected by an orientation map (grid axes y, x of the map)."""

    shift_invariant = False

    def __init__(self, pmap: PinwheelMap, gp: GaborParams = GaborParams(), patch: Optional[PatchSpec] = None):
        self.map = pmap
        self.gp = gp
        self.patch = patch

    def theta(self, x, y):
        ix = np.rint((np.asarray(x) - self.map.xs[0]) / (self.map.xs[1] - self.map.xs[0])).astype(int)
        iy = np.rint((np.asarray(y) - self.map.ys[0]) / (self.map.ys[1] - self.map.ys[0])).astype(int)
        return self.map.theta[iy, ix]

    def __call__(self, P, Q):
        tp, tq = self.theta(P["x"], P["y"]), self.theta(Q["x"], Q["y"])
        k = gabor_kernel(self.gp, P["x"], P["y"], tp, Q["x"], Q["y"], tq)
        if self.patch is not None:
            k = np.where(patch_mask(self.patch, P["x"], P["y"], tp, Q["x"], Q["y"], tq), k, 0.0)
        return k

    def support_radius(self, rtol: float = 1e-14) -> float:
        return 2 * self.gp.sigma * math.sqrt(math.log(1 / rtol))


def kernel_field(kernel, grid: FeatureGrid, origin: dict) -> KernelField:
    """``K(., p0)`` sampled on ``grid``."""
    coords = grid.coords()
    values = kernel(coords, {k: np.float64(v) for k, v in origin.items()})
    values = np.broadcast_to(values, grid.shape).astype(float)
    return KernelField(grid, values, tuple(origin[n] for n in grid.names))


# ---------------------------------------------------------------------------
# transition operators


def _normalizers(d_col, d_row, hk_t_apply, weights, grid):
    bad = np.flatnonzero(~(d_col > 0))
    if bad.size:
        q = grid.points()[bad[0]]
        raise DegenerateKernelError(
            f"rectified kernel integrates to zero in column q={dict(zip(grid.names, q))}")
    bad = np.flatnonzero(~(d_row > 0))
    if bad.size:
        p = grid.points()[bad[0]]
        raise DegenerateKernelError(
            f"rectified kernel integrates to zero in row p={dict(zip(grid.names, p))}")
    e = hk_t_apply(weights / d_row) / d_col
    return e


class TransitionOperator:
    """Column-stochastic ``S[K]`` under the grid measure.

    ``apply(f)`` computes ``p -> sum_q S(p, q) f(q) mu(q)``.
    """

    grid: FeatureGrid

    @property
    def weights(self) -> np.ndarray:
        return self.grid.weights.ravel()

    def _hk(self, v):
        raise NotImplementedError

    def _hk_t(self, v):
        raise NotImplementedError

    def _setup(self):
        w = self.weights
        self.d_row = self._hk(w)
        self.d_col = self._hk_t(w)
        self.e = _normalizers(self.d_col, self.d_row, self._hk_t, w, self.grid)

    def apply(self, f):
        f = np.asarray(f, dtype=float).ravel()
        return self._hk(f * self.weights / (self.d_col * self.e)) / self.d_row

    def apply_transpose(self, g):
        """``q -> sum_p S(p, q) g(p)``."""
        g = np.asarray(g, dtype=float).ravel()
        return self._hk_t(g / self.d_row) / (self.d_col * self.e)

    def column(self, j: int) -> np.ndarray:
        e = np.zeros(self.grid.size)
        e[j] = 1.0 / self.weights[j]
        return self.apply(e)

    def column_integrals(self) -> np.ndarray:
        return self.apply_transpose(self.weights)


class DenseTransition(TransitionOperator):
    def __init__(self, kernel, grid: FeatureGrid, h: Nonlinearity = Nonlinearity()):
        self.grid = grid
        pts = grid.coords()
        flat = {k: v.ravel() for k, v in pts.items()}
        P = {k: v[:, None] for k, v in flat.items()}
        Q = {k: v[None, :] for k, v in flat.items()}
        self.hk = h(kernel(P, Q))
        self._setup()
        w = self.weights
        self.matrix = self.hk / np.outer(self.d_row, self.d_col * self.e)

    def _hk(self, v):
        return self.hk @ v

    def _hk_t(self, v):
        return self.hk.T @ v

    def apply(self, f):
        return self.matrix @ (np.asarray(f, dtype=float).ravel() * self.weights)

    def column(self, j):
        return self.matrix[:, j].copy()

    def column_integrals(self):
        return self.weights @ self.matrix


class SparseTransition(TransitionOperator):
    """Operator on pairs whose spatial separation is below the kernel's support radius."""

    def __init__(self, kernel, grid: FeatureGrid, h: Nonlinearity = Nonlinearity(),
                 radius: Optional[float] = None, chunk: int = 2_000_000):
        from scipy.sparse import csr_matrix

        if h.kind != "rectifier":
            raise ValueError("sparse realization needs h(0) = 0 (rectifier)")
        self.grid = grid
        radius = kernel.support_radius() if radius is None else radius
        pts = grid.coords()
        flat = {k: v.ravel() for k, v in pts.items()}
        xy = np.stack([flat["x"], flat["y"]], axis=1)
        tree = cKDTree(xy)
        pairs = tree.query_pairs(radius, output_type="ndarray")
        n = grid.size
        i = np.concatenate([np.arange(n), pairs[:, 0], pairs[:, 1]])
        j = np.concatenate([np.arange(n), pairs[:, 1], pairs[:, 0]])
        rows, cols, vals = [], [], []
        for s in range(0, len(i), chunk):
            ii, jj = i[s:s + chunk], j[s:s + chunk]
            v = h(kernel({k: a[ii] for k, a in flat.items()}, {k: a[jj] for k, a in flat.items()}))
            keep = v != 0
            rows.append(ii[keep])
            cols.append(jj[keep])
            vals.append(v[keep])
        self.hk = csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
        self.hk_t = self.hk.T.tocsr()
        self._setup()

    def _hk(self, v):
        return self.hk @ v

    def _hk_t(self, v):
        return self.hk_t @ v


class ConvTransition(TransitionOperator):
    """Operator for shift-invariant kernels, applied as FFT convolutions over (x, y).

    Every pair of feature samples (the non-spatial axes) gets its own
    convolution table; the feature axes are mixed in the Fourier domain.
    """

    def __init__(self, kernel, grid: FeatureGrid, h: Nonlinearity = Nonlinearity()):
        if not getattr(kernel, "shift_invariant", False):
            raise ValueError("kernel is not translation invariant")
        self.grid = grid
        ix, iy = grid.axis_index("x"), grid.axis_index("y")
        ax, ay = grid.axes[ix], grid.axes[iy]
        self.feature_axes = [k for k in range(len(grid.axes)) if k not in (ix, iy)]
        self.perm = [ix, iy] + self.feature_axes
        nx, ny = ax.count, ay.count
        fshape = tuple(grid.axes[k].count for k in self.feature_axes)
        nf = int(np.prod(fshape)) if fshape else 1
        self.nx, self.ny, self.nf = nx, ny, nf
        fcoords = np.meshgrid(*[grid.axes[k].values for k in self.feature_axes], indexing="ij")
        fnames = [grid.axes[k].name for k in self.feature_axes]
        feats = {n: c.ravel() for n, c in zip(fnames, fcoords)}

        sx = ax.step * np.arange(-(nx - 1), nx)
        sy = ay.step * np.arange(-(ny - 1), ny)
        self.shape_fft = (sfft.next_fast_len(2 * nx - 1, real=True), sfft.next_fast_len(2 * ny - 1, real=True))
        tab = np.empty((nf, nf, 2 * nx - 1, 2 * ny - 1))
        for a in range(nf):
            P = {"x": sx[:, None, None], "y": sy[None, :, None]}
            P.update({n: v[a] for n, v in feats.items()})
            Q = {"x": 0.0, "y": 0.0}
            Q.update({n: v[None, None, :] for n, v in feats.items()})
            tab[a] = np.moveaxis(h(kernel(P, Q)), -1, 0)
        self.table_fft = sfft.rfft2(tab, s=self.shape_fft)
        # transpose kernel: T'[j, i](s) = T[i, j](-s)
        tab_t = np.swapaxes(tab[:, :, ::-1, ::-1], 0, 1)
        self.table_t_fft = sfft.rfft2(tab_t, s=self.shape_fft)
        self._setup()

    def _to_spatial(self, v):
        v = np.asarray(v, dtype=float).reshape(self.grid.shape)
        return np.transpose(v, self.perm).reshape(self.nx, self.ny, self.nf)

    def _from_spatial(self, out):
        inv = np.argsort(self.perm)
        shape = [self.grid.shape[k] for k in self.perm]
        return np.transpose(out.reshape(shape), inv).ravel()

    def _conv(self, v, table_fft):
        g = np.moveaxis(self._to_spatial(v), -1, 0)  # (nf, nx, ny)
        G = sfft.rfft2(g, s=self.shape_fft)
        out = np.einsum("ijab,jab->iab", table_fft, G, optimize=True)
        full = sfft.irfft2(out, s=self.shape_fft)
        res = full[:, self.nx - 1:2 * self.nx - 1, self.ny - 1:2 * self.ny - 1]
        return self._from_spatial(np.moveaxis(res, 0, -1))

    def _hk(self, v):
        return self._conv(v, self.table_fft)

    def _hk_t(self, v):
        return self._conv(v, self.table_t_fft)


def transition_operator(kernel, grid: FeatureGrid, h: Nonlinearity = Nonlinearity(), method: str = "auto"):
    """Build ``S[K]`` on ``grid``; ``method`` is dense, sparse, conv or auto."""
    if method == "auto":
        if grid.size <= DENSE_LIMIT:
            method = "dense"
        elif getattr(kernel, "shift_invariant", False) and "x" in grid.names and "y" in grid.names:
            method = "conv"
        else:
            method = "sparse"
    if method == "dense":
        return DenseTransition(kernel, grid, h)
    if method == "conv":
        return ConvTransition(kernel, grid, h)
    if method == "sparse":
        return SparseTransition(kernel, grid, h)
    raise ValueError(f"unknown operator realization {method!r}")


# ---------------------------------------------------------------------------
# iteration


def iterate_kernel(S: TransitionOperator, p0: int, n: int, init: str = "S",
                   raw: Optional[np.ndarray] = None, history: bool = False):
    """Iterated connectivity kernels ``K_1 .. K_n`` around grid point index ``p0``.

    ``init="S"`` starts from the operator column; ``init="raw"`` from the
    unnormalized kernel column ``raw`` (the field ``K(., p0)``).
    """
    if n < 1:
        raise ValueError("need at least one step")
    if init == "S":
        k = S.column(p0)
    elif init == "raw":
        if raw is None:
            raise ValueError("raw initialization needs the kernel column")
        k = np.asarray(raw, dtype=float).ravel().copy()
    else:
        raise ValueError(f"unknown initialization {init!r}")
    grid = S.grid
    origin = tuple(grid.points()[p0])
    fields = [KernelField(grid, k.reshape(grid.shape), origin, 1, init)]
    for step in range(2, n + 1):
        k = S.apply(k)
        fields.append(KernelField(grid, k.reshape(grid.shape), origin, step, init))
    return fields if history else fields[-1]


def evolve_activation(S: TransitionOperator, I: Activation, n: int, history: bool = False):
    vals = np.asarray(I.values, dtype=float).ravel()
    out = [I]
    for step in range(1, n + 1):
        vals = S.apply(vals)
        out.append(Activation(I.grid, vals.reshape(I.grid.shape), I.n + step))
    return out if history else out[-1]


def filter_responses(image: np.ndarray, gp: GaborParams, grid: FeatureGrid, delta: float,
                     origin=(0.0, 0.0)) -> np.ndarray:
    """Real part of ``sum I(u, v) psi_p(u, v) delta^2`` at every grid point.

    ``image[iy, ix]`` sits at ``(origin[0] + ix * delta, origin[1] + iy * delta)``.
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError("image must be a 2D array")
    ax, ay, at = grid.axis("x"), grid.axis("y"), grid.axis("theta")
    ix = (ax.values - origin[0]) / delta
    iy = (ay.values - origin[1]) / delta
    for k, name, n in ((ix, "x", image.shape[1]), (iy, "y", image.shape[0])):
        if np.any(np.abs(k - np.round(k)) > 1e-6):
            raise ValueError(f"grid {name}-axis is not commensurate with the image lattice")
        if k.min() < -1e-6 or k.max() > n - 1 + 1e-6:
            raise ValueError(f"grid {name}-axis leaves the image (size {n})")
    ix, iy = np.round(ix).astype(int), np.round(iy).astype(int)
    r = int(np.ceil(WINDOW_SCALES * max(gp.sigma, gp.ell) / delta))
    off = delta * np.arange(-r, r + 1)
    U, V = np.meshgrid(off, off, indexing="xy")  # [row=v, col=u]
    padded = np.pad(image, r)
    shape = (padded.shape[0] + 2 * r, padded.shape[1] + 2 * r)
    fshape = tuple(sfft.next_fast_len(s) for s in shape)
    I_hat = sfft.fft2(padded, s=fshape)
    out = np.empty((ax.count, ay.count, at.count))
    for k, th in enumerate(at.values):
        psi = np.real(gabor_array(gp, 0.0, 0.0, th, U, V))
        # correlation: resp[y, x] = sum_{v,u} I[y + v, x + u] psi[v, u]
        c = sfft.ifft2(I_hat * sfft.fft2(psi[::-1, ::-1], s=fshape)).real
        resp = c[2 * r:2 * r + image.shape[0], 2 * r:2 * r + image.shape[1]] * delta**2
        out[:, :, k] = resp[np.ix_(iy, ix)].T
    perm = [grid.names.index(n) for n in ("x", "y", "theta")]
    return np.transpose(out, np.argsort(perm))


def lift_image(image: np.ndarray, gp: GaborParams, grid: FeatureGrid, h: Nonlinearity = Nonlinearity(),
               delta: Optional[float] = None, origin=None) -> Activation:
    """Cortical activation ``h(response)`` of a Gabor bank to ``image``."""
    delta = grid.axis("x").step if delta is None else delta
    if origin is None:
        origin = (-(image.shape[1] - 1) / 2 * delta, -(image.shape[0] - 1) / 2 * delta)
    return Activation(grid, h(filter_responses(image, gp, grid, delta, origin)), 0)


# ---------------------------------------------------------------------------
# pinwheel surface


def generate_pinwheel(width: int, height: int, m: int = 30, k: float = 2 * np.pi / 5.0, seed: int = 0,
                      step: float = 0.1, orientation_range: float = np.pi, phases=None) -> PinwheelMap:
    """Orientation map from ``m`` plane waves of wavenumber ``k`` with random phases.

    The map is centred on the origin, with ``width x height`` samples.
    """
    if m < 2:
        raise ValueError("need at least two plane waves")
    if not k > 0:
        raise ValueError("wavenumber must be positive")
    xs = step * (np.arange(width) - (width - 1) / 2)
    ys = step * (np.arange(height) - (height - 1) / 2)
    if phases is None:
        phases = np.random.default_rng(seed).uniform(0.0, 2 * np.pi, m)
    phases = np.asarray(phases, dtype=float)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    z = np.zeros(X.shape, dtype=complex)
    for j in range(1, m + 1):
        a = np.pi * j / m
        z += np.exp(1j * (k * (np.cos(a) * X + np.sin(a) * Y) + phases[j - 1]))
    theta = 0.5 * np.angle(z) * (orientation_range / np.pi)
    # np.angle gives [-pi, pi]; fold the closed end onto (-pi/2, pi/2]
    half = orientation_range / 2
    theta = np.where(theta <= -half, theta + orientation_range, theta)
    return PinwheelMap(xs, ys, theta)


def pinwheel_grid(pmap: PinwheelMap) -> FeatureGrid:
    xs, ys = pmap.xs, pmap.ys
    return FeatureGrid((Axis("y", ys[0], ys[1] - ys[0], ys.size), Axis("x", xs[0], xs[1] - xs[0], xs.size)))


def propagate_pinwheel(pmap: PinwheelMap, gp: GaborParams, xy0=(0.0, 0.0), n: int = 6,
                       patch: Optional[PatchSpec] = PatchSpec(1.0), h: Nonlinearity = Nonlinearity(),
                       method: str = "auto", history: bool = False):
    """Iterated kernel on the map surface, as a field over the map's (y, x) grid."""
    grid = pinwheel_grid(pmap)
    kernel = PinwheelGridKernel(pmap, gp, patch)
    S = transition_operator(kernel, grid, h, method)
    p0 = grid.flat_index(x=xy0[0], y=xy0[1])
    return iterate_kernel(S, p0, n, history=history)


def default_step_count(rf_radius: float, growth: float, ratio: float = 2.2) -> int:
    """Fewest steps whose support reaches ``ratio`` times the receptive-field radius."""
    if not (rf_radius > 0 and growth > 0):
        raise ValueError("radius and growth must be positive")
    needed = (ratio - 1.0) * rf_radius / growth
    return max(1, math.ceil(needed - 1e-9))
