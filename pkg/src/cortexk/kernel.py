"""Generating kernel, kernel distance, patches and closed forms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filterbank import (
    DiscreteBank,
    EndstopParams,
    FeaturePoint,
    GaborParams,
    PinwheelMap,
    SpatioTemporalBank,
    SpatioTemporalParams,
)


@dataclass(frozen=True)
class PatchSpec:
    lam: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"patch width must be positive, got {self.lam}")


# ---------------------------------------------------------------------------
# numeric kernel


def _overlap(offsets_a, a, offsets_b, b):
    """Slices of ``a`` and ``b`` covering their common lattice window."""
    sl_a, sl_b = [], []
    for oa, ob, na, nb in zip(offsets_a, offsets_b, a.shape, b.shape):
        lo = max(oa, ob)
        hi = min(oa + na, ob + nb)
        if hi <= lo:
            return None
        sl_a.append(slice(lo - oa, hi - oa))
        sl_b.append(slice(lo - ob, hi - ob))
    return tuple(sl_a), tuple(sl_b)


def inner_product(bank, p: FeaturePoint, q: FeaturePoint, steps=None) -> complex:
    """Riemann sum of ``psi_p * conj(psi_q)`` on the lattice with the given steps."""
    steps = tuple(bank.default_steps() if steps is None else steps)
    if len(steps) != bank.ndim:
        raise ValueError(f"bank is {bank.ndim}-dimensional, got {len(steps)} sampling steps")
    oa, a = bank.samples(p, steps)
    ob, b = bank.samples(q, steps)
    sl = _overlap(oa, a, ob, b)
    if sl is None:
        return 0j
    return complex(np.sum(a[sl[0]] * np.conj(b[sl[1]])) * np.prod(steps))


def kernel_numeric(bank, p: FeaturePoint, q: FeaturePoint, steps=None) -> float:
    """Generating kernel by quadrature: real part of the sampled L2 product."""
    return inner_product(bank, p, q, steps).real


def energy_terms(bank, p: FeaturePoint, steps=None) -> tuple:
    """Squared L2 norms of the real and imaginary parts of ``psi_p``."""
    steps = tuple(bank.default_steps() if steps is None else steps)
    _, a = bank.samples(p, steps)
    w = np.prod(steps)
    return float(np.sum(a.real**2) * w), float(np.sum(a.imag**2) * w)


def l2_distance_sq(bank, p: FeaturePoint, q: FeaturePoint, steps=None) -> float:
    """Direct quadrature of ``||psi_p - psi_q||^2``."""
    steps = tuple(bank.default_steps() if steps is None else steps)
    oa, a = bank.samples(p, steps)
    ob, b = bank.samples(q, steps)
    lo = [min(x, y) for x, y in zip(oa, ob)]
    hi = [max(x + n, y + m) for x, y, n, m in zip(oa, ob, a.shape, b.shape)]
    diff = np.zeros([h - l for l, h in zip(lo, hi)], dtype=complex)
    diff[tuple(slice(x - l, x - l + n) for x, l, n in zip(oa, lo, a.shape))] += a
    diff[tuple(slice(x - l, x - l + n) for x, l, n in zip(ob, lo, b.shape))] -= b
    return float(np.sum(np.abs(diff) ** 2) * np.prod(steps))


def discrete_correlation_table(bank: DiscreteBank, delta_weighted: bool = True) -> np.ndarray:
    """``table[f, g, dy, dx] = K((x + dx, y + dy, f), (x, y, g))`` for a learned bank.

    Shifts run over ``-(h-1)..(h-1)`` (index ``dy + h - 1``), the full overlap
    range of two ``h x w`` supports.
    """
    h, w = bank.shape
    H, W = 2 * h - 1, 2 * w - 1
    stack = bank.stack
    F = np.fft.fft2(stack, s=(H, W))
    table = np.empty((len(bank), len(bank), H, W))
    for g in range(len(bank)):
        # corr[d] = sum_z psi_f(z - d) conj(psi_g(z)), via conj(FFT(psi_g)) * FFT(psi_f) flipped
        c = np.fft.ifft2(np.conj(F[g])[None] * F, s=(H, W))
        c = np.roll(np.roll(c, h - 1, axis=-2), w - 1, axis=-1)
        table[:, g] = np.real(c[:, ::-1, ::-1])
    if delta_weighted:
        table *= bank.delta**2
    return table


# ---------------------------------------------------------------------------
# Gabor closed forms


def relative_pose(x, y, theta, x0, y0, theta0):
    """Coordinates of ``(x, y, theta)`` in the frame of ``(x0, y0, theta0)``.

    Translate by ``-(x0, y0)``, then rotate by ``-theta0``; orientation
    difference is returned unwrapped (all uses are 2 pi periodic).
    """
    c, s = np.cos(theta0), np.sin(theta0)
    dx, dy = np.subtract(x, x0), np.subtract(y, y0)
    return dx * c + dy * s, -dx * s + dy * c, np.subtract(theta, theta0)


def gabor_kernel_relative(gp: GaborParams, a, b, d):
    """Closed-form isotropic Gabor kernel ``K((a, b, d), (0, 0, 0))``; broadcasts."""
    if gp.length is not None and gp.length != gp.sigma:
        raise ValueError("closed form requires an isotropic Gabor; use gabor_pair_kernel")
    s2, lam = gp.sigma**2, gp.lam
    cd, sd = np.cos(d), np.sin(d)
    env = np.exp(-(np.square(a) + np.square(b)) / (4 * s2) - 2 * s2 * np.pi**2 * (1 - cd) / lam**2)
    return s2 * np.pi * env * np.cos(np.pi * (a * (1 + cd) + b * sd) / lam)


def kernel_gabor_analytic(gp: GaborParams, p: FeaturePoint) -> float:
    return float(gabor_kernel_relative(gp, p.x, p.y, p.theta))


def gabor_kernel(gp: GaborParams, x, y, theta, x0, y0, theta0):
    """``K((x, y, theta), (x0, y0, theta0))`` for arrays, via the group shift."""
    return gabor_kernel_relative(gp, *relative_pose(x, y, theta, x0, y0, theta0))


def kernel_gabor_shifted(gp: GaborParams, p: FeaturePoint, p0: FeaturePoint) -> float:
    return float(gabor_kernel(gp, p.x, p.y, p.theta, p0.x, p0.y, p0.theta))


def _precision(gp: GaborParams, theta):
    """Entries of ``e e^T / sigma^2 + e_perp e_perp^T / ell^2`` with ``e = (cos, sin)``."""
    c, s = np.cos(theta), np.sin(theta)
    i1, i2 = 1 / gp.sigma**2, 1 / gp.ell**2
    return c * c * i1 + s * s * i2, c * s * (i1 - i2), s * s * i1 + c * c * i2


def gabor_pair_inner(g1: GaborParams, x1, y1, t1, g2: GaborParams, x2, y2, t2):
    """Exact ``<psi1, psi2>`` for two (possibly anisotropic) Gabors; broadcasts.

    Gaussian integral of ``exp(-z^T A z / 2 + b^T z + c)`` with complex ``b``.
    """
    a1, b1, c1 = _precision(g1, t1)
    a2, b2, c2 = _precision(g2, t2)
    A11, A12, A22 = a1 + a2, b1 + b2, c1 + c2
    det = A11 * A22 - A12**2
    k1x, k1y = 2 * np.pi / g1.lam * np.cos(t1), 2 * np.pi / g1.lam * np.sin(t1)
    k2x, k2y = 2 * np.pi / g2.lam * np.cos(t2), 2 * np.pi / g2.lam * np.sin(t2)
    bx = a1 * x1 + b1 * y1 + a2 * x2 + b2 * y2 + 1j * (k1x - k2x)
    by = b1 * x1 + c1 * y1 + b2 * x2 + c2 * y2 + 1j * (k1y - k2y)
    quad = (A22 * bx * bx - 2 * A12 * bx * by + A11 * by * by) / det
    c0 = (-0.5 * (a1 * x1 * x1 + 2 * b1 * x1 * y1 + c1 * y1 * y1
                  + a2 * x2 * x2 + 2 * b2 * x2 * y2 + c2 * y2 * y2)
          - 1j * (k1x * x1 + k1y * y1) + 1j * (k2x * x2 + k2y * y2))
    return 2 * np.pi / np.sqrt(det) * np.exp(0.5 * quad + c0)


def gabor_pair_kernel(g1, p: FeaturePoint, g2, q: FeaturePoint) -> float:
    return float(np.real(gabor_pair_inner(g1, p.x, p.y, p.theta, g2, q.x, q.y, q.theta)))


def endstop_kernel(ep: EndstopParams, x, y, theta, x0, y0, theta0):
    """Generating kernel of an endstopped bank, bilinear in the two components."""
    out = 0.0
    for w1, g1 in ((ep.cS, ep.short), (-ep.cL, ep.long)):
        for w2, g2 in ((ep.cS, ep.short), (-ep.cL, ep.long)):
            out = out + w1 * w2 * gabor_pair_inner(g1, x, y, theta, g2, x0, y0, theta0)
    return np.real(out)


# ---------------------------------------------------------------------------
# distance and patches


def kernel_distance(eta: float, k, rtol: float = 1e-9):
    """``sqrt(2 (eta - K))``; rejects kernel values above the common norm."""
    k = np.asarray(k, dtype=float)
    if np.any(k > eta * (1 + rtol) + rtol):
        raise ValueError(f"kernel value exceeds eta={eta}: filters are not normalized")
    out = np.sqrt(2.0 * np.maximum(eta - k, 0.0))
    return float(out) if out.ndim == 0 else out


def patch_mask(ps: PatchSpec, x, y, theta, x0, y0, theta0):
    """Vectorized patch membership of ``(x, y, theta)`` in the patch of ``(x0, y0, theta0)``."""
    a, b, d = relative_pose(x, y, theta, x0, y0, theta0)
    return np.abs(a * (1 + np.cos(d)) + b * np.sin(d)) < ps.lam


def patch_contains(ps: PatchSpec, p: FeaturePoint, p0: FeaturePoint) -> bool:
    return bool(patch_mask(ps, p.x, p.y, p.theta, p0.x, p0.y, p0.theta))


def truncate_kernel(field, ps: PatchSpec, floor_clip: bool = False):
    """Zero a field outside the patch of its origin.

    With ``floor_clip`` the in-patch values are also clipped from below at
    their minimum over the patch, so outside values equal that minimum
    instead of zero.
    """
    pts = field.grid.coords()
    x0, y0, t0 = field.origin[:3]
    inside = patch_mask(ps, pts["x"], pts["y"], pts["theta"], x0, y0, t0)
    values = np.where(inside, field.values, 0.0)
    if floor_clip and inside.any():
        values = np.where(inside, field.values, field.values[inside].min())
    return field.with_values(values, truncated=ps.lam)


# ---------------------------------------------------------------------------
# spatiotemporal and pinwheel kernels


def temporal_factor(sp: SpatioTemporalParams, dalpha):
    """Time integral of the product of two equal-peak-time temporal profiles.

    ``int exp(-tau^2 / beta^2 - 2 pi i dalpha tau) dtau``.
    """
    return sp.beta * np.sqrt(np.pi) * np.exp(-(np.pi * sp.beta * np.asarray(dalpha)) ** 2)


def kernel_spatiotemporal(sp: SpatioTemporalParams, p: FeaturePoint, p0: FeaturePoint) -> float:
    if p.t is None or p0.t is None or p.alpha is None or p0.alpha is None:
        raise ValueError("spatiotemporal kernel needs t and alpha on both points")
    if p.t != p0.t:
        # the factorization needs equal peak times; integrate the 3D profiles instead
        return kernel_numeric(SpatioTemporalBank(sp), p, p0)
    spatial = kernel_gabor_shifted(sp.spatial, p, p0)
    return float(spatial * temporal_factor(sp, p.alpha - p0.alpha))


def spatiotemporal_kernel(sp: SpatioTemporalParams, x, y, theta, alpha, x0, y0, theta0, alpha0):
    """Array form of the factorized kernel at equal peak times."""
    return gabor_kernel(sp.spatial, x, y, theta, x0, y0, theta0) * temporal_factor(sp, np.subtract(alpha, alpha0))


def kernel_c_family(sp: SpatioTemporalParams, q: FeaturePoint, q0: FeaturePoint) -> float:
    """Kernel of C-weighted profiles from the four inseparable cross terms."""
    if q.C is None or q0.C is None:
        raise ValueError("both points need a separability index C")
    plus, minus = q.replace(C=None), q.replace(C=None, alpha=-q.alpha)
    plus0, minus0 = q0.replace(C=None), q0.replace(C=None, alpha=-q0.alpha)
    C, C0 = q.C, q0.C
    return (C * C0 * kernel_spatiotemporal(sp, plus, plus0)
            + C * (1 - C0) * kernel_spatiotemporal(sp, plus, minus0)
            + (1 - C) * C0 * kernel_spatiotemporal(sp, minus, plus0)
            + (1 - C) * (1 - C0) * kernel_spatiotemporal(sp, minus, minus0))


def kernel_pinwheel(pmap: PinwheelMap, gp: GaborParams, xy, xy0) -> float:
    th = pmap.theta_at(*xy)
    th0 = pmap.theta_at(*xy0)
    return float(gabor_kernel(gp, xy[0], xy[1], th, xy0[0], xy0[1], th0))
