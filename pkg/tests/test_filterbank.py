import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from cortexk.filterbank import (
    DiscreteBank,
    EndstopParams,
    FeaturePoint,
    GaborBank,
    GaborParams,
    PinwheelMap,
    SpatioTemporalParams,
    c_weighted_value,
    centre_index,
    dominant_orientation,
    endstopped_response,
    endstopped_value,
    gabor_value,
    ingest_discrete_bank,
    pinwheel_restrict,
    spatiotemporal_value,
    synthetic_learned_bank,
    wrap_angle,
)

GP = GaborParams(1.0, 0.5)
coord = st.floats(-3, 3, allow_nan=False)
angle = st.floats(-np.pi, np.pi, allow_nan=False)


# --- parameters -------------------------------------------------------------


def test_params_validation():
    with pytest.raises(ValueError):
        GaborParams(0.0, 0.5)
    with pytest.raises(ValueError):
        GaborParams(1.0, -1.0)
    with pytest.raises(ValueError):
        SpatioTemporalParams(beta=0.0)
    with pytest.raises(ValueError):
        FeaturePoint(C=1.5)


@given(angle)
def test_theta_is_wrapped(theta):
    p = FeaturePoint(0, 0, theta + 4 * np.pi)
    assert -np.pi < p.theta <= np.pi
    assert np.isclose(np.exp(1j * p.theta), np.exp(1j * theta))


def test_wrap_angle_closed_end():
    assert wrap_angle(-np.pi) == pytest.approx(np.pi)
    assert wrap_angle(np.pi) == pytest.approx(np.pi)


# --- Gabor ------------------------------------------------------------------


def test_gabor_at_centre():
    assert gabor_value(GP, FeaturePoint(0, 0, 0), 0.0, 0.0) == 1 + 0j


def test_gabor_half_wavelength():
    v = gabor_value(GP, FeaturePoint(0, 0, 0), GP.lam / 2, 0.0)
    assert v.real == pytest.approx(-np.exp(-GP.lam**2 / (8 * GP.sigma**2)), abs=1e-15)
    assert abs(v.imag) < 1e-15


@given(angle, coord, coord)
def test_gabor_rotation_covariance(theta, u, v):
    c, s = np.cos(theta), np.sin(theta)
    # point rotated by -theta
    ur, vr = u * c + v * s, -u * s + v * c
    a = gabor_value(GP, FeaturePoint(0, 0, theta), u, v)
    b = gabor_value(GP, FeaturePoint(0, 0, 0), ur, vr)
    assert a == pytest.approx(b, abs=1e-12)


@given(coord, coord, angle, coord, coord)
def test_gabor_translation_covariance(x, y, theta, u, v):
    a = gabor_value(GP, FeaturePoint(x, y, theta), u, v)
    b = gabor_value(GP, FeaturePoint(0, 0, theta), u - x, v - y)
    assert a == pytest.approx(b, abs=1e-12)


@given(coord, coord, angle, coord, coord)
def test_gabor_modulus_at_most_one(x, y, theta, u, v):
    assert abs(gabor_value(GP, FeaturePoint(x, y, theta), u, v)) <= 1.0 + 1e-15


@pytest.mark.parametrize("x,y,theta", [(0, 0, 0), (0.3, -1.2, 2.0), (-2, 1, -1)])
def test_gabor_norm_by_adaptive_quadrature(x, y, theta):
    # independent oracle: scipy's adaptive cubature of |psi|^2
    p = FeaturePoint(x, y, theta)
    r = 6 * GP.sigma
    val, _ = integrate.dblquad(lambda v, u: abs(gabor_value(GP, p, u, v)) ** 2,
                               x - r, x + r, y - r, y + r, epsabs=1e-10)
    assert val == pytest.approx(GP.sigma**2 * np.pi, rel=1e-6)


def test_anisotropic_norm():
    g = GaborParams(1.0, 0.5, 1.2)
    assert g.eta == pytest.approx(np.pi * 0.5 * 1.2)
    _, a = GaborBank(g).samples(FeaturePoint(0, 0, 0.4), (0.02, 0.02))
    assert np.sum(np.abs(a) ** 2) * 0.02**2 == pytest.approx(g.eta, rel=1e-6)


# --- endstopped ---------------------------------------------------------------


def test_endstop_validation():
    with pytest.raises(ValueError):
        EndstopParams(1.0, 1.0)
    with pytest.raises(ValueError):
        EndstopParams(1.0, 0.0)


def test_endstop_centre_value():
    ep = EndstopParams(2.0, 1.0, GaborParams(1, 0.3), GaborParams(1, 0.6))
    assert endstopped_value(ep, FeaturePoint(0.5, 0.5, 1.0), 0.5, 0.5) == pytest.approx(1.0)


def test_endstop_small_cl_limit():
    short, long = GaborParams(1, 0.5, 0.5), GaborParams(1, 0.5, 1.0)
    p = FeaturePoint(0, 0, 0.3)
    target = gabor_value(short, p, 0.2, 0.4)
    errs = [abs(endstopped_value(EndstopParams(1.0, cl, short, long), p, 0.2, 0.4) - target)
            for cl in (1e-1, 1e-3, 1e-6)]
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-6


def test_endstopped_response_cases():
    ep = EndstopParams(2.0, 1.0)
    assert endstopped_response(ep, 0.0, 0.0) == 0.0
    assert endstopped_response(ep, -5.0, 3.0) == 0.0


@given(st.floats(0, 10), st.floats(0, 10))
def test_endstopped_response_linear_when_nonnegative(rs, rl):
    ep = EndstopParams(2.0, 1.0)
    assert endstopped_response(ep, rs, rl) == pytest.approx(max(2 * rs - rl, 0.0))


# --- spatiotemporal -------------------------------------------------------------

SP = SpatioTemporalParams(1.0, 0.5, 0.8)


def test_spatiotemporal_at_peak():
    p = FeaturePoint(0.3, -0.2, 0.7, t=1.0, alpha=0.4)
    assert spatiotemporal_value(SP, p, 0.3, -0.2, 1.0) == pytest.approx(1 + 0j)


@given(coord, coord, angle, st.floats(-2, 2), coord, coord, st.floats(-3, 3))
def test_spatiotemporal_static_factorizes(x, y, th, t, u, v, s):
    # the temporal profile carries the conjugate spatial carrier exp(-2 pi i X / lambda)
    p = FeaturePoint(x, y, th, t=t, alpha=0.0)
    expected = np.conj(gabor_value(SP.spatial, p, u, v)) * np.exp(-(s - t) ** 2 / (2 * SP.beta**2))
    assert spatiotemporal_value(SP, p, u, v, s) == pytest.approx(expected, abs=1e-12)


def test_spatiotemporal_one_temporal_scale():
    p = FeaturePoint(0, 0, 0, t=0.5, alpha=1.3)
    a = abs(spatiotemporal_value(SP, p, 0.1, 0.2, 0.5))
    b = abs(spatiotemporal_value(SP, p, 0.1, 0.2, 0.5 + SP.beta))
    assert b / a == pytest.approx(np.exp(-0.5))


def test_c_weighted_extremes_and_validation():
    base = FeaturePoint(0.1, 0.2, 0.3, t=0.0, alpha=0.7)
    u, v, s = 0.2, -0.1, 0.4
    plus = spatiotemporal_value(SP, base, u, v, s)
    minus = spatiotemporal_value(SP, base.replace(alpha=-0.7), u, v, s)
    assert c_weighted_value(SP, base.replace(C=1.0), u, v, s) == pytest.approx(plus)
    assert c_weighted_value(SP, base.replace(C=0.0), u, v, s) == pytest.approx(minus)
    with pytest.raises(ValueError):
        base.replace(C=-0.1)
    with pytest.raises(ValueError):
        c_weighted_value(SP, base.replace(alpha=-0.7, C=0.5), u, v, s)


def test_c_half_is_temporally_separable():
    # with C=1/2 the temporal modulation is cos(2 pi alpha tau): even in tau and
    # the ratio to the static profile is real
    p = FeaturePoint(0, 0, 0.4, t=1.0, alpha=0.9, C=0.5)
    static = p.replace(alpha=0.0, C=None)
    tau = np.linspace(-2, 2, 41)
    u, v = 0.13, -0.07
    vals = c_weighted_value(SP, p, u, v, 1.0 + tau)
    ratio = vals / spatiotemporal_value(SP, static, u, v, 1.0 + tau)
    assert np.max(np.abs(ratio.imag)) < 1e-12
    assert np.allclose(ratio.real, np.cos(2 * np.pi * 0.9 * tau))
    assert np.allclose(vals, vals[::-1] * np.exp(0))  # even symmetry in s - t


# --- learned banks ----------------------------------------------------------------


def test_ingest_synthetic_bank_shape():
    raw = synthetic_learned_bank(128, 16, seed=0)
    bank = ingest_discrete_bank(raw, pad=5, crop=11)
    assert len(bank) == 128
    assert all(f.values.shape == (11, 11) for f in bank)


def test_ingest_delta_lands_at_centre():
    raw = np.zeros((16, 16))
    raw[3, 12] = 1.0
    (f,) = ingest_discrete_bank([raw], 5, 11)
    assert f.values[5, 5] == 1.0 and np.count_nonzero(f.values) == 1
    assert f.center == (3, 12)


@pytest.mark.parametrize("corner", [(0, 0), (0, 15), (15, 0), (15, 15)])
def test_ingest_corner_max_stays_in_bounds(corner):
    raw = np.random.default_rng(0).uniform(-0.5, 0.5, (16, 16))
    raw[corner] = 3.0
    (f,) = ingest_discrete_bank([raw], 5, 11)
    assert f.values[5, 5] == 3.0
    # the 11x11 window lies inside the 26x26 padded array: every raw pixel within
    # reach of the corner survives
    r, c = corner
    for dr in range(-5, 6):
        for dc in range(-5, 6):
            rr, cc = r + dr, c + dc
            expect = raw[rr, cc] if 0 <= rr < 16 and 0 <= cc < 16 else 0.0
            assert f.values[5 + dr, 5 + dc] == expect


def test_ingest_errors():
    with pytest.raises(ValueError):
        ingest_discrete_bank([np.zeros((16, 16))], 5, 10)
    with pytest.raises(ValueError):
        ingest_discrete_bank([], 5, 11)
    with pytest.raises(ValueError):
        ingest_discrete_bank([np.zeros((16, 16)), np.zeros((15, 16))], 5, 11)


def test_ingest_idempotent():
    bank = ingest_discrete_bank(synthetic_learned_bank(16, 16, seed=3), 5, 11)
    again = ingest_discrete_bank([f.values for f in bank], 0, 11)
    for a, b in zip(bank, again):
        assert np.array_equal(a.values, b.values)


def test_centre_rules():
    real = np.array([[1.0, -5.0], [1.0, 0.5]])
    assert centre_index(real) == (0, 0)  # signed maximum, first in row-major order
    cplx = np.array([[1.0, -5.0j], [1.0, 0.5]])
    assert centre_index(cplx) == (0, 1)  # modulus maximum
    cm = ingest_discrete_bank([np.array([[0.0, 2.0j], [0.0, 1.0]])], 1, 3)[0]
    assert abs(cm.values[1, 1]) == np.abs(cm.values).max()


def test_discrete_filter_is_read_only():
    (f,) = ingest_discrete_bank([np.eye(5)], 0, 3)
    with pytest.raises(ValueError):
        f.values[0, 0] = 2.0


def test_synthetic_bank_seeded_and_normalized():
    a = synthetic_learned_bank(8, 16, seed=5)
    b = synthetic_learned_bank(8, 16, seed=5)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert all(np.isclose(np.linalg.norm(x), 1.0) for x in a)
    assert all(abs(x.mean()) < 1e-12 for x in a)


@pytest.mark.parametrize("theta", [0.0, 0.5, 1.2, -0.8])
def test_dominant_orientation_of_gabor_patch(theta):
    yy, xx = np.mgrid[0:21, 0:21] - 10.0
    X = xx * np.cos(theta) + yy * np.sin(theta)
    Y = -xx * np.sin(theta) + yy * np.cos(theta)
    img = np.cos(2 * np.pi * X / 5) * np.exp(-X**2 / 8 - Y**2 / 50)
    edge = theta + np.pi / 2
    d = np.mod(dominant_orientation(img) - edge, np.pi)
    assert min(d, np.pi - d) < np.radians(4)


def test_discrete_bank_samples_lattice():
    bank = DiscreteBank(ingest_discrete_bank(synthetic_learned_bank(4, 16, 0), 5, 11))
    off, arr = bank.samples(FeaturePoint(3.0, -2.0, f=1))
    assert off == (-2 - 5, 3 - 5)
    assert np.array_equal(arr, bank.stack[1])
    with pytest.raises(ValueError):
        bank.samples(FeaturePoint(0.5, 0.0, f=0))


# --- pinwheel restriction -------------------------------------------------------


def test_pinwheel_restrict_constant_map():
    xs = ys = np.linspace(-1, 1, 5)
    pm = PinwheelMap(xs, ys, np.full((5, 5), 0.7))
    sub = pinwheel_restrict(GaborBank(GP), pm)
    for x in xs:
        assert sub.full_point(x, 0.5).theta == pytest.approx(0.7)


def test_pinwheel_restrict_pointwise():
    xs = ys = np.linspace(-1, 1, 5)
    theta = np.random.default_rng(0).uniform(-1.5, 1.5, (5, 5))
    pm = PinwheelMap(xs, ys, theta)
    sub = pinwheel_restrict(GaborBank(GP), pm)
    h = (0.05, 0.05)
    off, a = sub.samples(FeaturePoint(0.5, -1.0), h)
    off2, b = GaborBank(GP).samples(FeaturePoint(0.5, -1.0, theta[0, 3]), h)
    assert off == off2 and np.array_equal(a, b)


def test_pinwheel_restrict_grid_mismatch():
    bank = DiscreteBank(ingest_discrete_bank(synthetic_learned_bank(2, 16, 0), 5, 11))
    pm = PinwheelMap(np.array([0.0, 0.5]), np.array([0.0, 1.0]), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        pinwheel_restrict(bank, pm)
    with pytest.raises(ValueError):
        PinwheelMap(np.zeros(3), np.zeros(2), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        PinwheelMap(np.arange(3.0), np.arange(3.0), np.zeros((3, 3))).theta_at(0.5, 0.0)
