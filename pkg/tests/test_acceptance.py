"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run under pytest (the lines are repeated in the terminal summary) or
directly with ``python3 tests/test_acceptance.py``.
"""
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import chain_enumeration, flood_fill_components  # noqa: E402

from cortexk import cli  # noqa: E402
from cortexk.experiments import (  # noqa: E402
    curvature_experiment,
    gabor_kernel_field,
    gabor_propagation,
    learned_bank,
    learned_kernel_field,
    pinwheel_experiment,
    spatial_grid,
    theta_axis,
)
from cortexk.filterbank import (  # noqa: E402
    FeaturePoint,
    GaborBank,
    GaborParams,
    SpatioTemporalBank,
    SpatioTemporalParams,
    dominant_orientation,
)
from cortexk.geometry import build_patch_graph, glued_distances  # noqa: E402
from cortexk.kernel import (  # noqa: E402
    PatchSpec,
    energy_terms,
    gabor_kernel,
    kernel_c_family,
    kernel_distance,
    kernel_gabor_shifted,
    kernel_numeric,
    kernel_spatiotemporal,
    l2_distance_sq,
    patch_mask,
)
from cortexk.propagation import DiscreteGridKernel, GaborGridKernel, iterate_kernel, transition_operator  # noqa: E402
from cortexk.viz_export import (  # noqa: E402
    argmax_feature,
    axial_argmax_agreement,
    cone_mass_ratio,
    default_threshold,
    project_max,
    region_anisotropy,
    wrapped_orientation_distance,
)

GP = GaborParams(1.0, 0.5)
ETA = GP.eta
BANK = GaborBank(GP)
DELTA = GP.sigma / 20
RESULTS = {}


def record(n: int, ok: bool, detail: str):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def random_point(rng, half=0.75):
    return FeaturePoint(*rng.uniform(-half, half, 2), rng.uniform(-np.pi, np.pi))


def propagation_grid():
    # x in [-1.5, 1.5], y in [-3, 3] with step .1, theta in [-1.5, 1.5] with step .15
    return spatial_grid(1.5, 3.0, 0.1, theta_axis(1.5, 0.15))


# ---------------------------------------------------------------------------


def test_criterion_01_analytic_vs_numeric_kernel():
    rng = np.random.default_rng(101)
    t0 = time.process_time()
    worst = 0.0
    for _ in range(100):
        p, q = random_point(rng), random_point(rng)
        num = kernel_numeric(BANK, p, q, (DELTA, DELTA))
        worst = max(worst, abs(num - kernel_gabor_shifted(GP, p, q)) / ETA)
    elapsed = time.process_time() - t0
    record(1, worst < 1e-3 and elapsed < 30,
           f"max |numeric - closed form| / sigma^2 pi = {worst:.2e} (< 1e-3), cpu {elapsed:.2f} s (< 30 s)")


def test_criterion_02_norm_identity():
    rng = np.random.default_rng(102)
    worst = max(abs(kernel_numeric(BANK, p, p, (DELTA, DELTA)) - ETA) / ETA
                for p in (random_point(rng, 3.0) for _ in range(20)))
    record(2, worst < 1e-3, f"max relative error of ||psi||^2 vs sigma^2 pi = {worst:.2e} (< 1e-3)")


def test_criterion_03_distance_identity():
    rng = np.random.default_rng(103)
    worst = 0.0
    for _ in range(50):
        p, q = random_point(rng), random_point(rng)
        d2 = kernel_distance(ETA, kernel_gabor_shifted(GP, p, q)) ** 2
        direct = l2_distance_sq(BANK, p, q, (DELTA, DELTA))
        worst = max(worst, abs(d2 - direct) / direct)
    record(3, worst < 1e-3, f"max relative error of d^2 vs quadrature of ||psi_p - psi_p0||^2 = {worst:.2e} (< 1e-3)")


def test_criterion_04_stochasticity_and_mass():
    grid = propagation_grid()
    S = transition_operator(GaborGridKernel(GP, PatchSpec(1.0)), grid)
    col_err = float(np.abs(S.column_integrals() - 1).max())
    fields = iterate_kernel(S, grid.flat_index(x=0.0, y=0.0, theta=0.0), 10, history=True)
    mass_err = max(abs(k.integral() - 1) for k in fields)
    record(4, col_err < 1e-8 and mass_err < 1e-8,
           f"max_q |int S dmu - 1| = {col_err:.1e}, max_n<=10 |int K_n dmu - 1| = {mass_err:.1e} (< 1e-8) "
           f"on {grid.shape} grid")


def test_criterion_05_energy_decomposition():
    rng = np.random.default_rng(105)
    worst = 0.0
    for _ in range(20):
        p = random_point(rng, 3.0)
        re2, im2 = energy_terms(BANK, p, (DELTA, DELTA))
        kpp = float(gabor_kernel(GP, p.x, p.y, p.theta, p.x, p.y, p.theta))
        worst = max(worst, abs(kpp - re2 - im2) / ETA)
    record(5, worst < 1e-6, f"max |K(p,p) - ||Re psi||^2 - ||Im psi||^2| / sigma^2 pi = {worst:.2e} (< 1e-6)")


def test_criterion_06_bow_tie():
    grid = propagation_grid()
    k4 = gabor_propagation(GP, grid, 4, history=False)
    # the preferred (edge) axis of orientation 0 is the y axis
    ratio = cone_mass_ratio(k4, np.pi / 2, np.pi / 6)
    af = argmax_feature(k4, "theta", default_threshold(project_max(k4, "theta").values))
    step = grid.axis("theta").step
    frac = axial_argmax_agreement(af, np.pi / 2, 0.0, step, 3 * GP.sigma)
    record(6, ratio >= 2 and frac >= 0.9,
           f"axial/orthogonal cone mass = {ratio:.2f} (>= 2); theta_bar = 0 +- one step on {frac:.0%} "
           f"of suprathreshold axial pixels within 3 sigma (>= 90%)")


def test_criterion_07_level_set_topology():
    grid = spatial_grid(1.5, 1.5, 0.05, theta_axis(count=64))
    level = 0.2 * ETA  # the first side lobe peaks at eta / e
    raw = gabor_kernel_field(GP, grid)
    cut = gabor_kernel_field(GP, grid, patch=PatchSpec(1.0))
    n_raw = flood_fill_components(raw.values > level, periodic=(2,))
    n_cut = flood_fill_components(cut.values > level, periodic=(2,))
    record(7, n_raw >= 2 and n_cut == 1,
           f"components above 0.2 sigma^2 pi: untruncated {n_raw} (>= 2), truncated {n_cut} (== 1)")


def test_criterion_08_glued_distance_brute_force():
    grid = spatial_grid(0.5, 0.5, 0.25, theta_axis(count=5))
    pts = grid.points()
    ps = PatchSpec(1.0)

    def cols(P):
        return P[..., 0], P[..., 1], P[..., 2]

    pg = build_patch_graph(pts, lambda P, Q: patch_mask(ps, *cols(P), *cols(Q)),
                           lambda P, Q: kernel_distance(ETA, gabor_kernel(GP, *cols(P), *cols(Q))))
    dijkstra = np.stack([glued_distances(pg, s) for s in range(pg.size)])
    w = np.full((pg.size, pg.size), np.inf)
    coo = pg.matrix.tocoo()
    w[coo.row, coo.col] = coo.data
    brute = chain_enumeration(w, 6)
    exact = bool(np.array_equal(dijkstra, brute))
    record(8, exact, f"glued distance equals chain enumeration (<= 6 links) on all {pg.size}^2 pairs: {exact}")


def test_criterion_09_endstopping_curvature():
    res = curvature_experiment()
    radii = ", ".join(f"L={L:g}: {r:.2f}" for L, r in zip(res.lengths, res.radii))
    record(9, res.monotone and res.plain_margin >= 2,
           f"fitted radii {radii}; nonincreasing {res.monotone}; plain {res.plain_radius:.3g} "
           f"= {res.plain_margin:.2f} x largest ES radius (>= 2)")


def test_criterion_10_spatiotemporal():
    rng = np.random.default_rng(110)
    sp = SpatioTemporalParams(1.0, 0.5, 1.0)
    scale = ETA * sp.beta * np.sqrt(np.pi)  # the kernel at p = p0
    bank = SpatioTemporalBank(sp)
    worst = 0.0
    for _ in range(20):
        t = rng.uniform(-1, 1)
        p0 = FeaturePoint(*rng.uniform(-0.5, 0.5, 2), rng.uniform(-np.pi, np.pi), t=t, alpha=rng.uniform(-0.5, 0.5))
        p = FeaturePoint(*rng.uniform(-0.5, 0.5, 2), rng.uniform(-np.pi, np.pi), t=t, alpha=rng.uniform(-0.5, 0.5))
        worst = max(worst, abs(kernel_spatiotemporal(sp, p, p0) - kernel_numeric(bank, p, p0)) / scale)
    wbank = SpatioTemporalBank(sp, weighted=True)
    worst_c = 0.0
    for _ in range(5):
        q0 = FeaturePoint(0.0, 0.0, 0.0, t=0.0, alpha=rng.uniform(0, 0.5), C=rng.uniform())
        q = FeaturePoint(*rng.uniform(-0.4, 0.4, 2), rng.uniform(-np.pi, np.pi), t=0.0,
                         alpha=rng.uniform(0, 0.5), C=rng.uniform())
        worst_c = max(worst_c, abs(kernel_c_family(sp, q, q0) - kernel_numeric(wbank, q, q0)) / scale)
    record(10, worst < 1e-3 and worst_c < 1e-3,
           f"factorized vs 3D quadrature {worst:.2e}, C-family expansion vs quadrature {worst_c:.2e} "
           f"(relative to K(p,p); < 1e-3)")


def test_criterion_11_pinwheel_patchiness():
    res = pinwheel_experiment(seed=0, method="sparse")
    record(11, res.patchy,
           f"mean wrapped |theta - theta(0,0)| over {int((res.kn.values > res.threshold).sum())} suprathreshold "
           f"pixels = {res.statistic:.4f} < 5th percentile of 1000 random masks = {res.baseline_p5:.4f}")


def test_criterion_12_learned_bank():
    bank = learned_bank(128, 16, seed=0, pad=5, crop=11)
    kernel = DiscreteGridKernel(bank)
    ratios, errs, supports = [], [], set()
    for f in range(len(bank)):
        field = learned_kernel_field(bank, f, 12, kernel)
        proj = project_max(field, "f")
        ratio, angle = region_anisotropy(proj, default_threshold(proj.values))
        ratios.append(ratio)
        errs.append(float(wrapped_orientation_distance(angle, dominant_orientation(bank.stack[f]))))
        nz = np.nonzero(np.abs(field.values).max(axis=2))
        supports.add((int(np.ptp(nz[1])) + 1, int(np.ptp(nz[0])) + 1))
    ok = min(ratios) >= 1.5 and max(errs) <= np.pi / 8 and supports == {(21, 21)}
    record(12, ok,
           f"min anisotropy ratio {min(ratios):.2f} (>= 1.5); max major-axis deviation from the filter "
           f"orientation {np.degrees(max(errs)):.1f} deg (<= 22.5); projected supports {sorted(supports)} (21x21)")


def test_criterion_13_determinism(tmp_path):
    mismatched = []
    for name, (command, _) in cli.PRESETS.items():
        outs = []
        for k in range(2):
            out = tmp_path / f"{name}_{k}"
            code = cli.main([command, "--preset", name, "--out", str(out), "--threads", "1"])
            assert code == 0, f"{name} exited with {code}"
            outs.append(out)
        a = sorted(p.name for p in outs[0].iterdir())
        b = sorted(p.name for p in outs[1].iterdir())
        if a != b or any((outs[0] / n).read_bytes() != (outs[1] / n).read_bytes() for n in a):
            mismatched.append(name)
    record(13, not mismatched,
           f"{len(cli.PRESETS)} presets run twice; bitwise differences in: {', '.join(mismatched) or 'none'}")


if __name__ == "__main__":
    import tempfile

    failures = 0
    for name, fn in sorted(globals().items()):
        if not name.startswith("test_criterion_"):
            continue
        try:
            if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except AssertionError:
            failures += 1
    sys.exit(1 if failures else 0)
