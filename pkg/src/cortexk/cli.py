"""Command line: ``cortexk <command> [--preset NAME] [--config FILE] [--out DIR] [--key value ...]``.

Settings are resolved in order: built-in defaults, command defaults,
preset, config file, command-line overrides.  Each run writes
``config.txt`` (the resolved settings) and ``manifest.txt`` (SHA-256 of
every output) into the output directory.

Exit codes: 0 success, 2 configuration error, 3 degenerate kernel
normalization, 4 I/O or file-format error.
"""
from __future__ import annotations

import argparse
import hashlib
import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import fft as sfft

from . import experiments as ex
from .filterbank import GaborParams, SpatioTemporalParams
from .formats import (
    FormatError,
    normalize_gray,
    read_bank,
    read_pnm,
    write_csv,
    write_kgrid,
    write_pgm,
    write_ppm,
)
from .geometry import Axis, FeatureGrid
from .kernel import PatchSpec
from .propagation import DegenerateKernelError, GaborGridKernel, Nonlinearity
from .viz_export import (
    argmax_feature,
    default_threshold,
    orientation_map_image,
    overlay_threshold,
    project_max,
    as_projection,
    render_glyph_field,
)

EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # filter bank
    bank: str = "gabor"
    lam: float = 1.0
    sigma: float = 0.5
    length: float = 0.0          # axial Gaussian scale; 0 means isotropic
    cS: float = 2.0
    cL: float = 1.0
    es_lengths: tuple = (1.0, 0.7, 0.5)
    beta: float = 1.0
    family: str = "inseparable"  # spatiotemporal: inseparable | C
    C: float = 1.0
    C0: float = 1.0
    # grid
    x_half: float = 1.5
    y_half: float = 3.0
    xy_step: float = 0.1
    theta_half: float = 1.5
    theta_step: float = 0.15
    theta_count: int = 0         # > 0: periodic orientation circle
    alpha_half: float = 2.0
    alpha_step: float = 0.1
    # source point
    x0: float = 0.0
    y0: float = 0.0
    theta0: float = 0.0
    alpha0: float = 0.0
    # propagation
    nonlinearity: str = "rectifier"
    tau: float = 0.0
    steps: int = 4
    method: str = "auto"
    truncate: bool = True
    patch_lam: float = 1.0
    # visualization
    threshold: str = "auto"      # a number, or auto = percentile of positive values
    percentile: float = 90.0
    glyph_size: int = 9
    glyph_stride: int = 3
    # pinwheel map
    map_size: int = 81
    map_step: float = 0.1
    waves: int = 30
    wavenumber: float = 2 * np.pi / 5
    trials: int = 1000
    # learned bank
    bank_file: str = ""
    bank_count: int = 128
    bank_size: int = 16
    pad: int = 5
    crop: int = 11
    filters: tuple = (19, 49, 92, 79)
    learned_half: int = 12
    # image evolution
    image: str = ""
    image_step: float = 0.1
    seed: int = 0


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
TUPLE_ITEM = {"es_lengths": float, "filters": int}
CHOICES = {
    "bank": ("gabor", "endstop", "learned"),
    "family": ("inseparable", "C"),
    "nonlinearity": ("rectifier", "logistic", "identity"),
    "method": ("auto", "dense", "sparse", "conv"),
}

COMMAND_DEFAULTS = {
    # visualization sampling of a single kernel
    "kernel": dict(x_half=1.0, y_half=1.0, xy_step=0.01, theta_half=1.5, theta_step=0.015, truncate=False),
    "propagate": dict(steps=4),
    "pinwheel": dict(steps=6),
    "endstop": dict(x_half=2.0, y_half=2.0, xy_step=0.1, theta_count=21, steps=2),
    "spatiotemporal": dict(x_half=1.0, y_half=1.0, xy_step=0.05, theta_half=1.5, theta_step=0.15),
    "lift-evolve": dict(theta_count=16, steps=4),
}

PRESETS = {
    "fig-diffK": ("propagate", dict(bank="gabor", x_half=1.5, y_half=3.0, xy_step=0.1, theta_half=1.5,
                                    theta_step=0.15, steps=4, tau=0.0, truncate=True, patch_lam=1.0)),
    "fig-pw": ("pinwheel", dict(map_size=81, map_step=0.1, waves=30, steps=6, tau=0.0, truncate=True,
                                patch_lam=1.0)),
    "fig-curvature": ("endstop", dict(es_lengths=(1.0, 0.7, 0.5), x_half=2.0, y_half=2.0, xy_step=0.1,
                                      theta_count=21, steps=2, tau=0.0, truncate=True, patch_lam=1.0)),
    "fig-kernel-spt": ("spatiotemporal", dict(x_half=1.0, y_half=1.0, xy_step=0.05, theta_half=1.5,
                                              theta_step=0.15, alpha_half=2.0, alpha_step=0.1)),
    "fig-sparse-laf": ("kernel", dict(bank="learned", truncate=False, filters=(19, 49, 92, 79), learned_half=12)),
}


def _convert(key: str, raw: str):
    typ = FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if typ == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        if typ == "tuple":
            items = [s for s in raw.replace(" ", "").split(",") if s]
            return tuple(TUPLE_ITEM[key](s) for s in items)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {typ}") from None
    if key in CHOICES and raw not in CHOICES[key]:
        raise ConfigError(f"{key}: {raw!r} is not one of {', '.join(CHOICES[key])}")
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """``key = value`` lines; ``#`` starts a comment; unknown keys are rejected."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _convert(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return out


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(format_value(x) for x in v)
    return str(v)


def format_config(cfg: RunConfig, command: str) -> str:
    lines = [f"# cortexk {command}"]
    lines += [f"{f.name} = {format_value(getattr(cfg, f.name))}" for f in fields(RunConfig)]
    return "\n".join(lines) + "\n"


def validate(cfg: RunConfig) -> RunConfig:
    checks = [
        (cfg.lam > 0, "lam must be positive"),
        (cfg.sigma > 0, "sigma must be positive"),
        (cfg.length >= 0, "length must be nonnegative"),
        (cfg.beta > 0, "beta must be positive"),
        (cfg.xy_step > 0 and cfg.theta_step > 0 and cfg.alpha_step > 0, "grid steps must be positive"),
        (cfg.steps >= 1, "steps must be at least 1"),
        (cfg.tau >= 0, "tau must be nonnegative"),
        (cfg.patch_lam > 0, "patch_lam must be positive"),
        (0 < cfg.percentile < 100, "percentile must lie in (0, 100)"),
        (cfg.glyph_size >= 1 and cfg.glyph_size % 2 == 1, "glyph_size must be odd"),
        (cfg.glyph_stride >= 1, "glyph_stride must be positive"),
        (cfg.map_size >= 3 and cfg.map_size % 2 == 1, "map_size must be odd and at least 3"),
        (cfg.waves >= 2, "waves must be at least 2"),
        (cfg.trials >= 1, "trials must be positive"),
        (cfg.crop >= 1 and cfg.crop % 2 == 1, "crop must be odd"),
        (cfg.pad >= 0, "pad must be nonnegative"),
        (len(cfg.es_lengths) >= 1 and all(L > 0 for L in cfg.es_lengths), "es_lengths must be positive"),
        (0 <= cfg.C <= 1 and 0 <= cfg.C0 <= 1, "C and C0 must lie in [0, 1]"),
        (cfg.seed >= 0, "seed must be nonnegative"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)
    if cfg.cS <= cfg.cL or cfg.cL < 0:
        raise ConfigError(f"endstopping needs cS > cL >= 0 (got cS={cfg.cS}, cL={cfg.cL})")
    if cfg.threshold != "auto":
        try:
            float(cfg.threshold)
        except ValueError:
            raise ConfigError(f"threshold must be a number or 'auto', got {cfg.threshold!r}") from None
    return cfg


def resolve(command: str, preset: Optional[str] = None, config_text: Optional[str] = None,
            config_source: str = "<config>", overrides: Optional[dict] = None) -> RunConfig:
    values = dict(COMMAND_DEFAULTS.get(command, {}))
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        pcmd, pvals = PRESETS[preset]
        if pcmd != command:
            raise ConfigError(f"preset {preset!r} belongs to the {pcmd!r} command")
        values.update(pvals)
    if config_text is not None:
        values.update(parse_config_text(config_text, config_source))
    for key, raw in (overrides or {}).items():
        values[key] = _convert(key, raw)
    return validate(replace(RunConfig(), **values))


# ---------------------------------------------------------------------------
# run bookkeeping


class Run:
    def __init__(self, out: Path, command: str, cfg: RunConfig, log=print):
        self.out = out
        self.command = command
        self.cfg = cfg
        self.files = []
        self.log = log
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def text(self, name: str, body: str):
        self.path(name).write_text(body)

    def finish(self):
        (self.out / "config.txt").write_text(format_config(self.cfg, self.command))
        names = ["config.txt"] + sorted(set(self.files))
        lines = [f"{hashlib.sha256((self.out / n).read_bytes()).hexdigest()}  {n}" for n in names]
        (self.out / "manifest.txt").write_text("\n".join(lines) + "\n")


def _threshold(cfg: RunConfig, values) -> float:
    if cfg.threshold == "auto":
        return default_threshold(values, cfg.percentile)
    return float(cfg.threshold)


def _gabor(cfg: RunConfig) -> GaborParams:
    return GaborParams(cfg.lam, cfg.sigma, cfg.length or None)


def _patch(cfg: RunConfig) -> Optional[PatchSpec]:
    return PatchSpec(cfg.patch_lam) if cfg.truncate else None


def _h(cfg: RunConfig) -> Nonlinearity:
    return Nonlinearity(cfg.nonlinearity, cfg.tau)


def _theta(cfg: RunConfig) -> Axis:
    return ex.theta_axis(cfg.theta_half, cfg.theta_step, cfg.theta_count)


def _grid(cfg: RunConfig) -> FeatureGrid:
    return ex.spatial_grid(cfg.x_half, cfg.y_half, cfg.xy_step, _theta(cfg))


def _origin(cfg: RunConfig) -> dict:
    return {"x": cfg.x0, "y": cfg.y0, "theta": cfg.theta0}


def _gray(values) -> np.ndarray:
    return normalize_gray(values)


def _write_theta_slices(run: Run, field, stem: str):
    """Max projection plus the slice at the source orientation."""
    proj = project_max(field, "theta")
    write_pgm(run.path(f"{stem}_proj.pgm"), _gray(proj.raster()))
    ax = field.grid.axis("theta")
    k = ax.index_of(field.origin[2])
    sl = np.take(field.values, k, axis=field.grid.axis_index("theta"))
    names = [a.name for a in field.grid.axes if a.name != "theta"]
    sl = sl if names == ["y", "x"] else sl.T
    write_pgm(run.path(f"{stem}_slice_theta0.pgm"), _gray(sl[::-1]))
    return proj


# ---------------------------------------------------------------------------
# commands


def _learned(cfg: RunConfig):
    if cfg.bank_file:
        raw, delta = read_bank(cfg.bank_file)
        return ex.learned_bank(pad=cfg.pad, crop=cfg.crop, raw=raw, delta=delta)
    return ex.learned_bank(cfg.bank_count, cfg.bank_size, cfg.seed, cfg.pad, cfg.crop)


def cmd_kernel(run: Run):
    cfg = run.cfg
    if cfg.bank == "learned":
        from .propagation import DiscreteGridKernel

        bank = _learned(cfg)
        kernel = DiscreteGridKernel(bank)
        for f0 in cfg.filters:
            if not 0 <= f0 < len(bank):
                raise ConfigError(f"filter index {f0} outside the bank (size {len(bank)})")
            field = ex.learned_kernel_field(bank, f0, cfg.learned_half, kernel)
            write_kgrid(run.path(f"kernel_f{f0:03d}.kgrid"), field)
            write_pgm(run.path(f"filter_f{f0:03d}.pgm"), _gray(np.real(bank.stack[f0])[::-1]))
            proj = project_max(field, "f")
            write_pgm(run.path(f"kernel_f{f0:03d}_proj.pgm"), _gray(proj.raster()))
            af = argmax_feature(field, "f", _threshold(cfg, proj.values))
            img = render_glyph_field(af, bank, cfg.crop, 1, cfg.crop)
            write_pgm(run.path(f"kernel_f{f0:03d}_glyphs.pgm"), img)
        run.log(f"kernel: {len(cfg.filters)} learned filters")
        return
    grid = _grid(cfg)
    if cfg.bank == "gabor":
        field = ex.kernel_field(GaborGridKernel(_gabor(cfg), _patch(cfg)), grid, _origin(cfg))
    else:
        bank = ex.es_bank(cfg.es_lengths[0], cfg.lam, cfg.sigma, cfg.cS, cfg.cL)
        field = ex.kernel_field(ex.bank_kernel(bank, _patch(cfg)), grid, _origin(cfg))
    write_kgrid(run.path("kernel.kgrid"), field)
    _write_theta_slices(run, field, "kernel")
    o = grid.flat_index(**_origin(cfg))
    run.log(f"kernel: {grid.size} points, value at source {field.values.ravel()[o]:.6f}")


def _mass_report(run: Run, fields_):
    lines = [f"step {k.n}: {k.integral():.6f}" for k in fields_]
    for line in lines:
        run.log(line)
    run.text("mass.txt", "\n".join(lines) + "\n")


def cmd_propagate(run: Run):
    cfg = run.cfg
    grid = _grid(cfg)
    if cfg.bank == "gabor":
        kernel = GaborGridKernel(_gabor(cfg), _patch(cfg))
        glyph_bank = _gabor(cfg)
    elif cfg.bank == "endstop":
        glyph_bank = ex.es_bank(cfg.es_lengths[0], cfg.lam, cfg.sigma, cfg.cS, cfg.cL)
        kernel = ex.bank_kernel(glyph_bank, _patch(cfg))
    else:
        raise ConfigError("propagate supports the gabor and endstop banks")
    ks = ex.propagate(kernel, grid, _origin(cfg), cfg.steps, _h(cfg), cfg.method)
    for k in ks:
        write_kgrid(run.path(f"step{k.n:02d}.kgrid"), k)
        _write_theta_slices(run, k, f"step{k.n:02d}")
    _mass_report(run, ks)
    last = ks[-1]
    af = argmax_feature(last, "theta", _threshold(cfg, project_max(last, "theta").values))
    write_pgm(run.path("glyphs.pgm"), render_glyph_field(af, glyph_bank, cfg.glyph_size, cfg.glyph_stride))


def cmd_pinwheel(run: Run):
    cfg = run.cfg
    res = ex.pinwheel_experiment(cfg.map_size, cfg.map_step, cfg.waves, cfg.wavenumber, cfg.seed, _gabor(cfg),
                                 cfg.steps, _patch(cfg), cfg.percentile, cfg.trials, cfg.method)
    thr = res.threshold if cfg.threshold == "auto" else float(cfg.threshold)
    write_ppm(run.path("map.ppm"), orientation_map_image(res.pmap))
    write_kgrid(run.path("field.kgrid"), res.kn)
    write_ppm(run.path("overlay.ppm"), overlay_threshold(as_projection(res.kn), res.pmap, thr))
    write_csv(run.path("map_theta.csv"), res.pmap.theta)
    report = (f"threshold {res.threshold:.6g}\n"
              f"suprathreshold_pixels {int((res.kn.values > res.threshold).sum())}\n"
              f"mean_orientation_distance {res.statistic:.6f}\n"
              f"random_mask_p5 {res.baseline_p5:.6f}\n"
              f"random_mask_mean {float(res.baseline.mean()):.6f}\n"
              f"patchy {'yes' if res.patchy else 'no'}\n")
    run.text("patchiness.txt", report)
    _mass_report(run, [res.kn])
    run.log(report.rstrip())


def cmd_endstop(run: Run):
    cfg = run.cfg
    if cfg.theta_count <= 0:
        raise ConfigError("endstop needs a periodic orientation axis (theta_count > 0)")
    res = ex.curvature_experiment(cfg.es_lengths, cfg.lam, cfg.sigma, cfg.cS, cfg.cL, cfg.x_half, cfg.xy_step,
                                  cfg.theta_count, cfg.steps, _patch(cfg), cfg.percentile,
                                  plain_length=cfg.length or 1.0, method=cfg.method)
    banks = [ex.es_bank(L, cfg.lam, cfg.sigma, cfg.cS, cfg.cL) for L in cfg.es_lengths]
    banks.append(GaborParams(cfg.lam, cfg.sigma, cfg.length or 1.0))
    names = [f"es_L{L:g}" for L in cfg.es_lengths] + ["plain"]
    for name, bank, k in zip(names, banks, res.fields):
        proj = project_max(k, "theta")
        write_pgm(run.path(f"{name}_proj.pgm"), _gray(proj.raster()))
        af = argmax_feature(k, "theta", _threshold(cfg, proj.values))
        write_pgm(run.path(f"{name}_glyphs.pgm"), render_glyph_field(af, bank, cfg.glyph_size, cfg.glyph_stride))
    lines = [f"L {L:g} radius {r:.6g}" for L, r in zip(res.lengths, res.radii)]
    lines.append(f"plain radius {res.plain_radius:.6g}")
    lines.append(f"nonincreasing {'yes' if res.monotone else 'no'}")
    run.text("monotonicity.txt", "\n".join(lines) + "\n")
    for line in lines:
        run.log(line)


def cmd_spatiotemporal(run: Run):
    cfg = run.cfg
    sp = SpatioTemporalParams(cfg.lam, cfg.sigma, cfg.beta)
    alpha = Axis.symmetric("alpha", cfg.alpha_half, cfg.alpha_step)
    grid = ex.spatial_grid(cfg.x_half, cfg.y_half, cfg.xy_step, _theta(cfg), (alpha,))
    field = ex.spatiotemporal_field(sp, grid, (cfg.x0, cfg.y0, cfg.theta0, cfg.alpha0), cfg.family, cfg.C, cfg.C0)
    write_kgrid(run.path("kernel4d.kgrid"), field)
    for reduced, keep in (("alpha", "theta"), ("theta", "alpha")):
        p3 = project_max(field, reduced)
        write_kgrid(run.path(f"proj_xy{keep}.kgrid"), p3.axes, p3.values)
        p2 = p3.values.max(axis=[a.name for a in p3.axes].index(keep))
        write_pgm(run.path(f"proj_xy{keep}_xy.pgm"), _gray(p2.T[::-1]))
    o = grid.flat_index(x=cfg.x0, y=cfg.y0, theta=cfg.theta0, alpha=cfg.alpha0)
    run.log(f"spatiotemporal: value at source {field.values.ravel()[o]:.6f}")


def cmd_lift_evolve(run: Run):
    cfg = run.cfg
    if not cfg.image:
        raise ConfigError("lift-evolve needs image=<path to a P5 PGM>")
    img = read_pnm(cfg.image)
    if img.ndim != 2:
        raise FormatError(f"{cfg.image}: expected a grayscale (P5) image")
    image = img.astype(float)[::-1] / 255.0  # row index grows with y
    acts = ex.lift_and_evolve(image, _gabor(cfg), cfg.image_step, _theta(cfg), cfg.steps, _patch(cfg), _h(cfg),
                              cfg.method)
    for a in acts:
        write_kgrid(run.path(f"activation{a.n:02d}.kgrid"), a)
        write_pgm(run.path(f"activation{a.n:02d}_proj.pgm"), _gray(project_max(a, "theta").raster()))
    _mass_report(run, acts)


COMMANDS = {
    "kernel": cmd_kernel,
    "propagate": cmd_propagate,
    "pinwheel": cmd_pinwheel,
    "endstop": cmd_endstop,
    "spatiotemporal": cmd_spatiotemporal,
    "lift-evolve": cmd_lift_evolve,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cortexk", description="Connectivity kernels induced by filter banks.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value settings file")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--out", default=None, help="output directory (default: out/<command>)")
        p.add_argument("--threads", type=int, default=None, help="worker cap (default: $CORTEXK_THREADS or 1)")
        for f in fields(RunConfig):
            p.add_argument("--" + f.name.replace("_", "-"), dest="set_" + f.name, default=None, metavar="V")
    return parser


def _threads(arg) -> int:
    if arg is not None:
        n = arg
    else:
        env = os.environ.get("CORTEXK_THREADS", "1")
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"CORTEXK_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise ConfigError("thread count must be positive")
    return n


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    err = lambda msg: print(f"cortexk: {msg}", file=sys.stderr)  # noqa: E731
    try:
        text = source = None
        if args.config:
            source = args.config
            text = Path(args.config).read_text()
        overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("set_") and v is not None}
        cfg = resolve(args.command, args.preset, text, source or "<config>", overrides)
        threads = _threads(args.threads)
        out = Path(args.out) if args.out else Path("out") / args.command
        run = Run(out, args.command, cfg)
        with sfft.set_workers(threads):
            COMMANDS[args.command](run)
        run.finish()
    except ConfigError as exc:
        err(f"configuration error: {exc}")
        return EXIT_CONFIG
    except DegenerateKernelError as exc:
        err(f"degenerate kernel: {exc}")
        return EXIT_DEGENERATE
    except (OSError, FormatError) as exc:
        err(f"I/O error: {exc}")
        return EXIT_IO
    except ValueError as exc:
        # parameter combinations rejected by the library (grid/step mismatch etc.)
        err(f"configuration error: {exc}")
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
