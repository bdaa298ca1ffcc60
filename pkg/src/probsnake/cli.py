"""Command-line driver: ``run``, ``scene`` and ``bench``.

Exit codes: 0 success, 2 bad configuration, 3 I/O failure, 4 model error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import platform
import statistics
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .casp import CaspParams, casp_fit
from .curve import Curve, CurveError, load_curve, resample, save_curve
from .kass import KassParams, kass_fit
from .prob_snake import FitReport, PassConfig, Schedule, fit
from .raster import (
    SCENE_KINDS,
    GrayImage,
    ImageFormatError,
    UnsupportedFormatError,
    load_image,
    make_scene,
    save_pgm,
    save_ppm,
)

log = logging.getLogger("probsnake")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_MODEL = 0, 2, 3, 4
MODELS = ("prob", "kass", "casp")

# built-in values for every option that may come from flags or a config file
DEFAULTS = {
    "depth1": 25,
    "window": 7,
    "reg1": 0.0,
    "resample_max": 4.0,
    "depth2": 5,
    "reg2": 1.0,
    "max_iter": 100,
    "epsilon": 0.5,
    "alpha": 0.1,
    "beta": 0.1,
    "lam": 0.5,
    "kass_max_iter": 5000,
    "kass_epsilon": 0.01,
    "sigma": 2.0,
    "max_deviation": 5.0,
    "iterations": 3000,
    "reg": 0.2,
    "k_l": 0.0,
    "seed": 0,
    "reps": 5,
    "models": "prob,kass",
    "kind": "disk",
    "size": 256,
    "noise": 0.0,
}


class ConfigError(ValueError):
    pass


class ModelError(RuntimeError):
    pass


@dataclass
class RunConfig:
    model: str
    image: str
    init: str
    out_curve: str
    out_overlay: str | None = None
    out_figure: str | None = None
    report: str | None = None
    params: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Parameter blocks


def schedule_from(opts: dict) -> Schedule:
    window = int(opts["window"])
    if window < 1 or window % 2 == 0:
        raise ConfigError(f"--window must be a positive odd integer, got {window}")
    half = (window - 1) // 2
    common = dict(window_half=half, max_iterations=int(opts["max_iter"]), epsilon=float(opts["epsilon"]))
    return Schedule(
        PassConfig(depth=int(opts["depth1"]), regularization=float(opts["reg1"]), **common),
        float(opts["resample_max"]),
        PassConfig(depth=int(opts["depth2"]), regularization=float(opts["reg2"]), **common),
    )


def kass_params_from(opts: dict) -> KassParams:
    return KassParams(
        alpha=float(opts["alpha"]),
        beta=float(opts["beta"]),
        lam=float(opts["lam"]),
        max_iterations=int(opts["kass_max_iter"]),
        epsilon=float(opts["kass_epsilon"]),
        sigma=float(opts["sigma"]),
    )


def casp_params_from(opts: dict) -> CaspParams:
    return CaspParams(
        max_deviation=float(opts["max_deviation"]),
        iterations=int(opts["iterations"]),
        regularization=float(opts["reg"]),
        k_l=float(opts["k_l"]),
        seed=int(opts["seed"]),
    )


def model_params(model: str, opts: dict):
    try:
        if model == "prob":
            return schedule_from(opts)
        if model == "kass":
            return kass_params_from(opts)
        if model == "casp":
            return casp_params_from(opts)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    raise ConfigError(f"unknown model {model!r}; expected one of {', '.join(MODELS)}")


def run_model(model: str, params, c0: Curve, img: GrayImage) -> FitReport:
    try:
        if model == "prob":
            return fit(c0, img, params)
        if model == "kass":
            return kass_fit(c0, img, params)
        return casp_fit(c0, img, params)
    except (ValueError, np.linalg.LinAlgError) as e:
        raise ModelError(str(e)) from e


def _params_dict(params) -> dict:
    return asdict(params)


# ---------------------------------------------------------------------------
# run


def cmd_run(cfg: RunConfig) -> FitReport:
    """Fit ``cfg.model`` and write the curve, overlay, figure and report files."""
    params = model_params(cfg.model, cfg.params)
    img = load_image(cfg.image)
    c0 = load_curve(cfg.init)
    if cfg.model == "casp" and not c0.closed:
        raise ModelError("casp requires closed curve")
    if not c0.in_bounds(img.width, img.height):
        raise ModelError("initial curve lies outside the image")
    rep = run_model(cfg.model, params, c0, img)
    save_curve(rep.curve, cfg.out_curve)
    if cfg.out_overlay:
        from .plotting import overlay

        save_ppm(overlay(img, rep.curve), cfg.out_overlay)
    if cfg.out_figure:
        from .plotting import fit_figure

        fit_figure(img, c0, rep.curve, cfg.out_figure, title=cfg.model)
    if cfg.report:
        doc = {"model": cfg.model, "params": _params_dict(params), **rep.to_dict()}
        with open(cfg.report, "w") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
    return rep


# ---------------------------------------------------------------------------
# scene


def cmd_scene(kind: str, size, noise: float, seed: int, out_image: str, out_truth: str | None = None, **params):
    img, truth = make_scene(kind, size, noise=noise, seed=seed, **params)
    save_pgm(img, out_image, maxval=255)
    if out_truth:
        if truth.kind == "circle":
            c = Curve(np.asarray(truth.polygon(1.0)), True)
        else:
            c = Curve(np.asarray(truth.points), False)
        save_curve(c, out_truth, geometry=truth.to_dict())
    return img, truth


# ---------------------------------------------------------------------------
# bench


@dataclass
class BenchRow:
    model: str
    knots: int
    iterations: int
    median_s: float
    per_iteration_s: float
    times_s: list[float]
    ratio: float | None = None


@dataclass
class BenchReport:
    rows: list[BenchRow]
    reference: str | None
    reps: int
    environment: str

    def row(self, model: str) -> BenchRow:
        return next(r for r in self.rows if r.model == model)

    def table(self) -> str:
        ratio = self.reference is not None
        head = f"{'model':<6} {'knots':>6} {'iters':>6} {'median':>12} {'per-iter':>12}"
        if ratio:
            head += f" {self.reference + ' speedup':>14}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            line = f"{r.model:<6} {r.knots:>6d} {r.iterations:>6d} {_fmt_time(r.median_s):>12} {_fmt_time(r.per_iteration_s):>12}"
            if ratio:
                line += f" {r.ratio:>13.1f}x"
            lines.append(line)
        lines.append(f"({self.reps} repetitions; {self.environment})")
        return "\n".join(lines)

    def csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        cols = ["model", "knots", "iterations", "median_s", "per_iteration_s"]
        if self.reference is not None:
            cols.append(f"{self.reference}_speedup")
        wr.writerow(cols)
        for r in self.rows:
            vals = [r.model, r.knots, r.iterations, f"{r.median_s:.9g}", f"{r.per_iteration_s:.9g}"]
            if self.reference is not None:
                vals.append(f"{r.ratio:.6g}")
            wr.writerow(vals)
        return buf.getvalue()


def _fmt_time(s: float) -> str:
    if s < 1e-3:
        return f"{s * 1e6:.1f} us"
    if s < 1:
        return f"{s * 1e3:.2f} ms"
    return f"{s:.3f} s"


def _environment() -> str:
    return f"{platform.python_implementation()} {platform.python_version()}, numpy {np.__version__}, {platform.machine()}"


def default_bench_inputs(seed: int = 0) -> tuple[GrayImage, Curve]:
    """Disk of radius 40 in a 256x256 image (levels 0/100, noise 5) and a
    14-knot circle 15 px outside it."""
    img, truth = make_scene("disk", 256, noise=5.0, seed=seed, radius=40)
    cx, cy = truth.center
    t = 2 * np.pi * np.arange(14) / 14
    init = Curve(np.column_stack([cx + 55 * np.cos(t), cy + 55 * np.sin(t)]), True)
    return img, init


def cmd_bench(img: GrayImage, init: Curve, models, reps: int, opts: dict | None = None) -> BenchReport:
    """Median wall-clock of each model's fit over ``reps`` repetitions.

    The probabilistic snake starts from ``init`` as given. The other models start
    from ``init`` resampled to the knot count the probabilistic snake ends with, so
    every engine works with the same number of knots. The first repetition is
    discarded from the median when ``reps >= 4``.
    """
    if reps < 3:
        raise ConfigError("bench needs at least 3 repetitions")
    models = list(models)
    if not models:
        raise ConfigError("no models to benchmark")
    for m in models:
        if m not in MODELS:
            raise ConfigError(f"unknown model {m!r}")
    opts = {**DEFAULTS, **(opts or {})}
    params = {m: model_params(m, opts) for m in models}

    schedule = params.get("prob") or model_params("prob", opts)
    n_fine = len(run_model("prob", schedule, init, img).curve)
    matched = resample(init, init.perimeter() / n_fine)

    rows = []
    for m in models:
        c0 = init if m == "prob" else matched
        if m == "casp" and not c0.closed:
            raise ModelError("casp requires closed curve")
        times, rep = [], None
        for _ in range(reps):
            rep = run_model(m, params[m], c0, img)
            times.append(rep.total_time)
        warm = times[1:] if reps >= 4 else times
        med = statistics.median(warm)
        iters = int(sum(rep.iterations))
        rows.append(BenchRow(m, len(rep.curve), iters, med, med / max(iters, 1), times))
        log.info("%s: median %s over %d runs", m, _fmt_time(med), len(warm))

    reference = None
    if len(rows) > 1:
        reference = "prob" if "prob" in models else rows[0].model
        ref = next(r for r in rows if r.model == reference).median_s
        for r in rows:
            r.ratio = r.median_s / ref
    return BenchReport(rows, reference, reps, _environment())


# ---------------------------------------------------------------------------
# Argument parsing


def _model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("probabilistic snake")
    g.add_argument("--depth1", type=int, help="search depth of the coarse pass (default 25)")
    g.add_argument("--window", type=int, help="odd variance window size in pixels (default 7)")
    g.add_argument("--reg1", type=float, help="taper strength of the coarse pass (default 0)")
    g.add_argument("--resample-max", dest="resample_max", type=float, help="max knot spacing after resampling (default 4)")
    g.add_argument("--depth2", type=int, help="search depth of the fine pass (default 5)")
    g.add_argument("--reg2", type=float, help="taper strength of the fine pass (default 1)")
    g.add_argument("--max-iter", dest="max_iter", type=int, help="iteration cap per pass (default 100)")
    g.add_argument("--epsilon", type=float, help="convergence displacement in pixels (default 0.5)")
    g = p.add_argument_group("classical snake")
    g.add_argument("--alpha", type=float, help="tension weight (default 0.1)")
    g.add_argument("--beta", type=float, help="rigidity weight (default 0.1)")
    g.add_argument("--lambda", dest="lam", type=float, help="damping in (0, 1] (default 0.5)")
    g.add_argument("--kass-max-iter", dest="kass_max_iter", type=int, help="iteration cap (default 5000)")
    g.add_argument("--kass-epsilon", dest="kass_epsilon", type=float, help="convergence displacement (default 0.01)")
    g.add_argument("--sigma", type=float, help="Gaussian pre-smoothing for the edge field (default 2)")
    g = p.add_argument_group("region criterion")
    g.add_argument("--max-deviation", dest="max_deviation", type=float, help="proposal bound in pixels (default 5)")
    g.add_argument("--iterations", type=int, help="number of proposals (default 3000)")
    g.add_argument("--reg", type=float, help="weight of the midpoint penalty (default 0.2)")
    g.add_argument("--k-l", dest="k_l", type=float, help="constant offset of the criterion (default 0)")
    g.add_argument("--seed", type=int, help="proposal seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="probsnake", description="Probabilistic snake and baseline contour fitting.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="fit a model to an image")
    r.add_argument("--config", help="JSON file of option values; flags take precedence")
    r.add_argument("--model", choices=MODELS)
    r.add_argument("--image")
    r.add_argument("--init", help="initial curve file")
    r.add_argument("--out-curve", dest="out_curve")
    r.add_argument("--out-overlay", dest="out_overlay", help="P6 overlay output")
    r.add_argument("--out-figure", dest="out_figure", help="matplotlib figure output (png, pdf, ...)")
    r.add_argument("--report", help="JSON run report output")
    _model_flags(r)

    s = sub.add_parser("scene", help="generate a synthetic scene")
    s.add_argument("--config")
    s.add_argument("--kind", choices=SCENE_KINDS)
    s.add_argument("--size", type=int, help="image side in pixels (default 256)")
    s.add_argument("--noise", type=float, help="noise standard deviation (default 0)")
    s.add_argument("--seed", type=int)
    s.add_argument("--radius", type=float, help="disk radius (disk scenes)")
    s.add_argument("--column", type=int, help="first foreground column (step-edge)")
    s.add_argument("--levels", help="background,foreground intensities")
    s.add_argument("--out-image", dest="out_image")
    s.add_argument("--out-truth", dest="out_truth")

    b = sub.add_parser("bench", help="time models on one image and initialisation")
    b.add_argument("--config")
    b.add_argument("--models", help="comma-separated subset of prob,kass,casp (default prob,kass)")
    b.add_argument("--reps", type=int, help="repetitions per model, >= 3 (default 5)")
    b.add_argument("--image", help="input image; default is a generated disk scene")
    b.add_argument("--init", help="initial curve; required with --image")
    b.add_argument("--out-csv", dest="out_csv")
    b.add_argument("--out-figure", dest="out_figure")
    b.add_argument("--report", help="JSON bench report output")
    _model_flags(b)
    return p


_NOT_OPTIONS = {"command", "verbose", "config"}


def merged_options(args: argparse.Namespace) -> dict:
    """Built-in defaults, then the config file, then explicit flags."""
    opts = dict(DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{args.config}: {e}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        opts.update({k.replace("-", "_"): v for k, v in doc.items()})
    opts.update({k: v for k, v in vars(args).items() if v is not None and k not in _NOT_OPTIONS})
    return opts


def _require(opts: dict, *keys: str) -> None:
    missing = [k for k in keys if not opts.get(k)]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _main(args: argparse.Namespace) -> int:
    opts = merged_options(args)
    if args.command == "run":
        _require(opts, "model", "image", "init", "out_curve")
        if opts["model"] not in MODELS:
            raise ConfigError(f"unknown model {opts['model']!r}")
        cfg = RunConfig(
            opts["model"], opts["image"], opts["init"], opts["out_curve"],
            opts.get("out_overlay"), opts.get("out_figure"), opts.get("report"), opts,
        )
        rep = cmd_run(cfg)
        print(f"{cfg.model}: {len(rep.curve)} knots, iterations {rep.iterations}, {_fmt_time(rep.total_time)}")
    elif args.command == "scene":
        _require(opts, "kind", "out_image")
        extra = {}
        if opts.get("radius") is not None:
            extra["radius"] = float(opts["radius"])
        if opts.get("column") is not None:
            extra["column"] = int(opts["column"])
        if opts.get("levels"):
            try:
                extra["levels"] = tuple(float(v) for v in str(opts["levels"]).split(","))
            except ValueError:
                raise ConfigError("--levels must be two comma-separated numbers") from None
            if len(extra["levels"]) != 2:
                raise ConfigError("--levels must be two comma-separated numbers")
        try:
            cmd_scene(opts["kind"], int(opts["size"]), float(opts["noise"]), int(opts["seed"]),
                      opts["out_image"], opts.get("out_truth"), **extra)
        except ValueError as e:
            if isinstance(e, (ImageFormatError, UnsupportedFormatError)):
                raise
            raise ConfigError(str(e)) from None
    else:
        models = [m.strip() for m in str(opts["models"]).split(",") if m.strip()]
        if opts.get("image"):
            _require(opts, "init")
            img, init = load_image(opts["image"]), load_curve(opts["init"])
        else:
            img, init = default_bench_inputs(int(opts["seed"]))
        report = cmd_bench(img, init, models, int(opts["reps"]), opts)
        print(report.table())
        if opts.get("out_csv"):
            with open(opts["out_csv"], "w") as fh:
                fh.write(report.csv())
        if opts.get("out_figure"):
            from .plotting import bench_figure

            bench_figure(report.rows, opts["out_figure"])
        if opts.get("report"):
            with open(opts["report"], "w") as fh:
                json.dump({"reps": report.reps, "reference": report.reference,
                           "environment": report.environment,
                           "rows": [asdict(r) for r in report.rows]}, fh, indent=1)
                fh.write("\n")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return _main(args)
    except ConfigError as e:
        print(f"probsnake: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelError as e:
        print(f"probsnake: error: {e}", file=sys.stderr)
        return EXIT_MODEL
    except (OSError, ImageFormatError, UnsupportedFormatError, CurveError, json.JSONDecodeError) as e:
        print(f"probsnake: error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
