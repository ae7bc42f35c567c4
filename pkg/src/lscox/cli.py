"""Command-line entry point.

Subcommands: simulate, fit, moments, envelope, summarize, preprocess.
Each run writes delimited outputs, rendered figures, and a JSON manifest
into a run directory; progress goes to standard error only. Exit codes:
0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .grf import MaternSpec
from .lattice import CountGrid, Lattice, PointPattern, bin_points, build_lattice
from .model import CONSTANT, FIXED_EFFECTS, GAUSSIAN, ClassSpec, LevelSpec, \
    LscpModel, Thresholds


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class NumericalError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser that raises instead of exiting, so dispatch owns
    the exit code."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# config handling

def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DataError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON config: {exc}") from None


def apply_overrides(cfg: dict, overrides: list) -> dict:
    """Apply ``key.path=value`` overrides; values parse as JSON when they
    can, otherwise as strings."""
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"override must look like key=value: {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise UsageError(f"override path {key!r} crosses a non-dict")
        node[parts[-1]] = value
    return cfg


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def build_lattice_from_config(cfg: dict) -> Lattice:
    try:
        window = tuple(float(v) for v in cfg["window"])
        return build_lattice(window, int(cfg["nx"]), int(cfg["ny"]),
                             margin_level=float(cfg.get("margin_level", 0.0)),
                             margin_class=float(cfg.get("margin_class", 0.0)))
    except KeyError as exc:
        raise UsageError(f"config missing required key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad lattice config: {exc}") from None


def _class_from_config(entry: dict, idx: int) -> ClassSpec:
    kind = entry.get("kind")
    if kind not in (GAUSSIAN, CONSTANT, FIXED_EFFECTS):
        raise UsageError(f"class {idx}: unknown kind {kind!r}")
    beta = entry.get("beta")
    beta_arr = None if beta is None else np.asarray(beta, dtype=float)
    if kind == GAUSSIAN:
        return ClassSpec(GAUSSIAN,
                         field=MaternSpec(float(entry.get("sigma", 1.0)),
                                          float(entry["rho"]),
                                          float(entry.get("nu", 1.0))),
                         mean=float(entry.get("mean", 0.0)), beta=beta_arr)
    if kind == FIXED_EFFECTS:
        if beta_arr is None:
            raise UsageError(f"class {idx}: fixed-effects class needs beta")
        return ClassSpec(FIXED_EFFECTS, beta=beta_arr)
    return ClassSpec(CONSTANT, mean=float(entry.get("mean", 0.0)),
                     fixed=bool(entry.get("fixed", True)))


def build_model_from_config(cfg: dict,
                            covariates: Optional[np.ndarray] = None) -> LscpModel:
    try:
        level_cfg = cfg["level"]
        level = LevelSpec(
            field=MaternSpec(1.0, float(level_cfg["rho"]),
                             float(level_cfg.get("nu", 1.0))),
            mean=float(level_cfg.get("mean", 0.0)),
            beta=(None if level_cfg.get("beta") is None
                  else np.asarray(level_cfg["beta"], dtype=float)))
        classes = tuple(_class_from_config(entry, i)
                        for i, entry in enumerate(cfg["classes"]))
        return LscpModel(
            level=level,
            thresholds=Thresholds(tuple(float(c) for c in
                                        cfg.get("thresholds", ()))),
            sigma_eps=float(cfg.get("sigma_eps", 0.0)),
            classes=classes,
            covariates=covariates)
    except UsageError:
        raise
    except KeyError as exc:
        raise UsageError(f"config missing required key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad model config: {exc}") from None


def load_covariate_stack(cfg: dict, lattice: Lattice):
    """Covariate stack referenced by the config, if any."""
    entry = cfg.get("covariates")
    if entry is None:
        return None, None
    path = entry["path"] if isinstance(entry, dict) else entry
    try:
        with np.load(path, allow_pickle=False) as archive:
            stack = archive["stack"]
            names = [str(n) for n in archive["names"]] if "names" in archive \
                else None
    except FileNotFoundError:
        raise DataError(f"covariate stack not found: {path}") from None
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: bad covariate archive: {exc}") from None
    if stack.shape[1:] != lattice.shape:
        raise DataError(
            f"{path}: covariate stack shape {stack.shape} does not match "
            f"the {lattice.ny}x{lattice.nx} lattice")
    return stack, names


# ---------------------------------------------------------------------------
# run directories and delimited writers

def resolve_out(arg: Optional[str], command: str) -> Path:
    if arg:
        out = Path(arg)
    else:
        root = os.environ.get("LSCOX_OUTPUT_ROOT", "runs")
        out = Path(root) / command
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_manifest(out: Path, command: str, cfg: dict, seed,
                   extra: Optional[dict] = None) -> None:
    manifest = {
        "command": command,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seed": seed,
        "versions": {
            "package": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    if extra:
        manifest.update(extra)
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_pattern_csv(path, pattern: PointPattern) -> None:
    with open(path, "w") as fh:
        fh.write("x,y\n")
        for x, y in pattern.points:
            fh.write(f"{x:.10g},{y:.10g}\n")


def write_cells_csv(path, grid: np.ndarray, column: str,
                    fmt: str = "{:.10g}") -> None:
    """(row, col, value) CSV over all lattice cells."""
    with open(path, "w") as fh:
        fh.write(f"row,col,{column}\n")
        ny, nx = grid.shape
        for i in range(ny):
            for j in range(nx):
                fh.write(f"{i},{j},{fmt.format(grid[i, j])}\n")


def read_counts_csv(path, lattice: Lattice) -> CountGrid:
    try:
        body = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except OSError:
        raise DataError(f"counts file not found: {path}") from None
    except ValueError as exc:
        raise DataError(f"{path}: malformed counts CSV: {exc}") from None
    counts = np.zeros(lattice.shape, dtype=np.int64)
    try:
        rows = body[:, 0].astype(int)
        cols = body[:, 1].astype(int)
        counts[rows, cols] = body[:, 2].astype(int)
    except IndexError:
        raise DataError(f"{path}: counts indices exceed the "
                        f"{lattice.ny}x{lattice.nx} lattice") from None
    return CountGrid(counts, lattice, n_outside=0)


def write_curve_csv(path, header: list, columns: list) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(",".join(f"{v:.10g}" for v in row) + "\n")


def load_observed(args, lattice: Lattice) -> tuple[PointPattern, CountGrid]:
    from .data import load_pattern
    if getattr(args, "data", None):
        try:
            pattern = load_pattern(args.data)
        except FileNotFoundError:
            raise DataError(f"pattern file not found: {args.data}") from None
        except ValueError as exc:
            raise DataError(str(exc)) from None
        return pattern, bin_points(pattern, lattice)
    if getattr(args, "counts", None):
        counts = read_counts_csv(args.counts, lattice)
        return None, counts
    raise UsageError("either --data or --counts is required")


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args) -> int:
    from . import report
    from .simulate import SimulationOverflow, preset_examples, simulate_realization

    if args.preset:
        try:
            model = preset_examples(args.preset)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        cfg = {"preset": args.preset, "window": [1.0, 1.0],
               "nx": args.nx or 32, "ny": args.ny or 32,
               "margin_level": 0.45, "margin_class": 0.3}
    else:
        if not args.config:
            raise UsageError("simulate needs --preset or --config")
        cfg = apply_overrides(load_config(args.config), args.set)
        lattice_probe = build_lattice_from_config(cfg)
        stack, _ = load_covariate_stack(cfg, lattice_probe)
        model = build_model_from_config(cfg, covariates=stack)
    if args.nx:
        cfg["nx"] = args.nx
    if args.ny:
        cfg["ny"] = args.ny
    lattice = build_lattice_from_config(cfg)
    out = resolve_out(args.out, "simulate")
    rng = np.random.default_rng(args.seed)
    _progress(f"simulating on a {lattice.nx}x{lattice.ny} lattice")
    try:
        real = simulate_realization(model, lattice, rng, order=args.order)
    except SimulationOverflow as exc:
        raise NumericalError(str(exc)) from None

    write_pattern_csv(out / "pattern.csv", real.pattern)
    write_cells_csv(out / "counts.csv", real.counts.counts, "count", "{:d}")
    write_cells_csv(out / "gamma.csv", real.gamma + 1, "class", "{:d}")
    write_cells_csv(out / "log_intensity.csv", real.log_intensity,
                    "log_intensity")
    window = (lattice.window_width, lattice.window_height)
    report.save_pattern_figure(out / "pattern.png", real.pattern, window,
                               f"simulated pattern (n={len(real.pattern)})")
    report.save_raster_figure(out / "log_intensity.png", real.log_intensity,
                              lattice, "log intensity")
    report.save_raster_figure(out / "gamma.png", real.gamma + 1.0, lattice,
                              "class labels", cmap="tab10")
    write_manifest(out, "simulate", cfg, args.seed,
                   {"outputs": ["pattern.csv", "counts.csv", "gamma.csv",
                                "log_intensity.csv"],
                    "n_points": len(real.pattern)})
    _progress(f"wrote {out}")
    return 0


def _fit_settings(cfg: dict, args) -> dict:
    fit_cfg = dict(cfg.get("fit", {}))
    if args.iters is not None:
        fit_cfg["n_iter"] = args.iters
    if args.burn_in is not None:
        fit_cfg["burn_in"] = args.burn_in
    if args.thin is not None:
        fit_cfg["thinning"] = args.thin
    if args.seed is not None:
        fit_cfg["seed"] = args.seed
    fit_cfg.setdefault("n_iter", 2000)
    fit_cfg.setdefault("thinning", 10)
    fit_cfg.setdefault("seed", 0)
    return fit_cfg


def run_fit(cfg: dict, counts: CountGrid, lattice: Lattice, fit_cfg: dict):
    from .inference.chain import run_chain
    from .inference.priors import PriorConfig
    from .inference.state import FitSpec

    stack, _ = load_covariate_stack(cfg, lattice)
    model = build_model_from_config(cfg, covariates=stack)
    priors = PriorConfig(**cfg.get("priors", {}))
    spec_kwargs = {k: cfg["fit"][k] for k in
                   ("estimate_thresholds", "estimate_nugget",
                    "estimate_level_range", "estimate_level_mean",
                    "interweave")
                   if "fit" in cfg and k in cfg["fit"]}
    try:
        fit = FitSpec(model, lattice, priors=priors,
                      order=cfg.get("order"), **spec_kwargs)
        return run_chain(fit, counts, n_iter=int(fit_cfg["n_iter"]),
                         burn_in=fit_cfg.get("burn_in"),
                         thinning=int(fit_cfg["thinning"]),
                         seed=fit_cfg["seed"])
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        raise NumericalError(f"chain failed: {exc}") from None


def _save_fit_outputs(out: Path, result, cfg: dict, fit_cfg: dict) -> None:
    from . import report
    from .inference.chain import posterior_summaries

    lattice = result.fit.lattice
    # one CSV per parameter block, columns named after the parameters
    blocks: dict[str, list] = {}
    for name in result.names:
        if name == "sigma_eps" or name.startswith("c_") or \
                name.split("_")[1] == "0":
            group = "level"
        else:
            group = f"class_{name.split('_')[1]}"
        blocks.setdefault(group, []).append(name)
    for block_name, names in blocks.items():
        cols = [result.theta_column(n) for n in names]
        write_curve_csv(out / f"theta_{block_name}.csv", names, cols)

    summary = posterior_summaries(result)
    with open(out / "summary.json", "w") as fh:
        json.dump({
            "parameters": summary["parameters"],
            "acceptance": summary["acceptance"],
            "diagnostics": {k: v for k, v in result.diagnostics.items()
                            if k != "ess"},
            "ess": result.diagnostics["ess"],
            "meta": {k: v for k, v in result.meta.items()
                     if k != "runtime_s"},
        }, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")

    write_cells_csv(out / "mean_log_intensity.csv",
                    summary["mean_log_intensity"], "mean_log_intensity")
    for k in range(result.gamma_prob.shape[0]):
        write_cells_csv(out / f"class_probability_{k + 1}.csv",
                        result.gamma_prob[k], "probability")

    arrays = {
        "log_intensity": result.log_intensity,
        "gammas": result.gammas,
        "field_theta_idx": result.field_theta_idx,
        "window": np.array([lattice.window_width, lattice.window_height]),
        "grid": np.array([lattice.nx, lattice.ny]),
        "margins": np.array([lattice.margin_level, lattice.margin_class]),
    }
    if result.level_fields is not None:
        arrays["level_fields"] = result.level_fields
    for k, values in result.class_fields.items():
        arrays[f"class_fields_{k}"] = values
    np.savez_compressed(out / "snapshots.npz", **arrays)

    report.save_trace_figure(out / "traces.png", result.names, result.theta,
                             "parameter traces (thinned)")
    report.save_raster_figure(out / "mean_log_intensity.png",
                              summary["mean_log_intensity"], lattice,
                              "posterior mean log intensity")
    for k in range(result.gamma_prob.shape[0]):
        report.save_raster_figure(out / f"class_probability_{k + 1}.png",
                                  result.gamma_prob[k], lattice,
                                  f"posterior P(class {k + 1})")


def cmd_fit(args) -> int:
    cfg = apply_overrides(load_config(args.config), args.set)
    lattice = build_lattice_from_config(cfg)
    _, counts = load_observed(args, lattice)
    fit_cfg = _fit_settings(cfg, args)
    out = resolve_out(args.out, "fit")
    _progress(f"fitting: {fit_cfg['n_iter']} iterations on "
              f"{lattice.nx}x{lattice.ny} ({counts.total} points)")
    result = run_fit(cfg, counts, lattice, fit_cfg)
    _save_fit_outputs(out, result, cfg, fit_cfg)
    write_manifest(out, "fit", cfg, fit_cfg["seed"],
                   {"fit_settings": fit_cfg,
                    "acceptance": result.acceptance,
                    "n_kept": result.meta["n_kept"],
                    "outputs": sorted(p.name for p in out.iterdir())})
    _progress(f"wrote {out}")
    return 0


def cmd_moments(args) -> int:
    from . import report
    from .moments import empty_space_mc, k_function, pair_correlation, rho1

    cfg = apply_overrides(load_config(args.config), args.set)
    lattice = build_lattice_from_config(cfg)
    model = build_model_from_config(cfg)
    out = resolve_out(args.out, "moments")
    r_max = args.r_max or min(lattice.window_width, lattice.window_height) / 4
    r = np.linspace(0, r_max, args.points + 1)[1:]
    _progress(f"evaluating product-density curves at {r.size} distances")
    try:
        g = np.array([pair_correlation((0.0, 0.0), (float(ri), 0.0), model)
                      for ri in r])
        k = k_function(r, model)
        intensity = rho1(model)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    write_curve_csv(out / "pair_correlation.csv", ["r", "g"], [r, g])
    write_curve_csv(out / "k_function.csv", ["r", "k"], [r, k])
    curves = {"pair correlation": g}
    outputs = ["pair_correlation.csv", "k_function.csv"]

    if args.f_sims:
        rng = np.random.default_rng(args.seed)
        center = (lattice.window_width / 2.0, lattice.window_height / 2.0)
        f_vals, f_se = empty_space_mc(center, r, model, lattice,
                                      n_sims=args.f_sims, rng=rng)
        write_curve_csv(out / "empty_space.csv", ["r", "f", "se"],
                        [r, f_vals, f_se])
        outputs.append("empty_space.csv")
        report.save_curve_figure(out / "empty_space.png", r,
                                 {"F": f_vals}, "empty-space function")
    report.save_curve_figure(out / "pair_correlation.png", r, curves,
                             "pair correlation")
    report.save_curve_figure(out / "k_function.png", r, {"K": k},
                             "second-order cumulative")
    write_manifest(out, "moments", cfg, args.seed,
                   {"intensity": intensity, "outputs": outputs})
    _progress(f"wrote {out}")
    return 0


def _load_snapshots(fit_dir: str):
    from .summaries import PosteriorIntensitySamples
    path = Path(fit_dir) / "snapshots.npz"
    if not path.exists():
        raise DataError(f"no snapshots found at {path}")
    with np.load(path) as archive:
        window = archive["window"]
        grid = archive["grid"]
        margins = archive["margins"]
        lattice = build_lattice((float(window[0]), float(window[1])),
                                int(grid[0]), int(grid[1]),
                                margin_level=float(margins[0]),
                                margin_class=float(margins[1]))
        return PosteriorIntensitySamples(lattice,
                                         archive["log_intensity"].astype(float))


def cmd_envelope(args) -> int:
    from . import report
    from .summaries import envelope
    if bool(args.fit_dir) == bool(args.config):
        raise UsageError("envelope needs exactly one of --fit or --config")
    if args.fit_dir:
        source = _load_snapshots(args.fit_dir)
        lattice = source.lattice
        cfg = {"fit_dir": str(args.fit_dir)}
    else:
        cfg = apply_overrides(load_config(args.config), args.set)
        lattice = build_lattice_from_config(cfg)
        source = build_model_from_config(cfg)
    pattern, _ = load_observed(args, lattice)
    if pattern is None:
        raise UsageError("envelope needs --data with point locations")
    out = resolve_out(args.out, "envelope")
    r = None
    if args.r_max:
        r = np.linspace(0, args.r_max, args.points + 1)[1:]
    rng = np.random.default_rng(args.seed)
    _progress(f"computing {args.stat} envelope from {args.sims} simulations")
    try:
        env = envelope(pattern, source, statistic=args.stat,
                       n_sims=args.sims, level=args.level, r=r, rng=rng,
                       lattice=lattice, threads=args.threads)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    write_curve_csv(out / f"envelope_{args.stat}.csv",
                    ["r", "obs", "mean", "lo", "hi"],
                    [env.r, env.observed, env.mean, env.lo, env.hi])
    report.save_curve_figure(
        out / f"envelope_{args.stat}.png", env.r,
        {"observed": env.observed, "mean": env.mean},
        f"{args.stat} envelope ({env.level:.0%}, {env.n_sims} sims)",
        band=(env.lo, env.hi))
    write_manifest(out, "envelope", cfg, args.seed,
                   {"statistic": args.stat, "n_sims": args.sims,
                    "level": args.level,
                    "fraction_inside": env.fraction_inside(),
                    "outputs": [f"envelope_{args.stat}.csv"]})
    _progress(f"wrote {out}")
    return 0


def cmd_summarize(args) -> int:
    from . import report
    fit_dir = Path(args.fit_dir)
    manifest_path = fit_dir / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"no fit manifest at {manifest_path}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    summary_path = fit_dir / "summary.json"
    if not summary_path.exists():
        raise DataError(f"no summary at {summary_path}")
    with open(summary_path) as fh:
        summary = json.load(fh)
    out = resolve_out(args.out, "summarize")
    samples = _load_snapshots(fit_dir)
    lattice = samples.lattice
    mean_li = samples.log_intensity.mean(axis=0)
    report.save_raster_figure(out / "snapshot_mean_log_intensity.png",
                              mean_li, lattice,
                              "mean log intensity over stored snapshots")
    lines = ["parameter,mean,sd,lo,hi,ess"]
    for name, stats in summary["parameters"].items():
        lines.append(f"{name},{stats['mean']:.10g},{stats['sd']:.10g},"
                     f"{stats['lo']:.10g},{stats['hi']:.10g},"
                     f"{stats['ess']:.10g}")
    (out / "parameters.csv").write_text("\n".join(lines) + "\n")
    write_manifest(out, "summarize", manifest.get("config", {}),
                   manifest.get("seed"),
                   {"source_fit": str(fit_dir),
                    "outputs": ["parameters.csv"]})
    _progress(f"wrote {out}")
    return 0


def cmd_preprocess(args) -> int:
    from . import report
    from .data import bicubic_to_lattice, load_raster, sobel_slope, \
        standardize, vif_prune

    if not args.raster and not args.elevation:
        raise UsageError("preprocess needs --raster and/or --elevation")
    window = (args.window[0], args.window[1])
    lattice = build_lattice(window, args.nx, args.ny)
    out = resolve_out(args.out, "preprocess")

    names: list = []
    layers: list = []

    def add_raster(name: str, raster) -> None:
        try:
            layers.append(bicubic_to_lattice(raster, lattice))
        except ValueError as exc:
            raise DataError(f"{name}: {exc}") from None
        names.append(name)

    for item in args.raster or []:
        if "=" not in item:
            raise UsageError(f"--raster expects name=path, got {item!r}")
        name, path = item.split("=", 1)
        try:
            raster = load_raster(path, cellsize=args.cellsize)
        except FileNotFoundError:
            raise DataError(f"raster file not found: {path}") from None
        except ValueError as exc:
            raise DataError(str(exc)) from None
        add_raster(name, raster)
    if args.elevation:
        try:
            elev = load_raster(args.elevation, cellsize=args.cellsize)
        except FileNotFoundError:
            raise DataError(
                f"elevation file not found: {args.elevation}") from None
        except ValueError as exc:
            raise DataError(str(exc)) from None
        add_raster("elev", elev)
        slope_raster = type(elev)(sobel_slope(elev.values, elev.cellsize),
                                  elev.cellsize, elev.x0, elev.y0)
        add_raster("slope", slope_raster)

    stack = np.stack(layers)
    try:
        standardized, scale = standardize(stack, names)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    _progress(f"standardized {len(names)} covariates; pruning")
    if len(names) >= 2:
        retained, trace = vif_prune(standardized, threshold=args.vif_threshold,
                                    names=names)
    else:
        retained, trace = [0], []
    kept_names = [names[i] for i in retained]
    kept = standardized[retained]

    np.savez_compressed(out / "stack.npz", stack=kept,
                        names=np.array(kept_names))
    for i, name in enumerate(kept_names):
        write_cells_csv(out / f"covariate_{name}.csv", kept[i], name)
        report.save_raster_figure(out / f"covariate_{name}.png", kept[i],
                                  lattice, f"{name} (standardized)")
    with open(out / "preprocess.json", "w") as fh:
        json.dump({
            "names": names,
            "retained": kept_names,
            "removed": [{"name": n, "vif": v} for n, v in trace],
            "means": scale.means.tolist(),
            "sds": scale.sds.tolist(),
            "vif_threshold": args.vif_threshold,
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    cfg = {"window": list(window), "nx": args.nx, "ny": args.ny,
           "rasters": args.raster or [], "elevation": args.elevation,
           "vif_threshold": args.vif_threshold}
    write_manifest(out, "preprocess", cfg, None,
                   {"outputs": ["stack.npz", "preprocess.json"]})
    _progress(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# parser and dispatch

def _build_parser() -> _Parser:
    parser = _Parser(prog="lscox", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    def common(p):
        p.add_argument("--out", help="run directory (default: "
                                     "$LSCOX_OUTPUT_ROOT/<command>)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--set", action="append", default=[], metavar="K=V",
                       help="config override, dotted key paths")

    p = sub.add_parser("simulate", help="draw a realization of a model")
    common(p)
    p.add_argument("--preset", help="named example configuration")
    p.add_argument("--config", help="model config JSON")
    p.add_argument("--nx", type=int)
    p.add_argument("--ny", type=int)
    p.add_argument("--order", type=int, help="spectral truncation order")

    p = sub.add_parser("fit", help="run the posterior sampler")
    common(p)
    p.add_argument("--config", required=True)
    p.add_argument("--data", help="point pattern CSV (x,y)")
    p.add_argument("--counts", help="binned counts CSV (row,col,count)")
    p.add_argument("--iters", type=int)
    p.add_argument("--burn-in", type=int, dest="burn_in")
    p.add_argument("--thin", type=int)
    p.add_argument("--threads", type=int, default=0,
                   help="worker threads for parallel stages (0 = all cores)")

    p = sub.add_parser("moments", help="product-density curves of a model")
    common(p)
    p.add_argument("--config", required=True)
    p.add_argument("--r-max", type=float, dest="r_max")
    p.add_argument("--points", type=int, default=40)
    p.add_argument("--f-sims", type=int, default=200, dest="f_sims",
                   help="simulations for the empty-space curve (0 skips it)")

    p = sub.add_parser("envelope", help="posterior-predictive envelope test")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--fit", dest="fit_dir", help="fit run directory")
    p.add_argument("--config", help="model config JSON (instead of --fit)")
    p.add_argument("--stat", choices=["L", "g", "F"], default="L")
    p.add_argument("--sims", type=int, default=200)
    p.add_argument("--level", type=float, default=0.9)
    p.add_argument("--r-max", type=float, dest="r_max")
    p.add_argument("--points", type=int, default=40)
    p.add_argument("--threads", type=int, default=0)

    p = sub.add_parser("summarize", help="posterior summaries of a saved fit")
    common(p)
    p.add_argument("--fit", dest="fit_dir", required=True)

    p = sub.add_parser("preprocess", help="rasters to a standardized, "
                                          "pruned covariate stack")
    common(p)
    p.add_argument("--raster", action="append", metavar="NAME=PATH")
    p.add_argument("--elevation", help="elevation raster; adds elev and "
                                       "slope covariates")
    p.add_argument("--cellsize", type=float,
                   help="cell size for headerless rasters")
    p.add_argument("--window", type=float, nargs=2, required=True,
                   metavar=("W", "H"))
    p.add_argument("--nx", type=int, required=True)
    p.add_argument("--ny", type=int, required=True)
    p.add_argument("--vif-threshold", type=float, default=5.0,
                   dest="vif_threshold")
    return parser


_HANDLERS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "moments": cmd_moments,
    "envelope": cmd_envelope,
    "summarize": cmd_summarize,
    "preprocess": cmd_preprocess,
}


def cli_dispatch(argv) -> int:
    """Parse and run; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_usage(sys.stderr)
            return 1
        if getattr(args, "threads", 1) == 0:
            args.threads = os.cpu_count() or 1
        return _HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
