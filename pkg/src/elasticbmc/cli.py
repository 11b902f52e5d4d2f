"""Command-line front end: simulate, align, calibrate, report.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .align import DecomposedEnsemble, decompose_ensemble
from .calibrate import MCMCConfig, MCMCError, PosteriorSamples, effective_sample_size, mcmc_sample, \
    posterior_predict, prior_spec
from .emulator import Emulator, cross_validate
from .grid import GridFunction
from .io import DataError, read_curves, read_json, read_table, write_curves, write_json, write_table
from .phase import InjectivityError, ShootingVector, WarpingFunction
from .report import band_coverage, hpd_1d, hpd_2d, marginal_histogram, predictive_bands
from .synthetic import SIMULATORS
from .workflow import ALIGN_DEFAULTS, SHIFT_BREAKPOINTS, assemble, example_data, example_priors, stage_seeds

log = logging.getLogger("elasticbmc")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "command": None,
    "example": 1,
    "seed": 0,
    "data_dir": None,
    "simulate": {"n_runs": None, "n_grid": 101},
    "align": {**ALIGN_DEFAULTS, "reference": "observation", "n_jobs": 1},
    "emulator": {"variance_target": 0.995, "surrogate": "gp", "cv_folds": 0},
    "calibrate": {
        "mode": "emulator",
        "elastic": True,
        "simulator": None,
        "priors": None,
        "discrepancy": None,
        "discrepancy_sd": 1.0,
        "breakpoints": list(SHIFT_BREAKPOINTS),
        "active_segment": 1,
        "emulator_variance": "loo",
        "n_iter": 20000,
        "n_burn": 5000,
        "proposal_scale_init": 0.05,
        "thin": 1,
        "n_predict": 500,
    },
    "report": {"bins": 40, "mass": 0.95, "level": 0.95},
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {path}{k!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key {path}{k!r} must be an object")
            out[k] = _merge(base[k], v, f"{path}{k}.")
        else:
            out[k] = v
    return out


def resolve_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                user = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        if user.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {user.get('schema_version')}; "
                              f"expected {SCHEMA_VERSION}")
        cfg = _merge(cfg, user)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.example is not None:
        cfg["example"] = args.example
    if getattr(args, "mode", None) is not None:
        cfg["calibrate"]["mode"] = args.mode
    if getattr(args, "data", None) is not None:
        cfg["data_dir"] = args.data
    cfg["command"] = args.command
    if cfg["example"] not in (1, 2, None):
        raise ConfigError("example must be 1, 2 or null")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a nonnegative integer")
    if cfg["calibrate"]["mode"] not in ("emulator", "direct"):
        raise ConfigError("mode must be 'emulator' or 'direct'")
    return cfg


def _out_dir(path) -> Path:
    out = Path(path)
    if not out.is_dir():
        raise ConfigError(f"output directory does not exist: {out}")
    return out


def _data_dir(cfg, out: Path) -> Path:
    return Path(cfg["data_dir"]) if cfg["data_dir"] else out


# ---------------------------------------------------------------- commands


def cmd_simulate(cfg, out: Path) -> None:
    if cfg["example"] is None:
        raise ConfigError("simulate needs an example (1 or 2)")
    sim = cfg["simulate"]
    obs, design, curves, truth, _ = example_data(cfg["example"], cfg["seed"], sim["n_runs"], sim["n_grid"])
    t = obs.grid.points
    names = [f"run_{i:03d}" for i in range(len(curves))]
    write_curves(out / "curves.csv", t, names, [c.values for c in curves])
    write_curves(out / "observation.csv", t, ["observation"], [obs.values])
    write_table(out / "design.csv", ["run"] + [f"u{j}" for j in range(design.shape[1])],
                [[n, *map(float, row)] for n, row in zip(names, design)])
    write_json(out / "truth.json", {"example": cfg["example"], "truth": list(truth), "seed": cfg["seed"],
                                    "design_seed": stage_seeds(cfg["seed"]).design})


def _load_inputs(data: Path):
    grid, names, Y = read_curves(data / "curves.csv")
    ogrid, _, Z = read_curves(data / "observation.csv")
    if not ogrid.same_as(grid):
        raise DataError("observation and curves are on different grids")
    header, D = _read_design(data / "design.csv")
    if D.shape[0] != len(names):
        raise DataError("design rows do not match the number of curves")
    return grid, names, Y, GridFunction(grid, Z[0]), D


def _read_design(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"design file not found: {path}")
    import csv

    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    try:
        D = np.array([r[1:] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: malformed design ({exc})") from None
    return rows[0][1:], D.reshape(len(rows) - 1, -1)


def _align_kw(cfg) -> dict:
    a = cfg["align"]
    return {k: a[k] for k in ("lam", "resolution", "polish", "nbhd")}


def cmd_align(cfg, out: Path) -> None:
    data = _data_dir(cfg, out)
    grid, names, Y, obs, D = _load_inputs(data)
    ref_id = cfg["align"]["reference"]
    if ref_id == "observation":
        ref = obs
    elif ref_id in names:
        ref = GridFunction(grid, Y[names.index(ref_id)])
    else:
        raise DataError(f"reference id {ref_id!r} not found among the curves")
    curves = [GridFunction(grid, y) for y in Y]
    dec = decompose_ensemble(ref, curves, D, n_jobs=cfg["align"]["n_jobs"], **_align_kw(cfg))
    _write_decomposition(out, grid, names, dec, ref_id, cfg)


def _write_decomposition(out, grid, names, dec, ref_id, cfg):
    write_curves(out / "aligned.csv", grid.points, names, dec.aligned_matrix())
    unit = grid.normalized().points
    write_curves(out / "warps.csv", unit, names, dec.warp_matrix())
    write_curves(out / "shooting.csv", unit, names, dec.shooting_matrix())
    write_json(out / "align_meta.json", {"reference": ref_id, "names": names, **_align_kw(cfg)})


def _cached_decomposition(data: Path, cfg, grid, names, obs, D):
    meta_path = data / "align_meta.json"
    if not meta_path.is_file():
        return None
    meta = read_json(meta_path)
    if meta.get("reference") != "observation" or meta.get("names") != names:
        return None
    if any(meta.get(k) != v for k, v in _align_kw(cfg).items()):
        return None
    _, _, A = read_curves(data / "aligned.csv")
    ugrid, _, W = read_curves(data / "warps.csv")
    _, _, V = read_curves(data / "shooting.csv")
    return DecomposedEnsemble(
        obs, [GridFunction(grid, a) for a in A], [WarpingFunction(ugrid, w) for w in W],
        [ShootingVector(ugrid, v) for v in V], D, float(meta["lam"]),
    )


def _priors(cfg, D):
    spec = cfg["calibrate"]["priors"]
    if spec is not None:
        try:
            return [prior_spec(p[0], *p[1:]) for p in spec]
        except (TypeError, ValueError, IndexError) as exc:
            raise ConfigError(f"bad prior specification: {exc}") from None
    if cfg["example"] is not None:
        return example_priors(cfg["example"])
    return [prior_spec("uniform", lo, hi) for lo, hi in zip(D.min(axis=0), D.max(axis=0))]


def cmd_calibrate(cfg, out: Path) -> None:
    t_start = time.time()
    data = _data_dir(cfg, out)
    c = cfg["calibrate"]
    seeds = stage_seeds(cfg["seed"])
    grid, names, Y, obs, D = _load_inputs(data)
    priors = _priors(cfg, D)
    if len(priors) != D.shape[1]:
        raise ConfigError(f"{len(priors)} priors for {D.shape[1]} design columns")
    simulator = None
    sim_name = c["simulator"] or (f"example{cfg['example']}" if cfg["example"] else None)
    if c["mode"] == "direct":
        if sim_name not in SIMULATORS:
            raise ConfigError("direct mode needs a registered simulator "
                              f"(one of {sorted(SIMULATORS)})")
        simulator = SIMULATORS[sim_name]
    disc = c["discrepancy"]
    if disc is None:
        disc = cfg["example"] == 2
    curves = [GridFunction(grid, y) for y in Y]
    dec = None
    if c["mode"] == "emulator" and c["elastic"]:
        dec = _cached_decomposition(data, cfg, grid, names, obs, D)
    try:
        built = assemble(
            obs, curves, D, priors, emulator_seed=seeds.emulator, mode=c["mode"], simulator=simulator,
            elastic=c["elastic"], discrepancy=disc, discrepancy_sd=c["discrepancy_sd"],
            breakpoints=tuple(c["breakpoints"]), active_segment=c["active_segment"],
            emulator_variance=c["emulator_variance"],
            variance_target=cfg["emulator"]["variance_target"], surrogate=cfg["emulator"]["surrogate"],
            decomposition=dec, n_jobs=cfg["align"]["n_jobs"], **_align_kw(cfg),
        )
    except KeyError as exc:
        raise ConfigError(f"unknown option {exc}") from None
    prob = built.problem
    if built.decomposition is not None and dec is None:
        _write_decomposition(out, grid, names, built.decomposition, "observation", cfg)
    for tag, em in (("aligned", built.emulator_aligned), ("shooting", built.emulator_shooting)):
        if em is not None:
            em.save(out / f"emulator_{tag}.json")
    folds = cfg["emulator"]["cv_folds"]
    if folds and built.decomposition is not None:
        rep = cross_validate(D, built.decomposition.aligned_matrix(), folds, seeds.emulator, grid=grid)
        rep.to_csv(out / "cv_aligned.csv")
        rep = cross_validate(D, built.decomposition.shooting_matrix(), folds, seeds.emulator,
                             grid=grid.normalized())
        rep.to_csv(out / "cv_shooting.csv")

    mc = MCMCConfig(n_iter=c["n_iter"], n_burn=c["n_burn"], seed=seeds.mcmc,
                    proposal_scale_init=c["proposal_scale_init"], thin=c["thin"])
    samples = mcmc_sample(prob, mc)
    samples.to_csv(out / "chain.csv")
    pred = posterior_predict(samples, prob, n_draws=c["n_predict"], seed=seeds.predict)
    write_curves(out / "predictive.csv", grid.points, [f"draw_{i:04d}" for i in range(len(pred.curves))],
                 pred.matrix())
    if not (out / "observation.csv").exists():
        write_curves(out / "observation.csv", grid.points, ["observation"], [obs.values])
    diag = {
        "seed": cfg["seed"],
        "stage_seeds": vars(seeds),
        "acceptance_rates": samples.acceptance_rates,
        "ess": {n: effective_sample_size(samples.theta[:, j]) for j, n in enumerate(samples.param_names)},
        "n_draws": samples.n_draws,
        "predictive_redraws": pred.n_resampled,
        "priors": [p.to_dict() for p in prob.priors],
        "param_names": samples.param_names,
        "mode": c["mode"],
        "elastic": c["elastic"],
        "discrepancy": bool(disc and c["elastic"]),
        "runtime_s": round(time.time() - t_start, 3),
        "version": __version__,
    }
    write_json(out / "diagnostics.json", diag)


def cmd_report(cfg, out: Path) -> None:
    data = _data_dir(cfg, out)
    r = cfg["report"]
    diag = read_json(data / "diagnostics.json")
    n_theta = len(diag["param_names"])
    samples = PosteriorSamples.from_csv(data / "chain.csv", n_theta)
    if samples.n_draws < 2:
        raise DataError("chain is empty")
    supports = [prior_spec(p["kind"], *p["params"]).support for p in diag["priors"]]
    names = samples.param_names

    rows = []
    for j, n in enumerate(names):
        edges, dens = marginal_histogram(samples.theta[:, j], r["bins"], supports[j])
        rows += [[n, float(a), float(b), float(d)] for a, b, d in zip(edges[:-1], edges[1:], dens)]
    write_table(out / "marginals.csv", ["param", "bin_lo", "bin_hi", "density"], rows)

    hpd, areas, crows = {}, {}, []
    for j, n in enumerate(names):
        if np.ptp(samples.theta[:, j]) == 0:
            continue
        h = hpd_1d(samples.theta[:, j], supports[j], r["mass"])
        hpd[n] = list(h.bounds())
    for a in range(n_theta):
        for b in range(a + 1, n_theta):
            x, y = samples.theta[:, a], samples.theta[:, b]
            if np.ptp(x) == 0 or np.ptp(y) == 0:
                continue
            reg = hpd_2d(x, y, supports[a], supports[b], r["mass"])
            areas[f"{names[a]}:{names[b]}"] = reg.area
            for k, line in enumerate(reg.contours()):
                crows += [[names[a], names[b], k, float(px), float(py)] for px, py in line]
    write_table(out / "contours.csv", ["param_x", "param_y", "piece", "x", "y"], crows)

    grid, _, P = read_curves(data / "predictive.csv")
    _, _, Z = read_curves(data / "observation.csv")
    lo, med, hi = predictive_bands(P, r["level"])
    write_table(out / "bands.csv", ["t", "lower", "median", "upper", "observed"],
                [[float(v) for v in row] for row in zip(grid.points, lo, med, hi, Z[0])])
    summary = {
        "level": r["level"],
        "coverage": band_coverage(Z[0], lo, hi),
        "hpd_mass": r["mass"],
        "hpd_intervals": hpd,
        "hpd_region_area": areas,
        "posterior_mean": dict(zip(names, samples.theta.mean(axis=0).tolist())),
    }
    truth_path = data / "truth.json"
    if truth_path.is_file():
        truth = read_json(truth_path)["truth"]
        summary["truth_in_hpd"] = {
            n: bool(hpd_1d(samples.theta[:, j], supports[j], r["mass"]).contains(truth[j]))
            for j, n in enumerate(names) if j < len(truth) and n in hpd
        }
    write_json(out / "report.json", summary)


COMMANDS = {"simulate": cmd_simulate, "align": cmd_align, "calibrate": cmd_calibrate, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="elasticbmc", description="Elastic Bayesian model calibration.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="top-level seed")
        p.add_argument("--out", required=True, help="existing output directory")
        p.add_argument("--example", type=int, choices=(1, 2), help="synthetic example")
        p.add_argument("--data", help="input directory (default: --out)")
        p.add_argument("--mode", choices=("emulator", "direct"), help="forward model")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = _out_dir(args.out)
        write_json(out / "resolved_config.json", cfg)
        COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MCMCError, np.linalg.LinAlgError, FloatingPointError, InjectivityError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
