"""Command-line entry point.

Configuration layers, lowest to highest precedence: subcommand defaults, the
``--config`` JSON document, ``FPACDMA_<KEY>`` environment variables (values
parsed as JSON), then explicit flags.  Keys are flat: experiment fields,
FPA fields (``max_iter``, ``num_flowers``, ...) and GA fields prefixed with
``ga_``.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import json
import logging
import os
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import experiments as ex
from .baselines import GaConfig
from .errors import ConfigurationError
from .fpa import FpaConfig
from .spreading import generate_gold_family

ENV_PREFIX = "FPACDMA_"
SUBCOMMANDS = ("ber-sweep", "capacity", "nearfar", "mse", "stats", "codebook", "selftest")

_EXP_FIELDS = {f.name for f in dataclasses.fields(ex.ExperimentConfig)} - {"fpa", "ga"}
_FPA_FIELDS = {f.name for f in dataclasses.fields(FpaConfig)}
_GA_FIELDS = {"ga_" + f.name for f in dataclasses.fields(GaConfig)}
VALID_KEYS = sorted(_EXP_FIELDS | _FPA_FIELDS | _GA_FIELDS)
_TUPLE_KEYS = {"detectors", "axis_values", "entropy_band", "init_fading_range", "ga_init_fading_range"}

SUBCOMMAND_DEFAULTS = {
    "ber-sweep": dict(exp_id="ber_sweep", axis_name="snr_db", axis_values=(7, 8, 9, 10, 11, 12, 13, 14)),
    "stats": dict(exp_id="ber_sweep", axis_name="snr_db", axis_values=(7, 8, 9, 10, 11, 12, 13, 14)),
    "capacity": dict(exp_id="capacity", axis_name="num_users", axis_values=(2, 4, 6, 8, 10, 12, 14, 16),
                     nearfar_db=0.0, runs=30),
    "nearfar": dict(exp_id="nearfar", axis_name="nearfar_db", axis_values=(0, 5, 10, 15), num_users=4,
                    detectors=("fpa", "mf", "mmse", "decorrelator"), runs=30),
    "mse": dict(exp_id="channel_mse", axis_name="frame_index", axis_values=(0,), num_users=8, nearfar_db=0.0,
                snr_db=12.0, runs=75, detectors=("fpa", "ga")),
}

log = logging.getLogger("fpacdma")


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def build_config(values: dict) -> ex.ExperimentConfig:
    """Validate a flat key-value mapping and assemble an ExperimentConfig."""
    unknown = sorted(set(values) - set(VALID_KEYS))
    if unknown:
        raise ConfigurationError(f"unknown config key(s) {unknown}; valid keys: {', '.join(VALID_KEYS)}")
    vals = {k: tuple(v) if k in _TUPLE_KEYS and isinstance(v, list) else v for k, v in values.items()}
    fpa = FpaConfig(**{k: v for k, v in vals.items() if k in _FPA_FIELDS})
    ga_kw = {k[3:]: v for k, v in vals.items() if k in _GA_FIELDS}
    ga = GaConfig(**ga_kw) if ga_kw else None
    if ga is not None and ga.generations is None and ga.evaluation_budget is None:
        ga = dataclasses.replace(ga, evaluation_budget=fpa.evaluations)
    cfg = ex.ExperimentConfig(fpa=fpa, ga=ga, **{k: v for k, v in vals.items() if k in _EXP_FIELDS})
    family = generate_gold_family(cfg.degree).family_size if cfg.degree in (5, 6, 7) else None
    if family is None:
        raise ConfigurationError(f"degree must be 5, 6 or 7, got {cfg.degree}")
    users = [cfg.num_users] + ([int(v) for v in cfg.axis_values] if cfg.axis_name == "num_users" else [])
    if max(users) > family:
        raise ConfigurationError(f"num_users={max(users)} exceeds the Gold family size {family} for degree {cfg.degree}")
    return cfg


def config_to_dict(cfg: ex.ExperimentConfig) -> dict:
    out = {k: getattr(cfg, k) for k in sorted(_EXP_FIELDS)}
    out.update({k: getattr(cfg.fpa, k) for k in sorted(_FPA_FIELDS)})
    if cfg.ga is not None:
        out.update({"ga_" + k: getattr(cfg.ga, k) for k in (f.name for f in dataclasses.fields(GaConfig))})
    return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}


def load_document(path) -> dict:
    """Read a JSON config document; a run manifest is accepted and its resolved config reused."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError as e:
        raise ConfigurationError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigurationError("config document must be a JSON object")
    if "manifest_version" in doc:
        doc = doc["config"]
    return doc


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):].lower()
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def parse_config(path=None, subcommand: str = "ber-sweep", overrides: dict | None = None, environ=None) -> ex.ExperimentConfig:
    values = dict(SUBCOMMAND_DEFAULTS.get(subcommand, {}))
    if path is not None:
        values.update(load_document(path))
    values.update(env_overrides(environ))
    values.update(overrides or {})
    return build_config(values)


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def write_manifest(out_dir: Path, subcommand, cfg, config_path, finished=None, started=None) -> dict:
    manifest = {
        "manifest_version": 1,
        "subcommand": subcommand,
        "config_path": None if config_path is None else str(config_path),
        "config": config_to_dict(cfg),
        "tool_version": _version(),
        "base_seed": cfg.base_seed,
        "output_dir": str(out_dir),
        "started": started or dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
        "finished": finished,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def write_runs_csv(records, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["exp_id", "detector", "axis_name", "axis_value", "run", "ber"])
        for r in records:
            for i, b in enumerate(r.run_ber):
                w.writerow([r.exp_id, r.detector, r.axis_name, ex._fmt(r.axis_value), i, ex._fmt(b)])


def read_runs_csv(path) -> list:
    rows = ex.read_records_csv(path)
    cells: dict = {}
    for row in rows:
        key = (row["exp_id"], row["detector"], row["axis_name"], float(row["axis_value"]))
        cells.setdefault(key, []).append((int(row["run"]), float(row["ber"])))
    out = []
    for (exp_id, det, axis, value), runs in sorted(cells.items()):
        runs.sort()
        out.append(ex.ExperimentRecord(exp_id, det, axis, value, np.array([b for _, b in runs]), bits=0))
    return out


def _write_sweep_outputs(out_dir: Path, cfg, records) -> None:
    ex.write_records_csv(records, out_dir / f"{cfg.exp_id}.csv", record_seconds=cfg.record_seconds)
    write_runs_csv(records, out_dir / f"{cfg.exp_id}_runs.csv")
    ex.write_timing_csv(records, out_dir / "timing.csv")
    ex.write_gnuplot_dat(records, out_dir / f"{cfg.exp_id}.dat")
    for r in records:
        if r.note:
            log.warning("%s at %s=%s: %s", r.detector, r.axis_name, r.axis_value, r.note)


def _significance(out_dir: Path, records) -> dict:
    report = ex.run_significance(records)
    ex.write_significance_csv(report, out_dir / "significance.csv")
    ex.write_friedman_csv(report, out_dir / "friedman.csv")
    fr = report.friedman
    return {
        "significance": str(out_dir / "significance.csv"),
        "friedman_ranks": None if fr is None else dict(zip(report.friedman_detectors, map(float, fr.average_ranks))),
        "friedman_p": None if fr is None else fr.p_value,
    }


def cmd_sweep(sub, cfg, out_dir: Path, args) -> dict:
    runner = {"ber-sweep": ex.run_ber_sweep, "capacity": ex.run_capacity, "nearfar": ex.run_nearfar}[sub]
    records = runner(cfg, progress=_progress)
    _write_sweep_outputs(out_dir, cfg, records)
    summary = {"records": str(out_dir / f"{cfg.exp_id}.csv"), "rows": len(records)}
    if sub == "ber-sweep":
        ex.write_records_csv(ex.paper_reported_records(cfg.exp_id), out_dir / "paper_reported.csv", record_seconds=False)
    return summary


def cmd_mse(cfg, out_dir: Path) -> dict:
    trajectories = ex.channel_mse_trajectories(cfg, progress=_progress)
    floor = ex.channel_mse_trajectories(ex.noiseless_frozen_config(cfg))
    records = []
    for name, tr in trajectories.items():
        for n, m in enumerate(tr.mse):
            records.append(ex.ExperimentRecord(cfg.exp_id, name, "frame_index", float(n), np.full(1, np.nan), tr.runs, float(m)))
    ex.write_records_csv(records, out_dir / f"{cfg.exp_id}.csv", record_seconds=False)
    ex.write_gnuplot_dat(records, out_dir / f"{cfg.exp_id}.dat", value="mse_mean")
    return {
        name: {"plateau_index": tr.plateau_index, "final_mse": tr.final, "noiseless_floor": floor[name].final}
        for name, tr in trajectories.items()
    }


def cmd_stats(cfg, out_dir: Path, args) -> dict:
    if args.input:
        records = read_runs_csv(args.input)
    else:
        records = ex.run_ber_sweep(cfg, progress=_progress)
        _write_sweep_outputs(out_dir, cfg, records)
    return _significance(out_dir, records)


def cmd_codebook(args, stream) -> dict:
    cb = generate_gold_family(args.degree)
    lines = ["code," + ",".join(f"c{k}" for k in range(cb.chip_length))]
    for i, row in enumerate(cb.chips.astype(int)):
        lines.append(f"{i + 1}," + ",".join(map(str, row)))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / f"gold_degree{args.degree}.csv").write_text(text)
    else:
        stream.write(text)
    return {"degree": args.degree, "codes": cb.family_size, "chips": cb.chip_length}


def selftest(stream=sys.stderr) -> bool:
    """Fast oracle checks; returns True when all pass."""
    from .baselines import ml_exhaustive
    from .fpa import fpa_detect, levy_step, mantegna_sigma
    from .spreading import correlation_matrix, cyclic_cross_correlation

    checks = []
    rng = np.random.default_rng(12345)

    cb = generate_gold_family(5)
    chips = cb.chips
    vals = set()
    for i in range(cb.family_size):
        for j in range(i + 1, cb.family_size):
            vals.update(cyclic_cross_correlation(chips[i], chips[j]).astype(int).tolist())
    checks.append(("gold three-valued cross-correlation", vals <= {-9, -1, 7}))

    R = correlation_matrix(cb, 4).R
    E = np.ones(4)
    hits = 0
    for _ in range(20):
        a = rng.uniform(0.5, 1.2, 4)
        d = np.where(rng.random(4) < 0.5, -1.0, 1.0)
        z = R @ (a * d) + 0.2 * rng.standard_normal(4)
        _, oracle = ml_exhaustive(z, R, E, a, return_fitness=True)
        res, _ = fpa_detect(z, R, E, FpaConfig(max_iter=200), rng=rng, known_fading=a)
        hits += res.best_fitness >= oracle - 1e-9
    checks.append(("FPA reaches exhaustive ML fitness", hits >= 19))

    cfg = ex.ExperimentConfig(exp_id="selftest", detectors=("mf",), axis_values=(7.0,), runs=5, frame_length=1000,
                              min_bits=10**6, num_users=1, fixed_fading=1.0)
    ber = ex.run_ber_sweep(cfg)[0].ber_mean
    checks.append(("single-user BER matches Q function", abs(ber / ex.single_user_ber(7.0) - 1.0) < 0.15))

    s = np.abs(levy_step(100_000, 1.0, rng))
    tail = np.sort(s)[-1000:]
    slope = 1000 / np.sum(np.log(tail / tail[0]))
    checks.append(("Levy tail exponent near lambda", abs(slope - 1.0) < 0.15 and mantegna_sigma(1.0) == 1.0))

    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}", file=stream)
    return all(ok for _, ok in checks)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config document or a previous run manifest")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int, help="base seed")
    common.add_argument("--workers", type=int, help="worker processes (default: available CPUs)")
    common.add_argument("--min-bits", type=int, dest="min_bits", help="user-1 decisions per axis point")
    common.add_argument("--extended", action="store_true", default=None, help="run >= 12 dB points with 10^6 bits")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="fpacdma", description="DS/CDMA multiuser detection experiments")
    sub = p.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    sub.required = True
    helps = {
        "ber-sweep": "user-1 BER against SNR",
        "capacity": "BER against number of active users",
        "nearfar": "BER against interferer power ratio",
        "mse": "channel estimation MSE over a frame",
        "stats": "Kruskal-Wallis / Friedman significance of a BER sweep",
        "codebook": "dump a Gold signature family",
        "selftest": "run fast oracle checks",
    }
    parsers = {name: sub.add_parser(name, parents=[common], help=helps[name]) for name in SUBCOMMANDS}
    parsers["stats"].add_argument("--input", type=Path, help="per-run BER CSV from a previous sweep")
    parsers["codebook"].add_argument("--degree", type=int, default=5, choices=(5, 6, 7))
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "codebook":
            summary = cmd_codebook(args, sys.stdout)
            if args.out:
                print(json.dumps(summary))
            return 0
        if args.command == "selftest":
            return 0 if selftest() else 1
        overrides = {}
        for flag, key in (("seed", "base_seed"), ("workers", "workers"), ("min_bits", "min_bits"), ("extended", "extended")):
            if getattr(args, flag) is not None:
                overrides[key] = getattr(args, flag)
        if "workers" not in overrides and "FPACDMA_WORKERS" not in os.environ:
            overrides["workers"] = ex.default_workers()
        cfg = parse_config(args.config, args.command, overrides)
    except ConfigurationError as e:
        parser.print_usage(sys.stderr)
        print(f"error: {e}", file=sys.stderr)
        return 2

    out_dir = args.out or Path("results") / cfg.exp_id
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest = write_manifest(out_dir, args.command, cfg, args.config)
        if args.command == "mse":
            summary = cmd_mse(cfg, out_dir)
        elif args.command == "stats":
            summary = cmd_stats(cfg, out_dir, args)
        else:
            summary = cmd_sweep(args.command, cfg, out_dir, args)
        write_manifest(out_dir, args.command, cfg, args.config, started=manifest["started"],
                       finished=dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"))
    except (ConfigurationError, RuntimeError, FloatingPointError, OSError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    print(json.dumps(summary, default=float))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
