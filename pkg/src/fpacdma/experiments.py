"""Monte Carlo harness: BER sweeps, capacity, near-far, channel MSE and significance tests.

Every (axis value, run) cell draws its randomness from a seed obtained by
hashing ``(base_seed, exp_id, axis value, run index)``, so cells are
independent of each other, of the worker count, and of how many runs are
requested.  All detectors in one cell see the same frames.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import channel
from .baselines import (
    DetectorKind,
    GaConfig,
    decorrelator_detect,
    ga_detect_frame,
    matched_filter_detect,
    ml_exhaustive,
    mmse_detect,
)
from .errors import ConfigurationError
from .fpa import FpaConfig, fpa_detect_frame
from .spreading import generate_gold_family
from .stats import REPORTED_MEAN_BER, REPORTED_SNR_DB, bonferroni_adjust, friedman, kruskal_wallis

log = logging.getLogger(__name__)

EXTENDED_SNR_DB = 12.0
EXTENDED_MIN_BITS = 10**6
CSV_COLUMNS = [
    "exp_id", "detector", "axis_name", "axis_value", "runs", "bits",
    "ber_best", "ber_mean", "ber_worst", "ber_std", "mse_mean", "seconds",
]
SIGNIFICANCE_COLUMNS = ["snr_db", "baseline", "H", "p_raw", "p_adj", "verdict"]
AXES = ("snr_db", "num_users", "nearfar_db", "frame_index")
MIN_SIGNIFICANCE_RUNS = 5


@dataclass(frozen=True)
class ExperimentConfig:
    exp_id: str = "ber_sweep"
    detectors: tuple[str, ...] = ("fpa", "ga", "mf", "mmse", "decorrelator")
    axis_name: str = "snr_db"
    axis_values: tuple[float, ...] = (7, 8, 9, 10, 11, 12, 13, 14)
    runs: int = 50
    frame_length: int = 100
    min_bits: int = 10**5  # total decisions for user 1 per axis point, split over runs
    base_seed: int = 0
    num_users: int = 10
    snr_db: float = 10.0
    nearfar_db: float = 4.0
    degree: int = 5
    doppler_rate: float = 5e-4
    fading_innovation_std: float | None = None
    fixed_fading: float | None = None  # constant a for every user, no time variation
    noiseless: bool = False
    extended: bool = False
    record_seconds: bool = False  # wall-clock in the record CSV breaks byte-identical reruns
    workers: int = 1
    fpa: FpaConfig = field(default_factory=FpaConfig)
    ga: GaConfig | None = None  # None: same evaluation budget as the FPA

    def __post_init__(self):
        if self.axis_name not in AXES:
            raise ConfigurationError(f"axis_name must be one of {AXES}")
        if self.runs < 1 or self.frame_length < 1 or self.min_bits < 1 or self.workers < 1:
            raise ConfigurationError("runs, frame_length, min_bits and workers must be >= 1")
        for d in self.detectors:
            DetectorKind.parse(d)
        if self.num_users < 1:
            raise ConfigurationError("num_users must be >= 1")

    @property
    def ga_config(self) -> GaConfig:
        return self.ga if self.ga is not None else GaConfig.matched_to(self.fpa)

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


@dataclass
class ExperimentRecord:
    exp_id: str
    detector: str
    axis_name: str
    axis_value: float
    run_ber: np.ndarray  # one BER per run
    bits: int  # decisions per run
    mse_mean: float | None = None
    seconds: float = 0.0
    note: str = ""
    label: str = ""  # "paper-reported" for quoted rows

    @property
    def runs(self) -> int:
        return len(self.run_ber)

    @property
    def ber_best(self) -> float:
        return float(np.min(self.run_ber))

    @property
    def ber_mean(self) -> float:
        return float(np.mean(self.run_ber))

    @property
    def ber_worst(self) -> float:
        return float(np.max(self.run_ber))

    @property
    def ber_std(self) -> float:
        return float(np.std(self.run_ber, ddof=1)) if self.runs > 1 else 0.0

    def row(self, record_seconds: bool = True) -> list:
        return [
            self.exp_id, self.detector, self.axis_name, _fmt(self.axis_value), self.runs, self.bits,
            _fmt(self.ber_best), _fmt(self.ber_mean), _fmt(self.ber_worst), _fmt(self.ber_std),
            "" if self.mse_mean is None else _fmt(self.mse_mean),
            f"{self.seconds:.3f}" if record_seconds else "",
        ]


def _fmt(x) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)


def cell_seed(base_seed: int, exp_id: str, axis_value, run: int) -> int:
    """Stable 64-bit seed for one (axis value, run) cell."""
    key = f"{int(base_seed)}|{exp_id}|{float(axis_value)!r}|{int(run)}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


def _detector_rng(seed: int, kind: DetectorKind) -> np.random.Generator:
    return np.random.default_rng([seed, 1 + list(DetectorKind).index(kind)])


def q_function(x: float) -> float:
    """Gaussian tail probability Q(x) = 0.5 erfc(x / sqrt 2)."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def single_user_ber(snr_db: float) -> float:
    """Antipodal signalling BER Q(sqrt(2 Eb/N0))."""
    return q_function(math.sqrt(2.0 * 10.0 ** (snr_db / 10.0)))


# ---------------------------------------------------------------------------
# cell simulation


def _point_setup(cfg: ExperimentConfig, axis_value):
    u, snr, nf = cfg.num_users, cfg.snr_db, cfg.nearfar_db
    if cfg.axis_name == "snr_db":
        snr = float(axis_value)
    elif cfg.axis_name == "num_users":
        u, nf = int(axis_value), 0.0
    elif cfg.axis_name == "nearfar_db":
        nf = float(axis_value)
    kw = dict(frame_length=cfg.frame_length, doppler_rate=cfg.doppler_rate,
              fading_innovation_std=cfg.fading_innovation_std)
    if cfg.fixed_fading is not None:
        kw.update(doppler_rate=0.0, fading_innovation_std=0.0)
    params = channel.ChannelParams.from_snr(u, snr, nf, **kw)
    if cfg.noiseless:
        params = dataclasses.replace(params, noise_psd=0.0)
    return params


def frames_per_run(cfg: ExperimentConfig, axis_value=None) -> int:
    bits = cfg.min_bits
    if cfg.axis_name == "snr_db" and axis_value is not None and float(axis_value) >= EXTENDED_SNR_DB and cfg.extended:
        bits = max(bits, EXTENDED_MIN_BITS)
    return max(1, math.ceil(bits / (cfg.runs * cfg.frame_length)))


def _detect(kind, obs, params, cfg, rng):
    z, R, E = obs.z, obs.R, params.bit_energies
    if kind is DetectorKind.MatchedFilter:
        return matched_filter_detect(z), None
    if kind is DetectorKind.Decorrelator:
        return decorrelator_detect(z, R), None
    if kind is DetectorKind.Mmse:
        return mmse_detect(z, R, params.noise_var, E), None
    if kind is DetectorKind.ExhaustiveMl:
        return ml_exhaustive(z, R, E, obs.true_fading), None
    if kind is DetectorKind.StandardGa:
        return ga_detect_frame(z, R, E, cfg.ga_config, rng=rng)
    return fpa_detect_frame(z, R, E, cfg.fpa, rng=rng)


def simulate_cell(cfg: ExperimentConfig, axis_value, run: int) -> dict:
    """Errors, bits, MSE trace and time per detector for one (axis value, run) cell."""
    params = _point_setup(cfg, axis_value)
    codebook = generate_gold_family(cfg.degree)
    seed = cell_seed(cfg.base_seed, cfg.exp_id, axis_value, run)
    ch_rng = np.random.default_rng([seed, 0])
    kinds = [DetectorKind.parse(d) for d in cfg.detectors]
    rngs = {k: _detector_rng(seed, k) for k in kinds}
    out = {k.value: {"errors": 0, "bits": 0, "sq_err": np.zeros(cfg.frame_length), "est": 0, "seconds": 0.0}
           for k in kinds}
    for _ in range(frames_per_run(cfg, axis_value)):
        state = None
        if cfg.fixed_fading is not None:
            state = channel.ChannelState(np.full(params.num_users, float(cfg.fixed_fading)))
        obs = channel.simulate_frame(codebook, params, ch_rng, state=state)
        truth = obs.true_symbols[:, 0]
        for k in kinds:
            t0 = time.perf_counter()
            symbols, fading = _detect(k, obs, params, cfg, rngs[k])
            slot = out[k.value]
            slot["seconds"] += time.perf_counter() - t0
            slot["errors"] += int(np.sum(symbols[:, 0] != truth))
            slot["bits"] += len(truth)
            if fading is not None:
                slot["sq_err"] += np.mean((fading - obs.true_fading) ** 2, axis=1)
                slot["est"] += 1
    return out


def _run_cells(cfg: ExperimentConfig, cells):
    if cfg.workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_cell_task, [(cfg, v, r) for v, r in cells], chunksize=1))
    else:
        results = [simulate_cell(cfg, v, r) for v, r in cells]
    return dict(zip(cells, results))


def _cell_task(args):
    return simulate_cell(*args)


def _aggregate(cfg: ExperimentConfig, values, results) -> list[ExperimentRecord]:
    records = []
    for v in values:
        for d in cfg.detectors:
            name = DetectorKind.parse(d).value
            cells = [results[(v, r)][name] for r in range(cfg.runs)]
            bers = np.array([c["errors"] / c["bits"] for c in cells])
            est = sum(c["est"] for c in cells)
            mse = float(sum(c["sq_err"].sum() for c in cells) / (est * cfg.frame_length)) if est else None
            rec = ExperimentRecord(
                exp_id=cfg.exp_id, detector=name, axis_name=cfg.axis_name, axis_value=float(v),
                run_ber=bers, bits=cells[0]["bits"], mse_mean=mse,
                seconds=float(sum(c["seconds"] for c in cells)),
            )
            if not np.any(bers > 0):
                rec.note = f"below resolution 1/{cells[0]['bits'] * cfg.runs}"
            records.append(rec)
    return records


def run_experiment(cfg: ExperimentConfig, progress=None) -> list[ExperimentRecord]:
    values = list(cfg.axis_values)
    for v in values:
        if cfg.axis_name == "snr_db" and float(v) >= EXTENDED_SNR_DB:
            if cfg.extended:
                log.warning("extended point %s dB runs %d bits per point", v, frames_per_run(cfg, v) * cfg.runs * cfg.frame_length)
            else:
                log.warning("point %s dB targets BER below 1e-4; %d bits give coarse resolution (see --extended)", v, cfg.min_bits)
    cells = [(v, r) for v in values for r in range(cfg.runs)]
    if progress:
        progress(f"{cfg.exp_id}: {len(cells)} cells on {cfg.workers} worker(s)")
    results = _run_cells(cfg, cells)
    return _aggregate(cfg, values, results)


def run_ber_sweep(cfg: ExperimentConfig, progress=None) -> list[ExperimentRecord]:
    """User-1 BER against E_1/N0 with interferers ``nearfar_db`` stronger."""
    if cfg.axis_name != "snr_db":
        cfg = cfg.replace(axis_name="snr_db")
    return run_experiment(cfg, progress)


def run_capacity(cfg: ExperimentConfig, progress=None) -> list[ExperimentRecord]:
    """BER against the number of equal-energy active users."""
    family = generate_gold_family(cfg.degree).family_size
    keep = []
    for u in cfg.axis_values:
        if int(u) > family:
            log.warning("skipping U=%d: family of degree %d has %d codes", int(u), cfg.degree, family)
        else:
            keep.append(int(u))
    cfg = cfg.replace(axis_name="num_users", axis_values=tuple(keep))
    records = run_experiment(cfg, progress)
    for d in cfg.detectors:
        means = [r.ber_mean for r in records if r.detector == DetectorKind.parse(d).value]
        if any(b < a for a, b in zip(means, means[1:])):
            log.warning("capacity: %s BER is not monotone in U (Monte Carlo noise?)", d)
    return records


def run_nearfar(cfg: ExperimentConfig, progress=None) -> list[ExperimentRecord]:
    """User-1 BER against the interferer-to-user-1 energy ratio in dB."""
    return run_experiment(cfg.replace(axis_name="nearfar_db"), progress)


# ---------------------------------------------------------------------------
# channel estimation error


@dataclass
class MseTrajectory:
    detector: str
    mse: np.ndarray  # per symbol index, averaged over users and runs
    runs: int

    @property
    def final(self) -> float:
        return float(np.mean(self.mse[-20:]))

    @property
    def plateau_index(self) -> int:
        return plateau_index(self.mse)


def plateau_index(mse) -> int:
    """First symbol index whose MSE falls below 1.1x the final-20-symbol average."""
    mse = np.asarray(mse, dtype=float)
    below = np.nonzero(mse < 1.1 * np.mean(mse[-20:]))[0]
    return int(below[0]) if below.size else len(mse)


def channel_mse_trajectories(cfg: ExperimentConfig, progress=None) -> dict[str, MseTrajectory]:
    """Per-symbol fading MSE for the estimating detectors, one frame per run."""
    kinds = [d for d in cfg.detectors if DetectorKind.parse(d) in (DetectorKind.Fpa, DetectorKind.StandardGa)]
    if not kinds:
        raise ConfigurationError("channel MSE needs an estimating detector (fpa or ga)")
    cfg = cfg.replace(detectors=tuple(kinds), axis_name="frame_index", axis_values=(0,),
                      min_bits=cfg.runs * cfg.frame_length)
    if progress:
        progress(f"{cfg.exp_id}: {cfg.runs} frames")
    results = _run_cells(cfg, [(0, r) for r in range(cfg.runs)])
    out = {}
    for d in kinds:
        name = DetectorKind.parse(d).value
        total = sum(results[(0, r)][name]["sq_err"] for r in range(cfg.runs))
        out[name] = MseTrajectory(detector=name, mse=total / cfg.runs, runs=cfg.runs)
    return out


def noiseless_frozen_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Same experiment without noise and with time-invariant fading."""
    return cfg.replace(noiseless=True, doppler_rate=0.0, fading_innovation_std=0.0)


def run_channel_mse(cfg: ExperimentConfig, progress=None) -> list[ExperimentRecord]:
    """MSE trajectory as records along ``frame_index`` (BER columns hold the per-symbol error rate)."""
    trajectories = channel_mse_trajectories(cfg, progress)
    records = []
    for name, tr in trajectories.items():
        log.info("%s: plateau at symbol %d, final MSE %.3g", name, tr.plateau_index, tr.final)
        for n, m in enumerate(tr.mse):
            records.append(ExperimentRecord(
                exp_id=cfg.exp_id, detector=name, axis_name="frame_index", axis_value=float(n),
                run_ber=np.full(1, np.nan), bits=tr.runs, mse_mean=float(m),
            ))
    return records


# ---------------------------------------------------------------------------
# significance


@dataclass(frozen=True)
class SignificanceRow:
    snr_db: float
    baseline: str
    H: float
    p_raw: float
    p_adj: float
    verdict: str  # win (FPA better), ns, loss


@dataclass
class SignificanceReport:
    rows: list
    friedman_detectors: tuple
    friedman: object


def run_significance(records: list[ExperimentRecord], alpha: float = 0.05, reference: str = "fpa") -> SignificanceReport:
    """Pairwise Kruskal-Wallis of the reference detector against every other, per SNR.

    p-values are Bonferroni-adjusted over the number of baselines.  The
    Friedman test ranks detectors by mean BER across SNR points.
    """
    by_cell = {(r.axis_value, r.detector): r for r in records}
    snrs = sorted({r.axis_value for r in records})
    detectors = sorted({r.detector for r in records}, key=lambda d: (d != reference, d))
    if reference not in detectors:
        raise ConfigurationError(f"reference detector {reference!r} missing from records")
    if min(r.runs for r in records) < MIN_SIGNIFICANCE_RUNS:
        raise ConfigurationError(f"significance tests need at least {MIN_SIGNIFICANCE_RUNS} runs per cell")
    baselines = [d for d in detectors if d != reference]
    rows = []
    for s in snrs:
        ref = by_cell[(s, reference)].run_ber
        tests = [kruskal_wallis([ref, by_cell[(s, b)].run_ber]) for b in baselines]
        adj = bonferroni_adjust([p for _, p in tests], len(baselines))
        for b, (h, p), pa in zip(baselines, tests, adj):
            verdict = "ns"
            if pa < alpha:
                verdict = "win" if np.median(ref) < np.median(by_cell[(s, b)].run_ber) else "loss"
            rows.append(SignificanceRow(s, b, h, p, float(pa), verdict))
    fr = None
    if len(snrs) >= 2 and len(detectors) >= 2:
        matrix = np.array([[by_cell[(s, d)].ber_mean for d in detectors] for s in snrs])
        fr = friedman(matrix, lower_is_better=True)
    return SignificanceReport(rows=rows, friedman_detectors=tuple(detectors), friedman=fr)


# ---------------------------------------------------------------------------
# output


def write_records_csv(records, path, record_seconds: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(r.row(record_seconds))


def read_records_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_significance_csv(report: SignificanceReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SIGNIFICANCE_COLUMNS)
        for r in report.rows:
            w.writerow([_fmt(r.snr_db), r.baseline, _fmt(r.H), _fmt(r.p_raw), _fmt(r.p_adj), r.verdict])


def write_friedman_csv(report: SignificanceReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["detector", "average_rank", "statistic", "dof", "p_value"])
        fr = report.friedman
        if fr is None:
            return
        for d, rank in zip(report.friedman_detectors, fr.average_ranks):
            w.writerow([d, _fmt(rank), _fmt(fr.statistic), fr.dof, _fmt(fr.p_value)])


def paper_reported_records(exp_id: str = "ber_sweep") -> list[ExperimentRecord]:
    """Quoted mean BER rows for side-by-side plots; only ber_mean is meaningful."""
    out = []
    for det, values in REPORTED_MEAN_BER.items():
        for snr, ber in zip(REPORTED_SNR_DB, values):
            out.append(ExperimentRecord(
                exp_id=exp_id, detector=f"{det} (paper-reported)", axis_name="snr_db", axis_value=float(snr),
                run_ber=np.array([ber]), bits=0, label="paper-reported",
            ))
    return out


def timing_report(records) -> dict[str, float]:
    """Total detector time as a percentage of the FPA's (hardware dependent, report only)."""
    totals: dict[str, float] = {}
    for r in records:
        totals[r.detector] = totals.get(r.detector, 0.0) + r.seconds
    ref = totals.get("fpa")
    if not ref:
        return {}
    return {d: 100.0 * t / ref for d, t in sorted(totals.items())}


def write_timing_csv(records, path) -> None:
    rel = timing_report(records)
    totals: dict[str, float] = {}
    for r in records:
        totals[r.detector] = totals.get(r.detector, 0.0) + r.seconds
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["detector", "seconds", "percent_of_fpa"])
        for d in sorted(totals):
            w.writerow([d, f"{totals[d]:.3f}", f"{rel[d]:.1f}" if d in rel else ""])


def write_gnuplot_dat(records, path, value: str = "ber_mean") -> None:
    """Whitespace table: axis value followed by one column per detector."""
    detectors = sorted({r.detector for r in records})
    axis = sorted({r.axis_value for r in records})
    cell = {(r.axis_value, r.detector): getattr(r, value) if value != "mse_mean" else r.mse_mean for r in records}
    with open(path, "w") as fh:
        fh.write("# " + " ".join(["axis"] + [d.replace(" ", "_") for d in detectors]) + "\n")
        for v in axis:
            vals = [cell.get((v, d)) for d in detectors]
            fh.write(" ".join([_fmt(v)] + ["nan" if x is None else repr(float(x)) for x in vals]) + "\n")


def default_workers() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1))
