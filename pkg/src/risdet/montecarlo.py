"""Monte Carlo experiment engine.

Threshold calibration, detection-probability curves, CFAR sweeps over the
clutter parameters, pair-index RMSE, cyclic-ascent convergence traces, and
the sliding-window study.  Trials are keyed by (master_seed, trial_index)
counter pairs; each experiment stage and grid point owns a disjoint block of
trial indices, so every estimate is reproducible bit-for-bit under a fixed
master seed regardless of chunking or worker scheduling.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .detectors import (
    BatchResult,
    CGlrtConfig,
    DetectorKind,
    PROPOSED_KINDS,
    batch_evaluate,
    c_glrt_gain_trace,
)
from .geometry import BinLayout
from .signal_model import (
    CovarianceModel,
    SteeringSet,
    TargetParams,
    alpha_from_sinr,
    build_covariance,
    clutter_power_from_cnr,
    synthesize_batch,
    target_mean_matrix,
)

ALL_KINDS = tuple(DetectorKind)

# Trials processed per batch call; bounds peak memory at a few tens of MB.
_CHUNK = 4096

# Each (stage, grid point) pair owns a disjoint counter block, so data drawn
# for calibration never overlap data drawn for any curve point.
_STAGE_STRIDE = 1 << 40
_POINT_STRIDE = 1 << 28
_STAGE_CAL = 0
_STAGE_PD = 1
_STAGE_CFAR_CNR = 2
_STAGE_CFAR_RHO = 3
_STAGE_RMSE = 4
_STAGE_CONV = 5
_STAGE_SLIDE = 6

CSV_CURVE_HEADER = ("detector", "x", "estimate", "stderr", "trials", "seed")
CSV_RMSE_HEADER = ("detector", "sinr_db", "rmse_n", "rmse_m", "trials", "seed")


@dataclass(frozen=True)
class ExperimentConfig:
    """Full recipe for one experiment run: scenario, model, and budgets."""

    pfa: float = 1e-3
    trials_cal: int = 100_000
    trials_pd: int = 1_000
    sinr_grid: tuple[float, ...] = tuple(float(s) for s in range(-24, 26, 2))
    master_seed: int = 20260816
    n_antennas: int = 16
    k_p: int = 6
    k_s: int = 24
    theta_r_deg: float = 0.5
    theta_s_deg: float = -0.4
    cnr_db: float = 25.0
    rho: float = 0.9
    noise_power: float = 1.0
    pair: tuple[int, int] = (3, 6)
    alpha_ratio: float = 10.0
    baseline_cell: int = 1
    cglrt: CGlrtConfig = field(default_factory=CGlrtConfig)
    threads: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.pfa < 1.0:
            raise ValueError("pfa must lie in (0, 1)")
        if self.trials_cal < math.ceil(10.0 / self.pfa):
            raise ValueError(
                f"trials_cal={self.trials_cal} too small for pfa={self.pfa}; "
                f"need at least {math.ceil(10.0 / self.pfa)}")
        if self.trials_pd < 1:
            raise ValueError("trials_pd must be >= 1")
        if self.k_p < 3:
            raise ValueError("window size k_p must be >= 3")
        if self.k_s < self.n_antennas:
            raise ValueError("need k_s >= n_antennas")
        n, m = self.pair
        if not 1 < n < m <= self.k_p:
            raise ValueError(f"pair {self.pair} must satisfy 1 < n < m <= k_p")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if self.noise_power <= 0:
            raise ValueError("noise_power must be positive")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if not 1 <= self.baseline_cell <= self.k_p:
            raise ValueError("baseline_cell outside the window")

    @property
    def layout(self) -> BinLayout:
        return BinLayout(n=self.pair[0], m=self.pair[1], window_size=self.k_p)

    def steering(self) -> SteeringSet:
        return SteeringSet.from_angles(
            self.theta_r_deg, self.theta_s_deg, self.n_antennas)

    def covariance(self, cnr_db: float | None = None,
                   rho: float | None = None) -> np.ndarray:
        model = CovarianceModel(
            noise_power=self.noise_power,
            clutter_power=clutter_power_from_cnr(
                self.cnr_db if cnr_db is None else cnr_db, self.noise_power),
            one_lag=self.rho if rho is None else rho,
            dim=self.n_antennas,
        )
        return build_covariance(model)


def desk_profile(**overrides) -> ExperimentConfig:
    """Default CI-scale budgets: pfa 1e-3, 1e5 calibration, 1e3 curve trials."""
    base = dict(pfa=1e-3, trials_cal=100_000, trials_pd=1_000)
    base.update(overrides)
    return ExperimentConfig(**base)


def paper_profile(**overrides) -> ExperimentConfig:
    """Publication-scale budgets: pfa 1e-4, 1e6 calibration, 1e4 curve trials."""
    base = dict(pfa=1e-4, trials_cal=1_000_000, trials_pd=10_000)
    base.update(overrides)
    return ExperimentConfig(**base)


PROFILES = {"desk": desk_profile, "paper": paper_profile}


@dataclass(frozen=True)
class ThresholdTable:
    """Detection thresholds keyed by detector, with their calibration recipe."""

    thresholds: dict[DetectorKind, float]
    pfa: float
    master_seed: int
    trials: int

    def __post_init__(self) -> None:
        for kind, eta in self.thresholds.items():
            if not np.isfinite(eta):
                raise ValueError(f"threshold for {kind.value} not finite")

    def __getitem__(self, kind: DetectorKind) -> float:
        return self.thresholds[kind]

    def kinds(self) -> tuple[DetectorKind, ...]:
        return tuple(self.thresholds)


@dataclass(frozen=True)
class CurvePoint:
    """One probability estimate on a curve, with its binomial error bar."""

    detector: str
    x: float
    estimate: float
    stderr: float
    trials: int
    seed: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.estimate <= 1.0:
            raise ValueError(f"estimate {self.estimate} outside [0, 1]")


@dataclass(frozen=True)
class RmsePoint:
    detector: str
    sinr_db: float
    rmse_n: float
    rmse_m: float
    trials: int
    seed: int


@dataclass(frozen=True)
class ConvergenceTrace:
    """Mean relative-gain trace of the cyclic ascent at one cell pair."""

    pair: tuple[int, int]
    mean_gain: np.ndarray
    monotone_fraction: float
    trials: int

    def first_below(self, eps: float) -> int | None:
        """First iteration (1-based) whose mean gain drops below eps."""
        hits = np.nonzero(self.mean_gain < eps)[0]
        return int(hits[0]) + 1 if hits.size else None


def binomial_stderr(p: float, trials: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / trials)


def threshold_from_stats(stats: np.ndarray, pfa: float) -> float:
    """Empirical threshold: order statistic at 1-based index ceil((1-pfa) T).

    Matches the exceedance rule "declare when statistic > eta"; the index
    convention rounds toward the conservative (larger) threshold.
    """
    if not 0.0 < pfa < 1.0:
        raise ValueError("pfa must lie in (0, 1)")
    stats = np.asarray(stats, dtype=float)
    if stats.ndim != 1 or stats.size == 0:
        raise ValueError("stats must be a nonempty 1-d array")
    idx = math.ceil((1.0 - pfa) * stats.size)
    return float(np.sort(stats)[idx - 1])


def rmse_from_estimates(
    n_hat: np.ndarray, m_hat: np.ndarray, true_n: int, true_m: int
) -> tuple[float, float]:
    rmse_n = float(np.sqrt(np.mean((np.asarray(n_hat) - true_n) ** 2.0)))
    rmse_m = float(np.sqrt(np.mean((np.asarray(m_hat) - true_m) ** 2.0)))
    return rmse_n, rmse_m


def _trial_block(stage: int, point: int, count: int) -> np.ndarray:
    base = stage * _STAGE_STRIDE + point * _POINT_STRIDE
    if count > _POINT_STRIDE:
        raise ValueError("trial block exceeds its reserved counter range")
    return np.arange(base, base + count, dtype=np.uint64)


def _eval_chunk(
    mean: np.ndarray | None,
    cov: np.ndarray,
    steering: SteeringSet,
    k_p: int,
    k_s: int,
    master_seed: int,
    indices: np.ndarray,
    kinds: tuple[DetectorKind, ...],
    cglrt: CGlrtConfig,
    baseline_cell: int,
) -> dict[DetectorKind, BatchResult]:
    z_p, r = synthesize_batch(mean, cov, k_p, k_s, master_seed, indices)
    return batch_evaluate(z_p, r, steering, kinds, cglrt, baseline_cell)


def _concat_results(
    parts: list[dict[DetectorKind, BatchResult]],
    kinds: tuple[DetectorKind, ...],
) -> dict[DetectorKind, BatchResult]:
    out: dict[DetectorKind, BatchResult] = {}
    for kind in kinds:
        stat = np.concatenate([p[kind].statistic for p in parts])
        n_hat = m_hat = iters = None
        if parts[0][kind].n_hat is not None:
            n_hat = np.concatenate([p[kind].n_hat for p in parts])
            m_hat = np.concatenate([p[kind].m_hat for p in parts])
        if parts[0][kind].iterations is not None:
            iters = np.concatenate([p[kind].iterations for p in parts])
        out[kind] = BatchResult(
            statistic=stat, n_hat=n_hat, m_hat=m_hat, iterations=iters)
    return out


def _run_detectors(
    kinds: tuple[DetectorKind, ...],
    mean: np.ndarray | None,
    cov: np.ndarray,
    cfg: ExperimentConfig,
    trial_indices: np.ndarray,
    steering: SteeringSet | None = None,
) -> dict[DetectorKind, BatchResult]:
    """Chunked (optionally multi-process) evaluation over a trial block."""
    steering = cfg.steering() if steering is None else steering
    chunks = [trial_indices[i:i + _CHUNK]
              for i in range(0, len(trial_indices), _CHUNK)]
    args = [(mean, cov, steering, cfg.k_p, cfg.k_s, cfg.master_seed, c,
             kinds, cfg.cglrt, cfg.baseline_cell) for c in chunks]
    if cfg.threads > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            parts = list(pool.map(_eval_chunk_star, args))
    else:
        parts = [_eval_chunk(*a) for a in args]
    return _concat_results(parts, kinds)


def _eval_chunk_star(args) -> dict[DetectorKind, BatchResult]:
    return _eval_chunk(*args)


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------

def calibrate_thresholds(
    cfg: ExperimentConfig,
    kinds: Sequence[DetectorKind] = ALL_KINDS,
) -> ThresholdTable:
    """Thresholds at the configured pfa from a shared batch of H0 trials."""
    kinds = tuple(kinds)
    idx = _trial_block(_STAGE_CAL, 0, cfg.trials_cal)
    res = _run_detectors(kinds, None, cfg.covariance(), cfg, idx)
    thresholds = {
        kind: threshold_from_stats(res[kind].statistic, cfg.pfa)
        for kind in kinds
    }
    return ThresholdTable(
        thresholds=thresholds, pfa=cfg.pfa,
        master_seed=cfg.master_seed, trials=cfg.trials_cal)


def calibrate_threshold(det: DetectorKind, cfg: ExperimentConfig) -> float:
    return calibrate_thresholds(cfg, (det,))[det]


# ---------------------------------------------------------------------------
# Detection probability
# ---------------------------------------------------------------------------

def _h1_mean(cfg: ExperimentConfig, cov: np.ndarray, steering: SteeringSet,
             sinr_db: float) -> np.ndarray:
    alphas = alpha_from_sinr(sinr_db, cov, steering.v_r, cfg.alpha_ratio)
    params = TargetParams(alpha=alphas, layout=cfg.layout)
    return target_mean_matrix(params, steering, cfg.k_p)


def pd_curves(
    kinds: Sequence[DetectorKind],
    table: ThresholdTable,
    cfg: ExperimentConfig,
    sinr_grid: Sequence[float] | None = None,
) -> dict[DetectorKind, list[CurvePoint]]:
    """Detection probability versus SINR; all detectors share each trial."""
    kinds = tuple(kinds)
    grid = tuple(cfg.sinr_grid if sinr_grid is None else sinr_grid)
    cov = cfg.covariance()
    steering = cfg.steering()
    out: dict[DetectorKind, list[CurvePoint]] = {k: [] for k in kinds}
    for j, sinr in enumerate(grid):
        mean = _h1_mean(cfg, cov, steering, sinr)
        idx = _trial_block(_STAGE_PD, j, cfg.trials_pd)
        res = _run_detectors(kinds, mean, cov, cfg, idx, steering)
        for kind in kinds:
            p = float(np.mean(res[kind].statistic > table[kind]))
            out[kind].append(CurvePoint(
                detector=kind.value, x=float(sinr), estimate=p,
                stderr=binomial_stderr(p, cfg.trials_pd),
                trials=cfg.trials_pd, seed=cfg.master_seed))
    return out


def pd_curve(
    det: DetectorKind,
    eta: float,
    cfg: ExperimentConfig,
    sinr_grid: Sequence[float] | None = None,
) -> list[CurvePoint]:
    table = ThresholdTable(
        thresholds={det: eta}, pfa=cfg.pfa,
        master_seed=cfg.master_seed, trials=cfg.trials_cal)
    return pd_curves((det,), table, cfg, sinr_grid)[det]


# ---------------------------------------------------------------------------
# CFAR sweeps
# ---------------------------------------------------------------------------

def cfar_sweeps(
    kinds: Sequence[DetectorKind],
    table: ThresholdTable,
    axis: str,
    values: Sequence[float],
    cfg: ExperimentConfig,
) -> dict[DetectorKind, list[CurvePoint]]:
    """Empirical P_fa under clutter parameters away from the calibration point.

    axis "cnr" sweeps the clutter-to-noise ratio in dB at the configured rho;
    axis "rho" sweeps the one-lag correlation at the configured CNR.
    """
    kinds = tuple(kinds)
    if axis not in ("cnr", "rho"):
        raise ValueError('axis must be "cnr" or "rho"')
    stage = _STAGE_CFAR_CNR if axis == "cnr" else _STAGE_CFAR_RHO
    steering = cfg.steering()
    out: dict[DetectorKind, list[CurvePoint]] = {k: [] for k in kinds}
    for j, value in enumerate(values):
        cov = (cfg.covariance(cnr_db=value) if axis == "cnr"
               else cfg.covariance(rho=value))
        idx = _trial_block(stage, j, cfg.trials_cal)
        res = _run_detectors(kinds, None, cov, cfg, idx, steering)
        for kind in kinds:
            p = float(np.mean(res[kind].statistic > table[kind]))
            out[kind].append(CurvePoint(
                detector=kind.value, x=float(value), estimate=p,
                stderr=binomial_stderr(p, cfg.trials_cal),
                trials=cfg.trials_cal, seed=cfg.master_seed))
    return out


def cfar_sweep(
    det: DetectorKind,
    eta_nominal: float,
    axis: str,
    values: Sequence[float],
    cfg: ExperimentConfig,
) -> list[CurvePoint]:
    table = ThresholdTable(
        thresholds={det: eta_nominal}, pfa=cfg.pfa,
        master_seed=cfg.master_seed, trials=cfg.trials_cal)
    return cfar_sweeps((det,), table, axis, values, cfg)[det]


# ---------------------------------------------------------------------------
# Pair-index RMSE
# ---------------------------------------------------------------------------

def rmse_curves(
    kinds: Sequence[DetectorKind],
    cfg: ExperimentConfig,
    sinr_grid: Sequence[float] | None = None,
) -> dict[DetectorKind, list[RmsePoint]]:
    """Root mean square error of the maximizing pair versus SINR."""
    kinds = tuple(kinds)
    for kind in kinds:
        if kind not in PROPOSED_KINDS:
            raise ValueError(f"{kind.value} does not estimate a cell pair")
    grid = tuple(cfg.sinr_grid if sinr_grid is None else sinr_grid)
    cov = cfg.covariance()
    steering = cfg.steering()
    true_n, true_m = cfg.pair
    out: dict[DetectorKind, list[RmsePoint]] = {k: [] for k in kinds}
    for j, sinr in enumerate(grid):
        mean = _h1_mean(cfg, cov, steering, sinr)
        idx = _trial_block(_STAGE_RMSE, j, cfg.trials_pd)
        res = _run_detectors(kinds, mean, cov, cfg, idx, steering)
        for kind in kinds:
            rmse_n, rmse_m = rmse_from_estimates(
                res[kind].n_hat, res[kind].m_hat, true_n, true_m)
            out[kind].append(RmsePoint(
                detector=kind.value, sinr_db=float(sinr),
                rmse_n=rmse_n, rmse_m=rmse_m,
                trials=cfg.trials_pd, seed=cfg.master_seed))
    return out


def rmse_nm(
    det: DetectorKind,
    cfg: ExperimentConfig,
    sinr_grid: Sequence[float] | None = None,
) -> list[RmsePoint]:
    return rmse_curves((det,), cfg, sinr_grid)[det]


# ---------------------------------------------------------------------------
# Cyclic-ascent convergence
# ---------------------------------------------------------------------------

def convergence_study(
    cfg: ExperimentConfig,
    pairs: Sequence[tuple[int, int]] | None = None,
    sinr_db: float = 0.0,
    n_trials: int = 1000,
) -> list[ConvergenceTrace]:
    """Mean relative gain of the cyclic ascent per iteration, under H1.

    The ascent runs its full iteration budget (no early stop) at each
    requested cell pair; the trace averages the per-iteration gains over
    the trials.
    """
    pairs = [cfg.pair] if pairs is None else list(pairs)
    cov = cfg.covariance()
    steering = cfg.steering()
    mean = _h1_mean(cfg, cov, steering, sinr_db)
    from .detectors import MONOTONE_SLACK

    traces = []
    for j, pair in enumerate(pairs):
        gains_parts, lds_parts = [], []
        idx = _trial_block(_STAGE_CONV, j, n_trials)
        for start in range(0, n_trials, _CHUNK):
            sl = idx[start:start + _CHUNK]
            z_p, r = synthesize_batch(
                mean, cov, cfg.k_p, cfg.k_s, cfg.master_seed, sl)
            gains, update_lds = c_glrt_gain_trace(
                z_p, r, steering, pair, cfg.cglrt)
            gains_parts.append(gains)
            lds_parts.append(update_lds)
        gains = np.concatenate(gains_parts, axis=0)
        update_lds = np.concatenate(lds_parts, axis=0)
        k_tot = cfg.k_p + cfg.k_s
        step_gain = np.expm1(k_tot * -np.diff(update_lds, axis=1))
        traces.append(ConvergenceTrace(
            pair=(int(pair[0]), int(pair[1])),
            mean_gain=gains.mean(axis=0),
            monotone_fraction=float(np.mean(step_gain >= -MONOTONE_SLACK)),
            trials=n_trials))
    return traces


# ---------------------------------------------------------------------------
# Sliding window
# ---------------------------------------------------------------------------

def sliding_window(
    kinds: Sequence[DetectorKind],
    table: ThresholdTable,
    cfg: ExperimentConfig,
    n_bins: int = 20,
    sinr_db: float = 0.0,
    target_bins: tuple[int, int, int] = (1, 3, 6),
) -> dict[DetectorKind, list[CurvePoint]]:
    """Detection probability as a size-K_P window slides over the range bins.

    The three echo components sit at fixed absolute bins; a window starting
    at position p tests bins p .. p+K_P-1 (re-indexed as window cells
    1..K_P), and components outside the window contribute to no tested cell.
    The x coordinate of each point is the window start position.
    """
    kinds = tuple(kinds)
    if n_bins < cfg.k_p:
        raise ValueError("need n_bins >= k_p")
    cov = cfg.covariance()
    steering = cfg.steering()
    alphas = alpha_from_sinr(sinr_db, cov, steering.v_r, cfg.alpha_ratio)
    vecs = (steering.v_r, steering.v_sr, steering.v_s)
    out: dict[DetectorKind, list[CurvePoint]] = {k: [] for k in kinds}
    for j, position in enumerate(range(1, n_bins - cfg.k_p + 2)):
        mean = np.zeros((cfg.n_antennas, cfg.k_p), dtype=np.complex128)
        for bin_abs, v, a in zip(target_bins, vecs, alphas):
            col = bin_abs - position
            if 0 <= col < cfg.k_p:
                mean[:, col] += a * v
        idx = _trial_block(_STAGE_SLIDE, j, cfg.trials_pd)
        res = _run_detectors(kinds, mean, cov, cfg, idx, steering)
        for kind in kinds:
            p = float(np.mean(res[kind].statistic > table[kind]))
            out[kind].append(CurvePoint(
                detector=kind.value, x=float(position), estimate=p,
                stderr=binomial_stderr(p, cfg.trials_pd),
                trials=cfg.trials_pd, seed=cfg.master_seed))
    return out


# ---------------------------------------------------------------------------
# Artifact output
# ---------------------------------------------------------------------------

def write_curve_csv(path, points: Iterable[CurvePoint]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_CURVE_HEADER)
        for p in points:
            writer.writerow([p.detector, repr(p.x), repr(p.estimate),
                             repr(p.stderr), p.trials, p.seed])


def write_rmse_csv(path, points: Iterable[RmsePoint]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_RMSE_HEADER)
        for p in points:
            writer.writerow([p.detector, repr(p.sinr_db), repr(p.rmse_n),
                             repr(p.rmse_m), p.trials, p.seed])


def flatten_curves(
    curves: dict[DetectorKind, list[CurvePoint]]
) -> list[CurvePoint]:
    """Deterministic row order: detector enumeration order, then x order."""
    rows: list[CurvePoint] = []
    for kind in DetectorKind:
        rows.extend(curves.get(kind, []))
    return rows


def with_profile(profile: str, **overrides) -> ExperimentConfig:
    try:
        factory = PROFILES[profile]
    except KeyError:
        raise ValueError(f"unknown profile {profile!r}; "
                         f"choose from {sorted(PROFILES)}") from None
    return factory(**overrides)


def replace_config(cfg: ExperimentConfig, **overrides) -> ExperimentConfig:
    return replace(cfg, **overrides)
