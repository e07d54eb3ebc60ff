"""Windowed detection statistics for surface-assisted radar returns.

Five window detectors scan every admissible cell pair (n, m), n > 1, m > n,
for the single- and double-bounce echoes while the direct echo sits in
cell 1; two classical single-cell detectors (Kelly's GLRT and the AMF)
serve as baselines.

Two independent code routes are provided on purpose:

* Reference route: the single-trial functions below (`ep_glrt_km`,
  `ep_glrt_ka`, `c_glrt`, `a_glrt`, `kelly`, `amf`) follow the written
  estimator and statistic forms with explicit N x N matrices factored
  through hermitian_numerics.
* Batched route: `batch_evaluate` whitens each trial by the Cholesky factor
  of the training scatter matrix S_S and reduces every statistic to algebra
  on the Gram matrix of the K_P + 3 whitened window/steering vectors
  (Woodbury identities on small capacitance matrices).  This is the engine
  the Monte Carlo layer uses; the test suite cross-validates it against the
  reference route.

All det-ratio statistics are computed as exp of log-determinant differences.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import hermitian_numerics as hn
from .signal_model import DataSet, SteeringSet

# A coordinate update may lower the compressed log-likelihood by at most this
# relative amount before it is treated as a genuine monotonicity violation
# rather than floating-point wobble.  The tolerance is scaled per trial by
# the largest raw cell energy entering the residual algebra: the log-det
# updates cancel terms of that magnitude, so their rounding error grows with
# it while genuine ascent bugs produce decreases on the order of the gains
# themselves.
MONOTONE_SLACK = 1e-8


class NonMonotonic(RuntimeError):
    """Cyclic likelihood ascent decreased beyond numerical tolerance."""


class DetectorKind(Enum):
    EP_GLRT_KM_1 = "ep-glrt-km-1"
    EP_GLRT_KM_2 = "ep-glrt-km-2"
    EP_GLRT_KA = "ep-glrt-ka"
    C_GLRT = "c-glrt"
    A_GLRT = "a-glrt"
    KELLY = "kelly"
    AMF = "amf"

    @classmethod
    def from_name(cls, name: str) -> "DetectorKind":
        token = name.strip().lower().replace("_", "-")
        for kind in cls:
            if kind.value == token or kind.name.lower().replace("_", "-") == token:
                return kind
        raise ValueError(f"unknown detector {name!r}; choose from "
                         f"{[k.value for k in cls]}")


PROPOSED_KINDS = (
    DetectorKind.EP_GLRT_KM_1,
    DetectorKind.EP_GLRT_KM_2,
    DetectorKind.EP_GLRT_KA,
    DetectorKind.C_GLRT,
    DetectorKind.A_GLRT,
)
DET_RATIO_KINDS = (
    DetectorKind.EP_GLRT_KA,
    DetectorKind.C_GLRT,
    DetectorKind.A_GLRT,
)
BASELINE_KINDS = (DetectorKind.KELLY, DetectorKind.AMF)


@dataclass(frozen=True)
class CGlrtConfig:
    """Stopping rule of the cyclic detector: relative gain below epsilon."""

    epsilon: float = 1e-5
    h_max: int = 20

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.h_max < 1:
            raise ValueError("h_max must be >= 1")


@dataclass(frozen=True)
class DetectionOutcome:
    statistic: float
    n_hat: int | None = None
    m_hat: int | None = None
    iterations: int | None = None

    def __post_init__(self) -> None:
        if not np.isfinite(self.statistic):
            raise ValueError("statistic must be finite")
        if (self.n_hat is None) != (self.m_hat is None):
            raise ValueError("n_hat and m_hat must be set together")
        if self.n_hat is not None and not 1 < self.n_hat < self.m_hat:
            raise ValueError(f"need 1 < n_hat < m_hat, got ({self.n_hat}, {self.m_hat})")


def candidate_pairs(k_p: int) -> list[tuple[int, int]]:
    """All (n, m) with 1 < n < m <= K_P, lexicographic: (K_P-1)(K_P-2)/2 pairs."""
    return [(n, m) for n in range(2, k_p + 1) for m in range(n + 1, k_p + 1)]


def _check_window(data: DataSet) -> None:
    if data.z_p.shape[1] < 3:
        raise ValueError("window must hold at least 3 cells")


def _warn_if_degenerate_steering(steering: SteeringSet) -> None:
    """Full column rank of [v_R, v_SR, v_S] is assumed by the estimator
    derivations but never needed by the final statistics; flag near-parallel
    signatures so the user can interpret amplitude estimates with care."""
    def cos2(a: np.ndarray, b: np.ndarray) -> float:
        num = abs(np.vdot(a, b)) ** 2
        den = np.vdot(a, a).real * np.vdot(b, b).real
        return num / den

    if cos2(steering.v_sr, steering.v_r) > 1 - 1e-12 or \
       cos2(steering.v_sr, steering.v_s) > 1 - 1e-12:
        warnings.warn("v_SR is numerically parallel to v_R or v_S; amplitude "
                      "estimates for the overlapping paths are not separable",
                      RuntimeWarning, stacklevel=3)


def alpha_hat(v: np.ndarray, w: hn.HermitianFactor, z: np.ndarray) -> complex:
    """Amplitude estimate v† W^-1 z / v† W^-1 v for a factored matrix W."""
    return complex(hn.quad_form(v, w, z) / hn.quad_form(v, w, v).real)


def _scatter(x: np.ndarray) -> np.ndarray:
    return x @ x.conj().T


def _s_nm(data: DataSet, n: int, m: int) -> np.ndarray:
    """S_{n,m} = S_S plus the scatter of the window cells not in {1, n, m}."""
    k_p = data.z_p.shape[1]
    keep = [k for k in range(k_p) if k not in (0, n - 1, m - 1)]
    return _scatter(data.r) + _scatter(data.z_p[:, keep])


def _residuals(
    data: DataSet, steering: SteeringSet, n: int, m: int,
    a1: complex, a_n: complex, a_m: complex,
) -> np.ndarray:
    """Columns z_i - alpha_i v_i for cells (1, n, m)."""
    return np.stack(
        [
            data.z_p[:, 0] - a1 * steering.v_r,
            data.z_p[:, n - 1] - a_n * steering.v_sr,
            data.z_p[:, m - 1] - a_m * steering.v_s,
        ],
        axis=1,
    )


# ---------------------------------------------------------------------------
# Reference route: one trial, explicit matrices
# ---------------------------------------------------------------------------

def ep_glrt_km(data: DataSet, steering: SteeringSet, variant: int) -> DetectionOutcome:
    """Known-M estimate-and-plug detector.

    Sum of the three normalized matched-filter energies, maximized over the
    cell pair.  Variant 1 plugs the training scatter S_S for M; variant 2
    plugs S_{n,m}, which changes with the candidate pair.
    """
    if variant not in (1, 2):
        raise ValueError("variant must be 1 or 2")
    _check_window(data)
    _warn_if_degenerate_steering(steering)
    factor_ss = hn.cholesky(_scatter(data.r))
    best, best_pair = -np.inf, None
    for n, m in candidate_pairs(data.z_p.shape[1]):
        factor = factor_ss if variant == 1 else hn.cholesky(_s_nm(data, n, m))
        val = 0.0
        for v, z in (
            (steering.v_r, data.z_p[:, 0]),
            (steering.v_sr, data.z_p[:, n - 1]),
            (steering.v_s, data.z_p[:, m - 1]),
        ):
            val += abs(hn.quad_form(v, factor, z)) ** 2 / hn.quad_form(v, factor, v).real
        if val > best:
            best, best_pair = val, (n, m)
    return DetectionOutcome(statistic=best, n_hat=best_pair[0], m_hat=best_pair[1])


def _logdet_numerator(data: DataSet) -> float:
    """log det(S_P + S_S), shared by every det-ratio statistic."""
    return hn.logdet(hn.cholesky(_scatter(data.z_p) + _scatter(data.r)))


def ep_glrt_ka(data: DataSet, steering: SteeringSet) -> DetectionOutcome:
    """Known-alpha estimate-and-plug detector.

    Amplitudes are estimated once against S_S; the statistic is the ratio
    det(S_P + S_S) / det(S_{n,m} + Y Y†) with Y the residual columns,
    maximized over the cell pair.
    """
    _check_window(data)
    _warn_if_degenerate_steering(steering)
    ld_num = _logdet_numerator(data)
    factor_ss = hn.cholesky(_scatter(data.r))
    best, best_pair = -np.inf, None
    for n, m in candidate_pairs(data.z_p.shape[1]):
        a1 = alpha_hat(steering.v_r, factor_ss, data.z_p[:, 0])
        a_n = alpha_hat(steering.v_sr, factor_ss, data.z_p[:, n - 1])
        a_m = alpha_hat(steering.v_s, factor_ss, data.z_p[:, m - 1])
        y = _residuals(data, steering, n, m, a1, a_n, a_m)
        ld_den = hn.logdet(hn.cholesky(_s_nm(data, n, m) + _scatter(y)))
        val = np.exp(ld_num - ld_den)
        if val > best:
            best, best_pair = val, (n, m)
    return DetectionOutcome(statistic=best, n_hat=best_pair[0], m_hat=best_pair[1])


def a_glrt(data: DataSet, steering: SteeringSet) -> DetectionOutcome:
    """Trace-bound approximate detector.

    Same det ratio as ep_glrt_ka but with amplitudes estimated against
    S_{n,m} for each candidate pair.
    """
    _check_window(data)
    _warn_if_degenerate_steering(steering)
    ld_num = _logdet_numerator(data)
    best, best_pair = -np.inf, None
    for n, m in candidate_pairs(data.z_p.shape[1]):
        s_nm = _s_nm(data, n, m)
        factor_nm = hn.cholesky(s_nm)
        a1 = alpha_hat(steering.v_r, factor_nm, data.z_p[:, 0])
        a_n = alpha_hat(steering.v_sr, factor_nm, data.z_p[:, n - 1])
        a_m = alpha_hat(steering.v_s, factor_nm, data.z_p[:, m - 1])
        q = _scatter(_residuals(data, steering, n, m, a1, a_n, a_m))
        ld_den = hn.logdet(hn.cholesky(s_nm + q))
        val = np.exp(ld_num - ld_den)
        if val > best:
            best, best_pair = val, (n, m)
    return DetectionOutcome(statistic=best, n_hat=best_pair[0], m_hat=best_pair[1])


def _cyclic_pair(
    data: DataSet,
    steering: SteeringSet,
    n: int,
    m: int,
    cfg: CGlrtConfig,
    collect_updates: bool = False,
) -> tuple[float, int, list[float], list[float]]:
    """Run the cyclic amplitude ascent for one candidate pair.

    Returns (final log det denominator, iterations, per-iteration gains,
    per-update log dets).  The likelihood is monotone in exact arithmetic;
    a decrease beyond MONOTONE_SLACK raises NonMonotonic.
    """
    k_tot = data.z_p.shape[1] + data.r.shape[1]
    s_nm = _s_nm(data, n, m)
    factor_nm = hn.cholesky(s_nm)
    z1 = data.z_p[:, 0]
    z_n = data.z_p[:, n - 1]
    z_m = data.z_p[:, m - 1]
    v_r, v_sr, v_s = steering.v_r, steering.v_sr, steering.v_s

    def ld_at(a1: complex, a_n: complex, a_m: complex) -> float:
        y = _residuals(data, steering, n, m, a1, a_n, a_m)
        return hn.logdet(hn.cholesky(s_nm + _scatter(y)))

    # Init: homogeneous degree-1 amplitude estimates against S_{n,m}, so the
    # whole iteration inherits the data-scaling invariance of the statistic.
    a1 = alpha_hat(v_r, factor_nm, z1)
    a_n = alpha_hat(v_sr, factor_nm, z_n)
    a_m = alpha_hat(v_s, factor_nm, z_m)
    ld_prev = ld_at(a1, a_n, a_m)
    slack = MONOTONE_SLACK * max(
        1.0, *(hn.quad_form(z, factor_nm, z).real for z in (z1, z_n, z_m)))
    gains: list[float] = []
    updates: list[float] = [ld_prev] if collect_updates else []
    iterations = 0
    for _ in range(cfg.h_max):
        iterations += 1
        c1 = s_nm + _scatter(
            np.stack([z_n - a_n * v_sr, z_m - a_m * v_s], axis=1))
        a1 = alpha_hat(v_r, hn.cholesky(c1), z1)
        if collect_updates:
            updates.append(ld_at(a1, a_n, a_m))
        c2 = s_nm + _scatter(
            np.stack([z1 - a1 * v_r, z_m - a_m * v_s], axis=1))
        a_n = alpha_hat(v_sr, hn.cholesky(c2), z_n)
        if collect_updates:
            updates.append(ld_at(a1, a_n, a_m))
        c3 = s_nm + _scatter(
            np.stack([z1 - a1 * v_r, z_n - a_n * v_sr], axis=1))
        a_m = alpha_hat(v_s, hn.cholesky(c3), z_m)
        ld_h = ld_at(a1, a_n, a_m)
        if collect_updates:
            updates.append(ld_h)
        gain = np.expm1(k_tot * (ld_prev - ld_h))
        gains.append(float(gain))
        if gain < -slack:
            raise NonMonotonic(
                f"likelihood decreased at pair ({n}, {m}): gain {gain:.3e}")
        ld_prev = ld_h
        if gain < cfg.epsilon:
            break
    return ld_prev, iterations, gains, updates


def c_glrt(
    data: DataSet, steering: SteeringSet, cfg: CGlrtConfig = CGlrtConfig()
) -> DetectionOutcome:
    """Cyclic-ascent detector: coordinate-wise amplitude refinement per pair.

    For each candidate pair the three amplitudes are refined in turn, each
    against a base matrix rebuilt from the other two residuals, until the
    relative likelihood gain drops below cfg.epsilon or cfg.h_max is hit.
    """
    _check_window(data)
    _warn_if_degenerate_steering(steering)
    ld_num = _logdet_numerator(data)
    best, best_pair, best_iter = -np.inf, None, 0
    for n, m in candidate_pairs(data.z_p.shape[1]):
        ld_den, iterations, _, _ = _cyclic_pair(data, steering, n, m, cfg)
        val = np.exp(ld_num - ld_den)
        if val > best:
            best, best_pair, best_iter = val, (n, m), iterations
    return DetectionOutcome(
        statistic=best, n_hat=best_pair[0], m_hat=best_pair[1], iterations=best_iter
    )


def kelly(z: np.ndarray, r: np.ndarray, v: np.ndarray) -> float:
    """Kelly's GLRT on a single cell against training scatter S_S = R R†."""
    factor = hn.cholesky(_scatter(r))
    num = abs(hn.quad_form(v, factor, z)) ** 2
    den = hn.quad_form(v, factor, v).real * (1.0 + hn.quad_form(z, factor, z).real)
    return num / den


def amf(z: np.ndarray, r: np.ndarray, v: np.ndarray) -> float:
    """Adaptive matched filter on a single cell."""
    factor = hn.cholesky(_scatter(r))
    num = abs(hn.quad_form(v, factor, z)) ** 2
    return num / hn.quad_form(v, factor, v).real


# ---------------------------------------------------------------------------
# Batched route: whitened Gram reduction over stacked trials
# ---------------------------------------------------------------------------

@dataclass
class BatchResult:
    """Per-trial outcomes of one detector over a stack of trials."""

    statistic: np.ndarray
    n_hat: np.ndarray | None = None
    m_hat: np.ndarray | None = None
    iterations: np.ndarray | None = None


def _conj_t(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def _small_logdet(a: np.ndarray) -> np.ndarray:
    """log det of a stack of small Hermitian PD matrices."""
    try:
        l = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as err:
        raise hn.NotPositiveDefinite(str(err)) from err
    return 2.0 * np.sum(np.log(np.diagonal(l, axis1=-2, axis2=-1).real), axis=-1)


class _GramWorkspace:
    """Per-trial Gram matrix of whitened window and steering vectors.

    Whitening by the factor of S_S turns every quantity the detectors need
    (quadratic forms and determinants through S_S, S_{n,m}, and their
    residual-augmented updates) into algebra on a (K_P + 3)-dim Gram matrix,
    via Woodbury and the determinant lemma.  Columns 0..K_P-1 index the
    window cells; K_P, K_P+1, K_P+2 index v_R, v_SR, v_S.
    """

    def __init__(self, z_p: np.ndarray, r: np.ndarray, steering: SteeringSet):
        t, n_dim, k_p = z_p.shape
        if r.shape[2] < n_dim:
            raise ValueError(f"need K_S >= N, got K_S={r.shape[2]}, N={n_dim}")
        if k_p < 3:
            raise ValueError("window must hold at least 3 cells")
        self.t, self.k_p = t, k_p
        self.k_tot = k_p + r.shape[2]
        s_s = np.matmul(r, _conj_t(r))
        try:
            l_ss = np.linalg.cholesky(s_s)
        except np.linalg.LinAlgError as err:
            raise hn.NotPositiveDefinite(str(err)) from err
        vmat = np.stack([steering.v_r, steering.v_sr, steering.v_s], axis=1)
        base = np.concatenate(
            [z_p, np.broadcast_to(vmat, (t, n_dim, 3))], axis=2)
        w = np.linalg.solve(l_ss, base)
        self.g = np.matmul(_conj_t(w), w)
        self.iu = (k_p, k_p + 1, k_p + 2)
        # log det(S_P + S_S) - log det(S_S): numerator of every det ratio
        gp = self.g[:, :k_p, :k_p]
        self.ld_num_rel = _small_logdet(np.eye(k_p) + gp)
        # Cell energies and matched-filter terms against S_S (variant-1 /
        # baseline ingredients): num[v, c] = |u_v† c|^2, den[v] = u_v† u_v.
        gvc = self.g[:, k_p:, :k_p]
        self.km1_terms = np.abs(gvc) ** 2 / np.real(
            np.diagonal(self.g, axis1=-2, axis2=-1)[:, k_p:, None])
        self.alpha_ss = gvc / np.real(
            np.diagonal(self.g, axis1=-2, axis2=-1)[:, k_p:, None])
        self.cell_energy = np.real(np.diagonal(self.g, axis1=-2, axis2=-1)[:, :k_p])

    def pair_state(self, n: int, m: int) -> tuple[np.ndarray, np.ndarray, list[int]]:
        """Quadratic forms through S_{n,m} for the six working vectors.

        Returns (h, ld_ex, sel) where h[i, j] = x_i† S_{n,m}^-1 x_j over
        sel = [z_1, z_n, z_m, v_R, v_SR, v_S] (whitened), and ld_ex is
        log det(S_{n,m}) - log det(S_S).
        """
        ex = [k for k in range(self.k_p) if k not in (0, n - 1, m - 1)]
        sel = [0, n - 1, m - 1, *self.iu]
        gsel = self.g[:, sel][:, :, sel]
        if not ex:
            return gsel, np.zeros(self.t), sel
        gex = self.g[:, ex][:, :, ex]
        gse = self.g[:, sel][:, :, ex]
        cap = np.eye(len(ex)) + gex
        ld_ex = _small_logdet(cap)
        h = gsel - np.matmul(gse, np.linalg.solve(cap, _conj_t(gse)))
        return h, ld_ex, sel


def _residual_coeffs(alphas: list[np.ndarray], cols: list[tuple[int, int]]) -> np.ndarray:
    """Coefficient matrix T (.., 6, k): column j = e_cell - alpha_j e_steer."""
    t_len = alphas[0].shape[0]
    k = len(cols)
    coef = np.zeros((t_len, 6, k), dtype=np.complex128)
    for j, ((cell, steer), a) in enumerate(zip(cols, alphas)):
        coef[:, cell, j] = 1.0
        coef[:, steer, j] = -a
    return coef


def _ld_residual(h: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """log det(I_k + T† H T): denominator update for residual columns."""
    k = coef.shape[-1]
    cap = np.eye(k) + np.matmul(_conj_t(coef), np.matmul(h, coef))
    return _small_logdet(cap)


def _downdated(h: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """Quadratic forms through the base matrix plus residual outer products.

    Woodbury: Hc = H - (H T)(I + T† H T)^-1 (T† H).
    """
    p = np.matmul(h, coef)
    cap = np.eye(coef.shape[-1]) + np.matmul(_conj_t(coef), p)
    return h - np.matmul(p, np.linalg.solve(cap, _conj_t(p)))


def _alpha_from_h(h: np.ndarray, steer: int, cell: int) -> np.ndarray:
    return h[:, steer, cell] / h[:, steer, steer].real


# Row indices of the pair workspace h.
_Z1, _ZN, _ZM, _UR, _USR, _US = range(6)


def _cyclic_batch(
    h: np.ndarray,
    k_tot: int,
    cfg: CGlrtConfig,
    collect_trace: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None, np.ndarray | None]:
    """Cyclic amplitude ascent for one pair across a stack of trials.

    Returns (ld_res, iterations, gain_trace, update_lds).  ld_res is
    log det(S_{n,m} + residual scatter) - log det(S_{n,m}) at the final
    amplitudes.  With collect_trace the loop runs all cfg.h_max iterations
    (no early stop) and also records the log det after every coordinate
    update, which is what the convergence experiment consumes.
    """
    t_len = h.shape[0]
    a1 = _alpha_from_h(h, _UR, _Z1)
    a_n = _alpha_from_h(h, _USR, _ZN)
    a_m = _alpha_from_h(h, _US, _ZM)
    cell_diag = np.stack(
        [h[:, i, i].real for i in (_Z1, _ZN, _ZM)], axis=1)
    slack = MONOTONE_SLACK * np.maximum(1.0, cell_diag.max(axis=1))

    def ld_at(a1_, an_, am_, h_):
        coef = _residual_coeffs(
            [a1_, an_, am_], [(_Z1, _UR), (_ZN, _USR), (_ZM, _US)])
        return _ld_residual(h_, coef)

    ld_prev = ld_at(a1, a_n, a_m, h)

    if collect_trace:
        gains = np.zeros((t_len, cfg.h_max))
        update_lds = np.zeros((t_len, 3 * cfg.h_max + 1))
        update_lds[:, 0] = ld_prev
        for it in range(cfg.h_max):
            hc = _downdated(h, _residual_coeffs(
                [a_n, a_m], [(_ZN, _USR), (_ZM, _US)]))
            a1 = _alpha_from_h(hc, _UR, _Z1)
            update_lds[:, 3 * it + 1] = ld_at(a1, a_n, a_m, h)
            hc = _downdated(h, _residual_coeffs(
                [a1, a_m], [(_Z1, _UR), (_ZM, _US)]))
            a_n = _alpha_from_h(hc, _USR, _ZN)
            update_lds[:, 3 * it + 2] = ld_at(a1, a_n, a_m, h)
            hc = _downdated(h, _residual_coeffs(
                [a1, a_n], [(_Z1, _UR), (_ZN, _USR)]))
            a_m = _alpha_from_h(hc, _US, _ZM)
            ld_h = ld_at(a1, a_n, a_m, h)
            update_lds[:, 3 * it + 3] = ld_h
            gains[:, it] = np.expm1(k_tot * (ld_prev - ld_h))
            ld_prev = ld_h
        if np.any(gains < -slack[:, None]):
            raise NonMonotonic("likelihood decreased during cyclic ascent")
        iters = np.full(t_len, cfg.h_max, dtype=np.int64)
        return ld_prev, iters, gains, update_lds

    # Fast path: early stop with active-set compression.
    ld_final = np.empty(t_len)
    iters = np.zeros(t_len, dtype=np.int64)
    active = np.arange(t_len)
    h_act = h
    for it in range(1, cfg.h_max + 1):
        hc = _downdated(h_act, _residual_coeffs(
            [a_n, a_m], [(_ZN, _USR), (_ZM, _US)]))
        a1 = _alpha_from_h(hc, _UR, _Z1)
        hc = _downdated(h_act, _residual_coeffs(
            [a1, a_m], [(_Z1, _UR), (_ZM, _US)]))
        a_n = _alpha_from_h(hc, _USR, _ZN)
        hc = _downdated(h_act, _residual_coeffs(
            [a1, a_n], [(_Z1, _UR), (_ZN, _USR)]))
        a_m = _alpha_from_h(hc, _US, _ZM)
        ld_h = ld_at(a1, a_n, a_m, h_act)
        gain = np.expm1(k_tot * (ld_prev - ld_h))
        if np.any(gain < -slack):
            raise NonMonotonic("likelihood decreased during cyclic ascent")
        done = (gain < cfg.epsilon) | np.full(gain.shape, it == cfg.h_max)
        idx_done = active[done]
        ld_final[idx_done] = ld_h[done]
        iters[idx_done] = it
        if done.all():
            break
        keep = ~done
        active = active[keep]
        h_act = h_act[keep]
        a1, a_n, a_m = a1[keep], a_n[keep], a_m[keep]
        ld_prev = ld_h[keep]
        slack = slack[keep]
    return ld_final, iters, None, None


def c_glrt_gain_trace(
    z_p: np.ndarray,
    r: np.ndarray,
    steering: SteeringSet,
    pair: tuple[int, int],
    cfg: CGlrtConfig = CGlrtConfig(),
) -> tuple[np.ndarray, np.ndarray]:
    """Per-iteration relative gains of the cyclic ascent at a fixed pair.

    Runs all cfg.h_max iterations (no early stop) over a stack of trials.

    Returns:
        gains: (T, h_max) relative likelihood gains per iteration.
        update_lds: (T, 3 h_max + 1) log dets after every coordinate update,
            starting from the initialization.
    """
    ws = _GramWorkspace(z_p, r, steering)
    n, m = pair
    h, _, _ = ws.pair_state(n, m)
    _, _, gains, update_lds = _cyclic_batch(h, ws.k_tot, cfg, collect_trace=True)
    return gains, update_lds


def bounded_cfar_bounds(
    z_p: np.ndarray, r: np.ndarray, steering: SteeringSet
) -> tuple[np.ndarray, np.ndarray]:
    """Structure-invariant upper bounds on the window statistics, per trial.

    Returns (det_ratio_bound, km1_bound): the det-ratio detectors never
    exceed max_{n,m} det(S_P + S_S)/det(S_{n,m}); the variant-1 known-M
    detector never exceeds z_1† S_S^-1 z_1 + max pair sum of cell energies.
    """
    ws = _GramWorkspace(z_p, r, steering)
    pairs = candidate_pairs(ws.k_p)
    ld_ex_min = np.full(ws.t, np.inf)
    pair_energy = np.full(ws.t, -np.inf)
    for n, m in pairs:
        _, ld_ex, _ = ws.pair_state(n, m)
        ld_ex_min = np.minimum(ld_ex_min, ld_ex)
        pair_energy = np.maximum(
            pair_energy, ws.cell_energy[:, n - 1] + ws.cell_energy[:, m - 1])
    det_bound = np.exp(ws.ld_num_rel - ld_ex_min)
    km1_bound = ws.cell_energy[:, 0] + pair_energy
    return det_bound, km1_bound


def batch_evaluate(
    z_p: np.ndarray,
    r: np.ndarray,
    steering: SteeringSet,
    kinds: tuple[DetectorKind, ...] | list[DetectorKind],
    cfg: CGlrtConfig = CGlrtConfig(),
    baseline_cell: int = 1,
) -> dict[DetectorKind, BatchResult]:
    """Evaluate detectors over stacked trials.

    Args:
        z_p: window cells, shape (T, N, K_P).
        r: training vectors, shape (T, N, K_S).
        kinds: detectors to evaluate; window detectors share all per-pair work.
        baseline_cell: 1-based window cell fed to Kelly/AMF (steering v_R).

    Returns:
        kind -> BatchResult with (T,) statistic arrays; window detectors also
        carry the maximizing pair, the cyclic detector its iteration counts.
    """
    _warn_if_degenerate_steering(steering)
    kinds = tuple(kinds)
    ws = _GramWorkspace(z_p, r, steering)
    t_len, k_p = ws.t, ws.k_p
    out: dict[DetectorKind, BatchResult] = {}

    if DetectorKind.KELLY in kinds or DetectorKind.AMF in kinds:
        c = baseline_cell - 1
        if not 0 <= c < k_p:
            raise ValueError(f"baseline cell {baseline_cell} outside window")
        num = np.abs(ws.g[:, ws.iu[0], c]) ** 2
        den_v = ws.g[:, ws.iu[0], ws.iu[0]].real
        if DetectorKind.AMF in kinds:
            out[DetectorKind.AMF] = BatchResult(statistic=num / den_v)
        if DetectorKind.KELLY in kinds:
            out[DetectorKind.KELLY] = BatchResult(
                statistic=num / (den_v * (1.0 + ws.cell_energy[:, c])))

    window_kinds = [k for k in kinds if k in PROPOSED_KINDS]
    if not window_kinds:
        return out

    best = {k: np.full(t_len, -np.inf) for k in window_kinds}
    best_n = {k: np.zeros(t_len, dtype=np.int64) for k in window_kinds}
    best_m = {k: np.zeros(t_len, dtype=np.int64) for k in window_kinds}
    c_iters = np.zeros(t_len, dtype=np.int64)

    def keep_max(kind: DetectorKind, val: np.ndarray, n: int, m: int,
                 iters: np.ndarray | None = None) -> None:
        mask = val > best[kind]
        best[kind][mask] = val[mask]
        best_n[kind][mask] = n
        best_m[kind][mask] = m
        if iters is not None:
            c_iters[mask] = iters[mask]

    for n, m in candidate_pairs(k_p):
        h, ld_ex, _ = ws.pair_state(n, m)

        if DetectorKind.EP_GLRT_KM_1 in window_kinds:
            val = (ws.km1_terms[:, 0, 0]
                   + ws.km1_terms[:, 1, n - 1]
                   + ws.km1_terms[:, 2, m - 1])
            keep_max(DetectorKind.EP_GLRT_KM_1, val, n, m)

        if DetectorKind.EP_GLRT_KM_2 in window_kinds:
            val = (np.abs(h[:, _UR, _Z1]) ** 2 / h[:, _UR, _UR].real
                   + np.abs(h[:, _USR, _ZN]) ** 2 / h[:, _USR, _USR].real
                   + np.abs(h[:, _US, _ZM]) ** 2 / h[:, _US, _US].real)
            keep_max(DetectorKind.EP_GLRT_KM_2, val, n, m)

        if DetectorKind.EP_GLRT_KA in window_kinds:
            coef = _residual_coeffs(
                [ws.alpha_ss[:, 0, 0], ws.alpha_ss[:, 1, n - 1],
                 ws.alpha_ss[:, 2, m - 1]],
                [(_Z1, _UR), (_ZN, _USR), (_ZM, _US)])
            val = np.exp(ws.ld_num_rel - ld_ex - _ld_residual(h, coef))
            keep_max(DetectorKind.EP_GLRT_KA, val, n, m)

        if DetectorKind.A_GLRT in window_kinds:
            coef = _residual_coeffs(
                [_alpha_from_h(h, _UR, _Z1), _alpha_from_h(h, _USR, _ZN),
                 _alpha_from_h(h, _US, _ZM)],
                [(_Z1, _UR), (_ZN, _USR), (_ZM, _US)])
            val = np.exp(ws.ld_num_rel - ld_ex - _ld_residual(h, coef))
            keep_max(DetectorKind.A_GLRT, val, n, m)

        if DetectorKind.C_GLRT in window_kinds:
            ld_res, iters, _, _ = _cyclic_batch(h, ws.k_tot, cfg)
            val = np.exp(ws.ld_num_rel - ld_ex - ld_res)
            keep_max(DetectorKind.C_GLRT, val, n, m, iters=iters)

    for kind in window_kinds:
        out[kind] = BatchResult(
            statistic=best[kind],
            n_hat=best_n[kind],
            m_hat=best_m[kind],
            iterations=c_iters if kind is DetectorKind.C_GLRT else None,
        )
    return out
