"""Key generation rates from channel second moments.

All rates are in nats per channel use. ``v_bar`` is the conjugated phase
vector: the physical reflection vector is ``v = conj(v_bar)``.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import _accel
from .config import ValidationError


class NumericalConsistencyError(ArithmeticError):
    """A computed quantity violates a mathematical guarantee beyond tolerance."""


NEG_CLAMP = 1e-9


def herm(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2).conj())


def logdet(A):
    """``ln det`` of a Hermitian PD matrix via Cholesky, with trace-scaled jitter on failure."""
    A = herm(np.asarray(A, dtype=complex))
    n = A.shape[-1]
    if n == 0:
        return 0.0
    jitter = 0.0
    base = max(np.real(np.trace(A)) / n, 1e-300)
    for _ in range(8):
        try:
            c = np.linalg.cholesky(A + jitter * np.eye(n))
            return 2.0 * float(np.sum(np.log(np.real(np.diagonal(c)))))
        except np.linalg.LinAlgError:
            jitter = 1e-12 * base if jitter == 0.0 else jitter * 100.0
    raise NumericalConsistencyError("logdet: matrix is not positive definite")


def _solve_pd(A, B):
    return sla.solve(herm(A), B, assume_a="pos")


def cascade_cov(R_r, v_bar, M):
    """``(v_bar^H kron I_M) R_r (v_bar kron I_M)``."""
    if R_r.shape[-1] != M * v_bar.shape[0]:
        raise ValidationError("cascade covariance and phase vector sizes disagree")
    return _accel.congruence(R_r, v_bar, M)[1]


def effective_cov_M(covs, i, k, v_bar):
    """``M_{i,k}``: second moment of the effective channel BS ``i`` -> UT ``k``."""
    v_bar = np.asarray(v_bar, dtype=complex)
    if v_bar.shape != (covs.NL,):
        raise ValidationError(f"v_bar must have length {covs.NL}")
    out = covs.R_d[i, k].astype(complex)
    if covs.NL:
        out = out + cascade_cov(covs.R_r[i, k], v_bar, covs.M)
    return herm(out)


def all_effective_cov(covs, v_bar):
    """Array ``Ms[i, k] = M_{i,k}`` of shape ``(K, K, M, M)``."""
    K = covs.K
    return np.array([[effective_cov_M(covs, i, k, v_bar) for k in range(K)] for i in range(K)])


def uplink_cov(Ms, k):
    """``Z_k = sum_j M_{k,j} + I``, covariance of the raw BS estimate."""
    return herm(Ms[k].sum(axis=0) + np.eye(Ms.shape[-1]))


def effective_cov_N(covs, k, precoders=None, v_bar=None, Ms=None):
    """``N_{k,k} = M_{k,k} Z_k^{-1} M_{k,k}``. ``precoders`` is accepted for symmetry and unused."""
    if Ms is None:
        Ms = all_effective_cov(covs, v_bar)
    Z = uplink_cov(Ms, k)
    if np.linalg.cond(Z) > 1e12:
        raise NumericalConsistencyError("effective_cov_N: ill-conditioned uplink covariance")
    Mkk = Ms[k, k]
    return herm(Mkk @ _solve_pd(Z, Mkk))


def downlink_cov(Ms, P, k):
    """``R_y = sum_i P_i M_{i,k} P_i^H + I``."""
    Me = P[0].shape[0]
    return herm(sum(P[i] @ Ms[i, k] @ P[i].conj().T for i in range(len(P))) + np.eye(Me))


def _clamp(r, what):
    if r < -NEG_CLAMP:
        raise NumericalConsistencyError(f"{what}: negative rate {r:.3e}")
    return max(r, 0.0)


def _check_inputs(config, covs, precoders, v_bar):
    if len(precoders) != covs.K:
        raise ValidationError("need one precoder per BS")
    for P in precoders:
        if P.shape != (config.M_e, config.M):
            raise ValidationError(f"precoders must be {config.M_e}x{config.M}")
        if not np.all(np.isfinite(P)):
            raise ValidationError("precoder has non-finite entries")
    v_bar = np.asarray(v_bar)
    if v_bar.shape != (covs.NL,):
        raise ValidationError(f"v_bar must have length {covs.NL}")


def rate_exact_from_cov(Ms, P, k):
    """Exact rate of cell ``k`` given the effective covariances ``Ms``.

    The BS feature is first restricted to the range of its covariance, which
    leaves the mutual information unchanged and keeps the log-dets finite
    when ``P_k`` is rank deficient.
    """
    Ry = downlink_cov(Ms, P, k)
    Pk = P[k]
    Rz = herm(Pk @ uplink_cov(Ms, k) @ Pk.conj().T)
    Ryz = Pk @ Ms[k, k] @ Pk.conj().T
    w, U = np.linalg.eigh(Rz)
    keep = w > 1e-12 * max(w.max(initial=0.0), 1e-300)
    if not np.any(keep) or not np.any(Ryz):
        return 0.0
    U = U[:, keep]
    Rz = herm(U.conj().T @ Rz @ U)
    Ryz = Ryz @ U
    cond = Rz - Ryz.conj().T @ _solve_pd(Ry, Ryz)
    return logdet(Rz) - logdet(cond)


def rate_ub_from_cov(Ms, P, k):
    """Upper bound ``ln det R_y - ln det(R_y - P_k N_kk P_k^H)`` for cell ``k``."""
    Ry = downlink_cov(Ms, P, k)
    Mkk = Ms[k, k]
    Nkk = Mkk @ _solve_pd(uplink_cov(Ms, k), Mkk)
    S = Ry - P[k] @ Nkk @ P[k].conj().T
    return logdet(Ry) - logdet(S)


@dataclass
class RateReport:
    per_cell_rate: np.ndarray
    per_cell_upper_bound: np.ndarray = None
    wskr: float = None
    wskr_ub: float = None


def kgr_exact(config, covs, precoders, v_bar, validate=True):
    """Per-cell exact rates (clamped at zero) and their weighted sum."""
    _check_inputs(config, covs, precoders, v_bar)
    if validate:
        covs.check()
    Ms = all_effective_cov(covs, np.asarray(v_bar, dtype=complex))
    rates = np.array([_clamp(rate_exact_from_cov(Ms, precoders, k), "kgr_exact")
                      for k in range(covs.K)])
    return RateReport(rates, wskr=wskr(config.weights, rates))


def kgr_upper_bound(config, covs, precoders, v_bar, validate=False):
    _check_inputs(config, covs, precoders, v_bar)
    if validate:
        covs.check()
    Ms = all_effective_cov(covs, np.asarray(v_bar, dtype=complex))
    return np.array([_clamp(rate_ub_from_cov(Ms, precoders, k), "kgr_upper_bound")
                     for k in range(covs.K)])


def evaluate(config, covs, precoders, v_bar, validate=False):
    """Exact rates and upper bounds together."""
    rep = kgr_exact(config, covs, precoders, v_bar, validate=validate)
    ub = kgr_upper_bound(config, covs, precoders, v_bar)
    rep.per_cell_upper_bound = ub
    rep.wskr_ub = wskr(config.weights, ub)
    return rep


def kgr_no_ris(covs, powers):
    """Rates without RIS when every BS uses ``sqrt(P_i/M) I`` as precoder."""
    powers = np.asarray(powers, dtype=float)
    K, M = covs.K, covs.M
    if powers.shape != (K,) or np.any(powers < 0):
        raise ValidationError("powers must be K nonnegative values")
    Rd = covs.R_d
    eye = np.eye(M)
    out = np.empty(K)
    for k in range(K):
        Z = herm(Rd[k].sum(axis=0) + eye)
        Ry = herm(sum(powers[i] / M * Rd[i, k] for i in range(K)) + eye)
        cross = Rd[k, k] @ _solve_pd(Ry, Rd[k, k])
        r = logdet(Z) - logdet(Z - powers[k] / M * cross)
        out[k] = _clamp(r, "kgr_no_ris")
    return out


def wskr(weights, rates):
    w = np.asarray(weights, dtype=float)
    r = np.asarray(rates, dtype=float)
    if w.shape != r.shape:
        raise ValidationError("weights and rates must have equal length")
    if np.any(w < 0):
        raise ValidationError("weights must be >= 0")
    return float(np.dot(w, r))
