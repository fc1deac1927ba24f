"""Phase optimization with the precoders held fixed (projected gradient ascent).

The objective depends on ``v_bar`` only through the congruences
``A_{i,j} = (v_bar^H kron I) R_r[i, j] (v_bar kron I)``. Writing its
differential as ``sum_{i,j} tr(W_{i,j} dA_{i,j})`` gives the conjugate
gradient ``sum_{i,j} T_{i,j} v_bar`` with ``[T]_{n,m} = tr(W B_{n,m})``, where
``B_{n,m}`` is the ``(n, m)`` block of ``R_r``.
"""
import warnings
from dataclasses import dataclass

import numpy as np

from . import _accel
from .config import ValidationError
from .metrics import herm, logdet


@dataclass
class PhaseResult:
    v_bar: np.ndarray
    trace: list
    n_iter: int
    converged: bool
    step: float


def project_unit_modulus(x):
    # angle(0) = 0, so zero entries map to 1
    return np.exp(1j * np.angle(np.asarray(x, dtype=complex)))


def riemannian_gradient(grad, v_bar):
    """Tangent component of ``grad`` on the unit-modulus torus at ``v_bar``."""
    return grad - np.real(grad * v_bar.conj()) * v_bar


def _check(covs, precoders, v_bar):
    v_bar = np.asarray(v_bar, dtype=complex)
    if v_bar.shape != (covs.NL,):
        raise ValidationError(f"v_bar must have length {covs.NL}")
    if len(precoders) != covs.K:
        raise ValidationError("need one precoder per BS")
    return v_bar


def eval_objective_v(covs, precoders, v_bar, weights):
    """Weighted upper bound written in the ``(I_NL kron P_i)`` form.

    Independent of the congruence kernels; used to cross-check them.
    """
    v_bar = _check(covs, precoders, v_bar)
    K, M, NL = covs.K, covs.M, covs.NL
    Me = precoders[0].shape[0]
    Ve = np.kron(v_bar.conj()[None, :], np.eye(Me))        # (v^H kron I_Me)
    Vm = np.kron(v_bar.conj()[None, :], np.eye(M))         # (v^H kron I_M)
    big = [np.kron(np.eye(NL), P) for P in precoders]
    total = 0.0
    for k in range(K):
        w = weights[k]
        if w == 0:
            continue
        L = np.eye(Me, dtype=complex)
        for i in range(K):
            L = L + precoders[i] @ covs.R_d[i, k] @ precoders[i].conj().T
            L = L + Ve @ big[i] @ covs.R_r[i, k] @ big[i].conj().T @ Ve.conj().T
        Z = np.eye(M, dtype=complex)
        for j in range(K):
            Z = Z + covs.R_d[k, j] + Vm @ covs.R_r[k, j] @ Vm.conj().T
        C = precoders[k] @ covs.R_d[k, k] + Ve @ big[k] @ covs.R_r[k, k] @ Vm.conj().T
        S = L - C @ np.linalg.solve(herm(Z), C.conj().T)
        total += w * (logdet(L) - logdet(S))
    return float(total)


def _value_and_grad(covs, precoders, v_bar, weights, need_grad=True):
    K, M = covs.K, covs.M
    Me = precoders[0].shape[0]
    has_ris = covs.NL > 0
    Rx = {}
    Ms = np.empty((K, K, M, M), dtype=complex)
    for i in range(K):
        for j in range(K):
            if has_ris:
                Rx[i, j], A = _accel.congruence(covs.R_r[i, j], v_bar, M)
                Ms[i, j] = herm(covs.R_d[i, j] + A)
            else:
                Ms[i, j] = covs.R_d[i, j]
    eyeM, eyeE = np.eye(M), np.eye(Me)
    W = np.zeros((K, K, M, M), dtype=complex)
    total = 0.0
    for k in range(K):
        w = weights[k]
        if w == 0:
            continue
        P = precoders
        Ry = herm(sum(P[i] @ Ms[i, k] @ P[i].conj().T for i in range(K)) + eyeE)
        Z = herm(Ms[k].sum(axis=0) + eyeM)
        C = P[k] @ Ms[k, k]
        Zinv = np.linalg.inv(Z)
        S = herm(Ry - C @ Zinv @ C.conj().T)
        total += w * (logdet(Ry) - logdet(S))
        if not need_grad:
            continue
        Ryinv, Sinv = np.linalg.inv(Ry), np.linalg.inv(S)
        D = Ryinv - Sinv
        for i in range(K):
            W[i, k] += w * (P[i].conj().T @ D @ P[i])
        CZ = C @ Zinv                                  # C Z^{-1}
        Wz = -CZ.conj().T @ Sinv @ CZ
        for j in range(K):
            W[k, j] += w * Wz
        X = CZ.conj().T @ Sinv @ P[k]
        W[k, k] += w * (X + X.conj().T)
    if not need_grad:
        return float(total), None
    grad = np.zeros(covs.NL, dtype=complex)
    if has_ris:
        for i in range(K):
            for j in range(K):
                if np.any(W[i, j]):
                    grad += _accel.contract(Rx[i, j], W[i, j])
    return float(total), grad


def objective_v(covs, precoders, v_bar, weights):
    """Weighted upper bound via the congruence kernels (the optimizer's objective)."""
    v_bar = _check(covs, precoders, v_bar)
    return _value_and_grad(covs, precoders, v_bar, weights, need_grad=False)[0]


def analytic_gradient(covs, precoders, v_bar, weights):
    """Conjugate (Wirtinger) gradient of the weighted upper bound w.r.t. ``v_bar^*``."""
    v_bar = _check(covs, precoders, v_bar)
    return _value_and_grad(covs, precoders, v_bar, weights)[1]


def random_phases(n, seed):
    rng = np.random.default_rng(seed)
    return np.exp(2j * np.pi * rng.random(n))


def optimize_phases(covs, precoders, config, v_init=None, eps=None, max_iter=None,
                    grad_tol=None, mu0=1.0, shrink=0.5, armijo=1e-4, max_halvings=40,
                    warm_start=True):
    """Projected gradient ascent with Armijo backtracking.

    Steps move along ``grad / sum(w)``. The first trial step of each
    iteration is ``mu0`` or, with ``warm_start``, twice the previously
    accepted step. Stops when the relative objective
    change is at most ``eps`` (and, if ``grad_tol`` is given, the Riemannian
    gradient norm is at most ``grad_tol * max(1, |g|)``), or when no step
    passes the line search.
    """
    eps = config.eps_phase if eps is None else eps
    max_iter = config.max_phase if max_iter is None else max_iter
    w = np.asarray(config.weights, dtype=float)
    x = np.ones(covs.NL, dtype=complex) if v_init is None else np.asarray(v_init, dtype=complex)
    x = _check(covs, precoders, x)
    if np.any(np.abs(np.abs(x) - 1) > 1e-10):
        raise ValidationError("v_init must be unit-modulus")
    f, g = _value_and_grad(covs, precoders, x, w)
    # steps act on the weight-normalized gradient so iterates do not depend on the scale of w
    scale = float(w.sum()) if w.sum() > 0 else 1.0
    trace = [f]
    mu_prev = mu0 / 2.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if not np.any(g):
            converged = True
            break
        mu = 2.0 * mu_prev if warm_start else mu0
        accepted = False
        for _ in range(max_halvings + 1):
            cand = project_unit_modulus(x + (mu / scale) * g)
            fc = _value_and_grad(covs, precoders, cand, w, need_grad=False)[0]
            gain = 2.0 * np.real(np.vdot(g, cand - x))
            if fc >= f and fc >= f + armijo * gain:
                accepted = True
                break
            mu *= shrink
        if not accepted:
            converged = True
            break
        mu_prev = mu
        rel = abs(fc - f) / max(abs(f), 1e-300)
        x = cand
        f, g = _value_and_grad(covs, precoders, x, w)
        trace.append(f)
        if rel <= eps:
            if grad_tol is None or np.linalg.norm(riemannian_gradient(g, x)) <= grad_tol * max(1.0, abs(f)):
                converged = True
                break
    if not converged:
        warnings.warn("optimize_phases: iteration cap reached", RuntimeWarning)
    return PhaseResult(x, trace, it, converged, mu_prev)
