"""Precoder optimization with the phases held fixed.

The sub-problem maximizes ``sum_k w_k [ln det(P M_k P^H + I) - ln det(P N_k P^H + I)]``
over the stacked precoder ``P = [P_1, ..., P_K]`` with a per-BS power budget.
``M_k`` and ``N_k`` are block diagonal, so the KKT fixed point splits into one
``(lambda_i I + F_i) vec(P_i) = a_i`` system per BS, and each multiplier
``lambda_i`` is found by bisection on the power function ``phi_i``.
"""
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import _accel
from .config import ValidationError
from .metrics import all_effective_cov, effective_cov_N, herm, logdet


@dataclass
class PrecoderSubproblem:
    Ms: np.ndarray        # Ms[i, k] = M_{i,k}, (K, K, M, M)
    Ns: np.ndarray        # Ns[i, k] = i-th diagonal block of N_k, (K, K, M, M)
    weights: np.ndarray
    P_A: float

    @property
    def K(self):
        return self.Ms.shape[0]

    @property
    def M(self):
        return self.Ms.shape[-1]

    def block_M(self, k):
        return sla.block_diag(*self.Ms[:, k])

    def block_N(self, k):
        return sla.block_diag(*self.Ns[:, k])


@dataclass
class MultiplierState:
    lambdas: np.ndarray
    f: list          # eigenvalues of F_i
    D: list          # eigenvectors of F_i
    a: list


@dataclass
class PrecoderResult:
    P: list
    trace: list
    lambdas: np.ndarray
    n_iter: int
    converged: bool


def build_subproblem(covs, v_bar, config, Ms=None):
    if Ms is None:
        Ms = all_effective_cov(covs, np.asarray(v_bar, dtype=complex))
    Ns = Ms.copy()
    for k in range(covs.K):
        Ns[k, k] = herm(Ms[k, k] - effective_cov_N(covs, k, Ms=Ms))
    return PrecoderSubproblem(Ms, Ns, np.asarray(config.weights, dtype=float), float(config.P_A))


def default_init(config):
    P = np.zeros((config.M_e, config.M), dtype=complex)
    P[:, :config.M_e] = np.sqrt(config.P_A / config.M) * np.eye(config.M_e)
    return [P.copy() for _ in range(config.K)]


def _cell_inverses(sub, P):
    """``X_k^{-1}``, ``Y_k^{-1}`` and the log-det objective at ``P``."""
    Me = P[0].shape[0]
    eye = np.eye(Me)
    Xinv, Yinv, g = [], [], 0.0
    for k in range(sub.K):
        X = herm(sum(P[i] @ sub.Ms[i, k] @ P[i].conj().T for i in range(sub.K)) + eye)
        Y = herm(sum(P[i] @ sub.Ns[i, k] @ P[i].conj().T for i in range(sub.K)) + eye)
        if sub.weights[k] != 0.0:
            g += sub.weights[k] * (logdet(X) - logdet(Y))
        Xinv.append(np.linalg.inv(X))
        Yinv.append(np.linalg.inv(Y))
    return Xinv, Yinv, g


def objective(sub, P):
    """``g_bar(P) = sum_k w_k R_k^ub`` in nats."""
    return _cell_inverses(sub, P)[2]


def lagrangian_gradient(sub, P, lambdas):
    """Conjugate gradient of the Lagrangian w.r.t. each ``P_i^*``."""
    Xinv, Yinv, _ = _cell_inverses(sub, P)
    out = []
    for i in range(sub.K):
        g = -lambdas[i] * P[i]
        for k in range(sub.K):
            w = sub.weights[k]
            if w:
                g = g + w * (Xinv[k] @ P[i] @ sub.Ms[i, k] - Yinv[k] @ P[i] @ sub.Ns[i, k])
        out.append(g)
    return out


def _vec(A):
    return A.reshape(-1, order="F")


def _unvec(x, shape):
    return x.reshape(shape, order="F")


def kkt_step(P, lambdas, sub, weights=None):
    """One fixed-point update of the stacked KKT system, built with explicit Kronecker products.

    Reference implementation on the full ``K*M*M_e`` system; the optimizer uses
    the equivalent per-BS blocks.
    """
    w = sub.weights if weights is None else np.asarray(weights, dtype=float)
    K, M = sub.K, sub.M
    Me = P[0].shape[0]
    Pbig = np.hstack(P)
    eye = np.eye(Me)
    lhs = np.kron(np.kron(np.diag(np.asarray(lambdas, dtype=float)), np.eye(M)).T, eye)
    rhs = np.zeros((K * M * Me, K * M * Me), dtype=complex)
    for k in range(K):
        Mk, Nk = sub.block_M(k), sub.block_N(k)
        X = Pbig @ Mk @ Pbig.conj().T + eye
        Y = Pbig @ Nk @ Pbig.conj().T + eye
        lhs = lhs + w[k] * np.kron(Nk.T, np.linalg.inv(Y))
        rhs = rhs + w[k] * np.kron(Mk.T, np.linalg.inv(X))
    if np.linalg.cond(lhs) > 1e12:
        raise np.linalg.LinAlgError("kkt_step: ill-conditioned system")
    x = np.linalg.solve(lhs, rhs @ _vec(Pbig))
    Pn = _unvec(x, Pbig.shape)
    return [Pn[:, i * M:(i + 1) * M] for i in range(K)]


def multiplier_system(sub, P, Xinv=None, Yinv=None):
    """Eigen-decompositions of ``F_i`` and the right-hand sides ``a_i`` at ``P``."""
    if Xinv is None:
        Xinv, Yinv, _ = _cell_inverses(sub, P)
    fs, Ds, as_ = [], [], []
    for i in range(sub.K):
        F = 0.0
        a = 0.0
        for k in range(sub.K):
            w = sub.weights[k]
            if w:
                F = F + w * np.kron(sub.Ns[i, k].T, Yinv[k])
                a = a + w * _vec(Xinv[k] @ P[i] @ sub.Ms[i, k])
        if np.isscalar(F):
            n = P[i].size
            F, a = np.zeros((n, n), dtype=complex), np.zeros(n, dtype=complex)
        f, D = np.linalg.eigh(herm(F))
        if f.min(initial=0.0) < -1e-10 * max(1.0, abs(f).max(initial=0.0)):
            raise ValidationError("F_i is not positive semidefinite")
        fs.append(np.maximum(f, 0.0))
        Ds.append(D)
        as_.append(a)
    return fs, Ds, as_


def phi(lam, f, b):
    """Power ``sum_m |b_m|^2 / (lam + f_m)^2`` of the BS precoder at multiplier ``lam``."""
    b2 = np.abs(np.asarray(b)) ** 2
    return _accel.phi(lam, b2, np.asarray(f, dtype=float))


def solve_multiplier(f, b, P_A, eps=1e-8):
    """Smallest ``lambda >= 0`` with ``phi(lambda) <= P_A`` (within ``eps``)."""
    if not P_A > 0:
        raise ValidationError("P_A must be > 0")
    b2 = np.abs(np.asarray(b)) ** 2
    f = np.asarray(f, dtype=float)
    if phi(0.0, f, b) <= P_A:
        return 0.0
    hi = _accel.bisect(b2, f, P_A, eps)
    # the root never exceeds sqrt(sum |b|^2 / P_A); clamp away round-off
    return min(_newton_polish(hi, b2, f, P_A), float(np.sqrt(b2.sum() / P_A)))


def _newton_polish(lam, b2, f, P_A, steps=6):
    # phi is convex and decreasing, so Newton from the bisection bracket
    # settles on the root from the left within a few steps
    best = lam
    for _ in range(steps):
        den = lam + f
        if np.any(den[b2 > 0] <= 0):
            break
        val = np.sum(b2 / den ** 2) - P_A
        slope = -2.0 * np.sum(b2 / den ** 3)
        if slope == 0.0:
            break
        lam_new = max(lam - val / slope, 0.0)
        if abs(lam_new - lam) <= 1e-15 * max(lam, 1.0):
            lam = lam_new
            break
        lam = lam_new
    if lam > 0 and _accel.phi(lam, b2, f) <= P_A * (1 + 1e-12):
        return lam
    return best


def _precoder_from(lam, f, D, a, shape):
    b = D.conj().T @ a
    den = lam + f
    coef = np.zeros_like(b)
    nz = (b != 0) & (den > 0)
    coef[nz] = b[nz] / den[nz]
    return _unvec(D @ coef, shape)


def update_precoders(sub, P, eps_bisect=1e-8, Xinv=None, Yinv=None):
    """Block form of the KKT update with the multipliers re-solved at ``P``."""
    fs, Ds, as_ = multiplier_system(sub, P, Xinv, Yinv)
    lams = np.empty(sub.K)
    out = []
    for i in range(sub.K):
        b = Ds[i].conj().T @ as_[i]
        lams[i] = solve_multiplier(fs[i], b, sub.P_A, eps_bisect)
        out.append(_precoder_from(lams[i], fs[i], Ds[i], as_[i], P[i].shape))
    return out, lams


def _fit_budget(P, P_A):
    out = []
    for p in P:
        pw = np.linalg.norm(p) ** 2
        out.append(p * np.sqrt(P_A / pw) if pw > P_A else p)
    return out


def _flat(P):
    # real coordinates: the update map is not holomorphic, so mixing weights must be real
    return np.concatenate([p.ravel() for p in P]).view(float)


def _unflat(x, like):
    z = x.view(complex)
    out, o = [], 0
    for p in like:
        out.append(z[o:o + p.size].reshape(p.shape))
        o += p.size
    return out


class _Anderson:
    """Type-II Anderson mixing over the last ``memory`` fixed-point residuals."""

    def __init__(self, memory):
        self.memory = memory
        self.X, self.F = [], []

    def reset(self):
        self.X, self.F = [], []

    def propose(self, x, fx):
        self.X = (self.X + [x])[-(self.memory + 1):]
        self.F = (self.F + [fx])[-(self.memory + 1):]
        if len(self.F) < 2:
            return None
        dF = np.diff(np.array(self.F), axis=0).T
        dX = np.diff(np.array(self.X), axis=0).T
        gamma = np.linalg.lstsq(dF, fx, rcond=None)[0]
        out = x + fx - (dX + dF) @ gamma
        return out if np.all(np.isfinite(out)) else None


def optimize_precoders(sub, config, P_init=None, eps=None, max_iter=None, step_tol=None,
                       eps_bisect=None, max_halvings=30, anderson=5):
    """Damped KKT fixed-point iteration with safeguarded Anderson acceleration.

    Each iteration solves the multipliers at the current point and forms the
    update. With ``anderson > 0`` a mixed candidate built from the last
    ``anderson`` residuals (rescaled onto the power budget) is tried first;
    otherwise, or if it lowers the objective, the update is mixed in with
    step ``eta`` (1, halved until the objective does not decrease). Stops
    when the relative objective change is at most ``eps`` and, if given, the
    precoder change is at most ``step_tol``.
    """
    eps = config.eps_precoder if eps is None else eps
    max_iter = config.max_precoder if max_iter is None else max_iter
    eps_bisect = config.eps_bisect if eps_bisect is None else eps_bisect
    P = default_init(config) if P_init is None else [np.array(p, dtype=complex) for p in P_init]
    for p in P:
        if np.linalg.norm(p) ** 2 > sub.P_A + 1e-8:
            raise ValidationError("P_init violates the power budget")
    Xinv, Yinv, g = _cell_inverses(sub, P)
    trace = [g]
    lams = np.zeros(sub.K)
    if not np.any(sub.weights):
        return PrecoderResult(P, trace, lams, 0, True)

    mixer = _Anderson(anderson) if anderson else None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        target, lams = update_precoders(sub, P, eps_bisect, Xinv, Yinv)
        # slack absorbs round-off once the objective has saturated
        floor = g - 1e-12 * max(1.0, abs(g))
        accepted = False
        if mixer is not None:
            x = _flat(P)
            xa = mixer.propose(x, _flat(target) - x)
            if xa is not None:
                cand = _fit_budget(_unflat(xa, P), sub.P_A)
                Xc, Yc, gc = _cell_inverses(sub, cand)
                accepted = gc >= floor
        if not accepted:
            eta = 1.0
            for _ in range(max_halvings):
                cand = [(1 - eta) * p + eta * t for p, t in zip(P, target)]
                Xc, Yc, gc = _cell_inverses(sub, cand)
                if gc >= floor:
                    accepted = True
                    break
                eta *= 0.5
            if mixer is not None and eta < 1.0:
                mixer.reset()
        if not accepted:
            converged = True
            break
        step = np.sqrt(sum(np.linalg.norm(c - p) ** 2 for c, p in zip(cand, P)))
        rel = abs(gc - g) / max(abs(g), 1e-300)
        P, Xinv, Yinv, g = cand, Xc, Yc, gc
        trace.append(g)
        if rel <= eps and (step_tol is None or step <= step_tol * max(1.0, np.sqrt(sum(np.linalg.norm(p) ** 2 for p in P)))):
            converged = True
            break
    if not converged:
        warnings.warn("optimize_precoders: iteration cap reached", RuntimeWarning)
    # multipliers consistent with the returned point
    _, lams = update_precoders(sub, P, eps_bisect, Xinv, Yinv)
    return PrecoderResult(P, trace, lams, it, converged)
