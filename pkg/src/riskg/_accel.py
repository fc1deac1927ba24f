"""Hot kernels with a numba path and a pure-numpy path.

The numba path is used when numba imports and ``RISKG_DISABLE_NUMBA`` is not
set to a truthy value. Both paths are always importable so tests and the
benchmark can call either one explicitly (``kernels_numpy`` / ``kernels_numba``).
"""
import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None

_FLAG = os.environ.get("RISKG_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = numba is not None and _FLAG not in ("1", "true", "yes", "on")


# ---------------------------------------------------------------- numpy path

def _congruence_np(R, x, M):
    """Return ``(Rx, A)`` for the congruence ``A = (x^H kron I) R (x kron I)``.

    ``R`` is ``(M*n, M*n)`` with row index ``p*M + a``; ``Rx[p, a, b]`` is
    ``sum_q R[(p, a), (q, b)] x[q]`` and is reused by the gradient contraction.
    """
    n = x.shape[0]
    Rx = (R @ np.kron(x[:, None], np.eye(M))).reshape(n, M, M)
    A = np.tensordot(x.conj(), Rx, axes=(0, 0))
    return Rx, A


def _contract_np(Rx, W):
    # g[p] = sum_ab Rx[p, a, b] W[b, a]
    n, M, _ = Rx.shape
    return Rx.reshape(n, M * M) @ W.T.reshape(M * M)


def _phi_np(lam, b2, f):
    den = lam + f
    out = 0.0
    for k in range(b2.shape[0]):
        if b2[k] == 0.0:
            continue
        if den[k] <= 0.0:
            return math.inf
        out += b2[k] / (den[k] * den[k])
    return out


def _bisect_np(b2, f, power, eps, max_iter):
    lo = 0.0
    hi = math.sqrt(b2.sum() / power)
    # f >= 0 keeps phi(hi) <= power; the loop below guards against round-off
    while _phi_np(hi, b2, f) > power:
        hi *= 2.0
    it = 0
    while hi - lo > eps and it < max_iter:
        mid = 0.5 * (lo + hi)
        if _phi_np(mid, b2, f) <= power:
            hi = mid
        else:
            lo = mid
        it += 1
    return hi


# ---------------------------------------------------------------- numba path

if numba is not None:

    @numba.njit(cache=True)
    def _congruence_nb(R, x, M):
        n = x.shape[0]
        Rx = np.zeros((n, M, M), dtype=np.complex128)
        for p in range(n):
            for a in range(M):
                row = p * M + a
                for q in range(n):
                    xq = x[q]
                    base = q * M
                    for b in range(M):
                        Rx[p, a, b] += R[row, base + b] * xq
        A = np.zeros((M, M), dtype=np.complex128)
        for p in range(n):
            xc = np.conj(x[p])
            for a in range(M):
                for b in range(M):
                    A[a, b] += xc * Rx[p, a, b]
        return Rx, A

    @numba.njit(cache=True)
    def _contract_nb(Rx, W):
        n, M, _ = Rx.shape
        g = np.zeros(n, dtype=np.complex128)
        for p in range(n):
            acc = 0j
            for a in range(M):
                for b in range(M):
                    acc += Rx[p, a, b] * W[b, a]
            g[p] = acc
        return g

    _phi_nb = numba.njit(cache=True)(_phi_np)

    @numba.njit(cache=True)
    def _bisect_nb(b2, f, power, eps, max_iter):
        lo = 0.0
        hi = math.sqrt(b2.sum() / power)
        while _phi_nb(hi, b2, f) > power:
            hi *= 2.0
        it = 0
        while hi - lo > eps and it < max_iter:
            mid = 0.5 * (lo + hi)
            if _phi_nb(mid, b2, f) <= power:
                hi = mid
            else:
                lo = mid
            it += 1
        return hi


class _Kernels:
    def __init__(self, congruence, contract, phi, bisect, name):
        self.congruence = congruence
        self.contract = contract
        self.phi = phi
        self.bisect = bisect
        self.name = name


kernels_numpy = _Kernels(_congruence_np, _contract_np, _phi_np, _bisect_np, "numpy")
if numba is not None:
    kernels_numba = _Kernels(_congruence_nb, _contract_nb, _phi_nb, _bisect_nb, "numba")
else:  # pragma: no cover
    kernels_numba = None

kernels = kernels_numba if USE_NUMBA else kernels_numpy


def congruence(R, x, M):
    return kernels.congruence(np.ascontiguousarray(R, dtype=np.complex128),
                              np.ascontiguousarray(x, dtype=np.complex128), M)


def contract(Rx, W):
    return kernels.contract(Rx, np.ascontiguousarray(W, dtype=np.complex128))


def phi(lam, b2, f):
    return kernels.phi(float(lam), np.asarray(b2, dtype=np.float64),
                       np.asarray(f, dtype=np.float64))


def bisect(b2, f, power, eps, max_iter=200):
    return kernels.bisect(np.asarray(b2, dtype=np.float64),
                          np.asarray(f, dtype=np.float64),
                          float(power), float(eps), int(max_iter))
