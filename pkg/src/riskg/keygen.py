"""Channel probing, quantization, bit disagreement and a two-test randomness check."""
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .channel import sample_realization
from .config import ValidationError, as_seed_sequence
from .metrics import all_effective_cov, downlink_cov, herm, uplink_cov


@dataclass
class ProbingOutcome:
    y: np.ndarray        # UT-side feature, (..., M_e)
    z: np.ndarray        # BS-side feature, (..., M_e)
    z_tilde: np.ndarray  # raw BS estimate, (..., M)


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def effective_channels(realization, v_bar):
    """All effective channels ``h[..., i, j, :]`` for reflection vector ``conj(v_bar)``."""
    G, h_r = realization.G, realization.h_r
    v = np.conj(np.asarray(v_bar, dtype=complex))
    L, N = G.shape[-3], G.shape[-1]
    if v.shape != (N * L,):
        raise ValidationError(f"v_bar must have length {N * L}")
    vh = v.reshape(L, N) * h_r                          # (..., L, K, N)
    return realization.h_d + np.einsum("...ilmn,...ljn->...ijm", G, vh)


def probe_round(realization, precoders, v_bar, seed, noise_std=1.0):
    """Downlink and uplink probing over one realization (or a batch of them).

    Downlink at UT ``k``: ``y_k = sum_i P_i h_{i,k} + n``. Uplink at BS ``k``:
    ``z~_k = sum_j h_{k,j} + n'`` and ``z_k = P_k z~_k``. Both directions see
    the same channels and independent unit-variance noise.
    """
    H = effective_channels(realization, v_bar)          # (..., K, K, M)
    P = np.asarray(precoders)                           # (K, Me, M)
    K, Me, M = P.shape
    if H.shape[-3:] != (K, K, M):
        raise ValidationError("precoders do not match the realization")
    rng = np.random.default_rng(seed)
    batch = H.shape[:-3]
    y = np.einsum("iem,...ikm->...ke", P, H) + noise_std * _cn(rng, batch + (K, Me))
    z_tilde = H.sum(axis=-2) + noise_std * _cn(rng, batch + (K, M))
    z = np.einsum("kem,...km->...ke", P, z_tilde)
    return [ProbingOutcome(y[..., k, :], z[..., k, :], z_tilde[..., k, :]) for k in range(K)]


def simulate_features(geometry, fading, config, precoders, v_bar, n_rounds, seed, chunk=2048,
                      with_ris=True):
    """Independent probing rounds (fresh channels each round); returns ``(y, z)`` of shape ``(n_rounds, K, M_e)``."""
    ys, zs = [], []
    done = 0
    children = as_seed_sequence(seed).spawn((n_rounds + chunk - 1) // chunk)
    for ss in children:
        n = min(chunk, n_rounds - done)
        ch_seed, noise_seed = ss.spawn(2)
        real = sample_realization(geometry, fading, config, ch_seed, size=n)
        if not with_ris:
            real = real.without_ris()
        out = probe_round(real, precoders, v_bar, noise_seed)
        ys.append(np.stack([o.y for o in out], axis=1))
        zs.append(np.stack([o.z for o in out], axis=1))
        done += n
    return np.concatenate(ys), np.concatenate(zs)


def cell_statistics(covs, precoders, v_bar, k):
    """``(R_y, R_z, R_yz)`` of cell ``k``'s UT and BS features."""
    Ms = all_effective_cov(covs, np.asarray(v_bar, dtype=complex))
    Pk = precoders[k]
    R_y = downlink_cov(Ms, precoders, k)
    R_z = herm(Pk @ uplink_cov(Ms, k) @ Pk.conj().T)
    R_yz = Pk @ Ms[k, k] @ Pk.conj().T
    return R_y, R_z, R_yz


def canonical_transforms(R_y, R_z, R_yz, tol=1e-3):
    """Canonical-correlation maps ``(T_y, T_z, sigma)`` for the two features.

    ``u = T_y y`` and ``w = T_z z`` have identity covariance and
    ``E{u w^H} = diag(sigma)``. Only pairs with correlation above ``tol`` are
    kept (the default drops pairs carrying under about 1e-6 nats, whose bits
    would be pure noise); the BS feature is first restricted to the range of
    ``R_z``.
    """
    wy, Uy = np.linalg.eigh(herm(R_y))
    if wy.min() <= 0:
        raise ValidationError("R_y must be positive definite")
    A = (Uy / np.sqrt(wy)).conj().T
    wz, Uz = np.linalg.eigh(herm(R_z))
    keep = wz > 1e-12 * max(wz.max(initial=0.0), 1e-300)
    B = (Uz[:, keep] / np.sqrt(wz[keep])).conj().T
    if B.shape[0] == 0:
        return A[:0], B, np.zeros(0)
    U, sig, Vh = np.linalg.svd(A @ R_yz @ B.conj().T)
    r = int(np.count_nonzero(sig > tol))
    return U[:, :r].conj().T @ A, Vh[:r] @ B, sig[:r]


def key_bits(y, z, transforms):
    """Quantized bits of both ends after the canonical-correlation map."""
    T_y, T_z, _ = transforms
    if T_y.shape[0] == 0:
        return np.zeros(0, dtype=np.uint8), np.zeros(0, dtype=np.uint8)
    return quantize(y @ T_y.T), quantize(z @ T_z.T)


def quantize(features):
    """Median-threshold quantizer.

    ``features`` has shape ``(rounds, dims)`` (complex). Each real and
    imaginary component is compared with its median over rounds; values above
    it give 1. Output order is round-major with ``re, im`` interleaved per
    component. A constant component yields zeros and a warning.
    """
    x = np.asarray(features)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ValidationError("quantize needs at least 2 rounds")
    re = np.empty(x.shape[:1] + (2 * x.shape[1],))
    re[:, 0::2] = x.real
    re[:, 1::2] = x.imag if np.iscomplexobj(x) else 0.0
    if not np.iscomplexobj(x):
        re = re[:, 0::2]
    med = np.median(re, axis=0)
    if np.any(np.ptp(re, axis=0) == 0):
        warnings.warn("quantize: constant component, emitting zeros", RuntimeWarning)
    return (re > med).astype(np.uint8).reshape(-1)


def bdr(a, b):
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    if a.shape != b.shape:
        raise ValidationError("bit sequences differ in length")
    if a.size == 0:
        raise ValidationError("empty bit sequence")
    return float(np.count_nonzero(a != b)) / a.size


def monobit_test(bits):
    b = np.asarray(bits, dtype=np.int64)
    n = b.size
    s = abs(int(np.sum(2 * b - 1)))
    return math.erfc(s / math.sqrt(2.0 * n))


def runs_test(bits):
    b = np.asarray(bits, dtype=np.int64)
    n = b.size
    pi = b.mean()
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return 0.0
    v = 1 + int(np.count_nonzero(b[1:] != b[:-1]))
    num = abs(v - 2.0 * n * pi * (1 - pi))
    return math.erfc(num / (2.0 * math.sqrt(2.0 * n) * pi * (1 - pi)))


def randomness_check(bits, alpha=0.01):
    """p-values of the frequency and runs tests; a test passes when ``p > alpha``."""
    b = np.asarray(bits)
    if b.size < 100:
        raise ValidationError("randomness_check needs at least 100 bits")
    p = {"frequency": monobit_test(b), "runs": runs_test(b)}
    return {name: (val, val > alpha) for name, val in p.items()}


def pack_bits(bits):
    """Bytes with little-endian bit order (bit ``i`` of the stream is bit ``i % 8`` of byte ``i // 8``)."""
    return np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little").tobytes()


def write_bits(path, bits):
    with open(path, "wb") as fh:
        fh.write(pack_bits(bits))
