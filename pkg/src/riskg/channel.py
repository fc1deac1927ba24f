"""Scenario geometry, fading, channel realizations and channel covariances.

Index conventions used throughout the package:

* ``h_d[..., i, j, :]``  direct channel BS ``i`` -> UT ``j`` (length ``M``)
* ``G[..., i, l, :, :]`` BS ``i`` -> RIS ``l`` (``M x N``)
* ``h_r[..., l, j, :]``  RIS ``l`` -> UT ``j`` (length ``N``)

The stacked cascade ``H_r[i, j] = [G[i, 0], ..., G[i, L-1]] @ diag(h_r[:, j])``
is ``M x NL``; its column-major vectorization has entry ``n*M + a`` equal to
``H_r[a, n]``. Covariances ``R_r[i, j]`` are second moments of that vector.
"""
from dataclasses import dataclass, replace

import numpy as np

from .config import ValidationError, as_seed_sequence

SPEED_OF_LIGHT = 299_792_458.0


def path_loss(d, zeta0, alpha):
    """Amplitude gain ``sqrt(zeta0 * d**-alpha)`` of a link of length ``d`` metres."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path_loss: distance must be positive")
    return np.sqrt(zeta0 * d ** (-alpha))


@dataclass(frozen=True)
class ScenarioGeometry:
    bs_positions: np.ndarray
    ut_positions: np.ndarray
    ris_positions: np.ndarray
    # unit vectors along which the ULAs are laid out
    bs_axis: tuple = (0.0, 1.0, 0.0)
    ris_axis: tuple = (1.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("bs_positions", "ut_positions", "ris_positions"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if arr.size == 0:
                arr = arr.reshape(0, 3)
            if arr.shape[-1] != 3:
                raise ValidationError(f"{name} must hold 3-D coordinates")
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} has non-finite entries")
            object.__setattr__(self, name, arr)

    def check(self, config):
        if len(self.bs_positions) != config.K or len(self.ut_positions) != config.K:
            raise ValidationError("geometry: BS/UT count must equal K")
        if len(self.ris_positions) != config.L:
            raise ValidationError("geometry: RIS count must equal L")


@dataclass(frozen=True)
class FadingParams:
    zeta0: float = 1e-3
    alpha_bu: float = 3.75
    alpha_ris: float = 2.2
    rician_beta: float = 3.0
    # channels are scaled by sqrt(pilot_power / noise_power) so the noise in
    # the probing model has unit variance
    noise_power: float = 1.0
    pilot_power: float = 1.0
    carrier_hz: float = 3.5e9

    def __post_init__(self):
        if self.zeta0 < 0:
            raise ValidationError("zeta0 must be >= 0")
        if self.alpha_bu <= 0 or self.alpha_ris <= 0:
            raise ValidationError("path-loss exponents must be > 0")
        if self.rician_beta < 0:
            raise ValidationError("rician_beta must be >= 0")
        if self.noise_power <= 0 or self.pilot_power < 0 or self.carrier_hz <= 0:
            raise ValidationError("noise_power, carrier_hz must be > 0")

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def snr_scale(self):
        return np.sqrt(self.pilot_power / self.noise_power)


@dataclass
class ChannelRealization:
    """One draw (or a batch of draws along leading axes) of every channel."""

    h_d: np.ndarray
    G: np.ndarray
    h_r: np.ndarray

    def without_ris(self):
        return ChannelRealization(self.h_d, np.zeros_like(self.G), np.zeros_like(self.h_r))

    def cascade(self, i, j):
        """``H_r[i, j] = G_i diag(h_j)`` with the RIS blocks stacked, shape ``(..., M, NL)``."""
        Gi = self.G[..., i, :, :, :]                      # (..., L, M, N)
        Gi = np.moveaxis(Gi, -3, -2)                      # (..., M, L, N)
        Gi = Gi.reshape(Gi.shape[:-2] + (-1,))            # (..., M, NL)
        hj = self.h_r[..., :, j, :]
        hj = hj.reshape(hj.shape[:-2] + (-1,))            # (..., NL)
        return Gi * hj[..., None, :]


@dataclass
class CovarianceSet:
    """Second moments of every direct and cascaded link."""

    R_d: np.ndarray   # (K, K, M, M)
    R_r: np.ndarray   # (K, K, MNL, MNL)
    N: int
    L: int

    @property
    def K(self):
        return self.R_d.shape[0]

    @property
    def M(self):
        return self.R_d.shape[-1]

    @property
    def NL(self):
        return self.N * self.L

    def without_ris(self):
        return replace(self, R_r=np.zeros_like(self.R_r))

    def scaled(self, direct=1.0, cascade=1.0):
        return replace(self, R_d=self.R_d * direct, R_r=self.R_r * cascade)

    def check(self, herm_tol=1e-10, psd_tol=1e-8):
        for name in ("R_d", "R_r"):
            R = getattr(self, name)
            if not np.all(np.isfinite(R)):
                raise ValidationError(f"{name} has non-finite entries")
            if R.size == 0:
                continue
            scale = max(np.abs(R).max(), 1.0)
            if np.abs(R - np.swapaxes(R, -1, -2).conj()).max() > herm_tol * scale:
                raise ValidationError(f"{name} is not Hermitian")
            ev = np.linalg.eigvalsh(R)
            top = np.maximum(ev[..., -1:], 0.0)
            if np.any(ev < -psd_tol * np.maximum(top, 1e-300)):
                raise ValidationError(f"{name} is not positive semidefinite")
        return self


def _ula(center, axis, count, spacing):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    offsets = (np.arange(count) - (count - 1) / 2.0) * spacing
    return np.asarray(center, dtype=float)[None, :] + offsets[:, None] * axis[None, :]


def los_components(geometry, fading, config):
    """Unit-modulus LoS responses from exact element-to-node distances.

    Returns ``(G_los, h_los)`` with shapes ``(K, L, M, N)`` and ``(L, K, N)``.
    Far from the arrays these reduce to the usual half-wavelength ULA ramps.
    """
    lam = fading.wavelength
    K, L, M, N = config.K, config.L, config.M, config.N
    G_los = np.empty((K, L, M, N), dtype=complex)
    h_los = np.empty((L, K, N), dtype=complex)
    ris_el = [_ula(p, geometry.ris_axis, N, lam / 2) for p in geometry.ris_positions]
    for i, bs in enumerate(geometry.bs_positions):
        bs_el = _ula(bs, geometry.bs_axis, M, lam / 2)
        for l in range(L):
            d = np.linalg.norm(bs_el[:, None, :] - ris_el[l][None, :, :], axis=-1)
            G_los[i, l] = np.exp(-2j * np.pi * d / lam)
    for l in range(L):
        for j, ut in enumerate(geometry.ut_positions):
            d = np.linalg.norm(ris_el[l] - ut[None, :], axis=-1)
            h_los[l, j] = np.exp(-2j * np.pi * d / lam)
    return G_los, h_los


def link_amplitudes(geometry, fading):
    """Large-scale amplitudes ``(a_d[i, j], a_g[i, l], a_h[l, j])``.

    Every link carries the SNR factor ``sqrt(pilot/noise)`` once: the direct
    link fully, and each cascade hop with its square root.
    """
    s = fading.snr_scale
    bs, ut, ris = geometry.bs_positions, geometry.ut_positions, geometry.ris_positions

    def amp(a, b, alpha):
        d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
        return path_loss(d, fading.zeta0, alpha) if d.size else d

    a_d = s * amp(bs, ut, fading.alpha_bu)
    a_g = np.sqrt(s) * amp(bs, ris, fading.alpha_ris)
    a_h = np.sqrt(s) * amp(ris, ut, fading.alpha_ris)
    return a_d, a_g, a_h


def _streams(seed):
    ss = as_seed_sequence(seed)
    direct, ris = ss.spawn(2)
    return np.random.default_rng(direct), np.random.default_rng(ris)


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_realization(geometry, fading, config, seed, size=None):
    """Draw channel realizations.

    Direct links are Rayleigh. RIS hops are Rician with factor ``beta``: a
    geometric LoS response with a uniformly random common phase (per hop and
    draw) weighted ``sqrt(beta/(1+beta))`` plus Rayleigh scatter weighted
    ``sqrt(1/(1+beta))``. ``size`` adds a leading batch axis.

    Direct and RIS links come from separate seed streams, so the direct
    channels for a given seed do not depend on ``N`` or ``L``.
    """
    geometry.check(config)
    K, L, M, N = config.K, config.L, config.M, config.N
    batch = () if size is None else (int(size),)
    rng_d, rng_r = _streams(seed)
    a_d, a_g, a_h = link_amplitudes(geometry, fading)

    h_d = a_d[..., None] * _cn(rng_d, batch + (K, K, M))

    beta = fading.rician_beta
    w_los, w_nlos = np.sqrt(beta / (1 + beta)), np.sqrt(1 / (1 + beta))
    G_los, h_los = los_components(geometry, fading, config)
    ph_g = np.exp(2j * np.pi * rng_r.random(batch + (K, L, 1, 1)))
    ph_h = np.exp(2j * np.pi * rng_r.random(batch + (L, K, 1)))
    G = w_los * ph_g * G_los + w_nlos * _cn(rng_r, batch + (K, L, M, N))
    G = G * a_g[:, :, None, None]
    h_r = w_los * ph_h * h_los + w_nlos * _cn(rng_r, batch + (L, K, N))
    h_r = h_r * a_h[:, :, None]
    return ChannelRealization(h_d, G, h_r)


def effective_channel(realization, i, j, v):
    """``h_d[i, j] + sum_l G[i, l] diag(v_l) h_r[l, j]`` for phase vector ``v`` (length NL)."""
    G = realization.G
    L, N = G.shape[-3], G.shape[-1]
    v = np.asarray(v)
    if v.shape[-1] != N * L:
        raise ValidationError(f"phase vector must have length {N * L}")
    vl = v.reshape(v.shape[:-1] + (L, N))
    out = realization.h_d[..., i, j, :].copy()
    for l in range(L):
        out = out + np.einsum("...mn,...n->...m", G[..., i, l, :, :],
                              vl[..., l, :] * realization.h_r[..., l, j, :])
    return out


def vec_cascade(realization, i, j):
    """Column-major vectorization of ``H_r[i, j]``, shape ``(..., M*NL)``."""
    H = realization.cascade(i, j)
    return np.swapaxes(H, -1, -2).reshape(H.shape[:-2] + (-1,))


def estimate_covariances(geometry, fading, config, n_samples, seed, chunk=512):
    """Monte-Carlo second moments ``E{x x^H}`` (mean kept) of every link."""
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    K, M, NL = config.K, config.M, config.N * config.L
    R_d = np.zeros((K, K, M, M), dtype=complex)
    R_r = np.zeros((K, K, M * NL, M * NL), dtype=complex)
    seeds = as_seed_sequence(seed).spawn((n_samples + chunk - 1) // chunk)
    done = 0
    for ss in seeds:
        n = min(chunk, n_samples - done)
        real = sample_realization(geometry, fading, config, ss, size=n)
        R_d += np.einsum("sija,sijb->ijab", real.h_d, real.h_d.conj())
        for i in range(K):
            for j in range(K):
                X = vec_cascade(real, i, j)
                R_r[i, j] += X.T @ X.conj()
        done += n
    R_d /= n_samples
    R_r /= n_samples
    R_d = 0.5 * (R_d + np.swapaxes(R_d, -1, -2).conj())
    R_r = 0.5 * (R_r + np.swapaxes(R_r, -1, -2).conj())
    return CovarianceSet(R_d, R_r, config.N, config.L)


def analytic_covariances(geometry, fading, config):
    """Closed-form second moments of the channel model in ``sample_realization``.

    Direct links: ``a_d**2 I``. Cascade: the hops are independent, so block
    ``(n, m)`` of ``R_r`` factorizes into ``E{h_n h_m*} E{g_n g_m^H}``; blocks
    across different RISs vanish because their LoS phases are independent.
    """
    geometry.check(config)
    K, L, M, N = config.K, config.L, config.M, config.N
    a_d, a_g, a_h = link_amplitudes(geometry, fading)
    beta = fading.rician_beta
    kap = beta / (1 + beta)
    G_los, h_los = los_components(geometry, fading, config)
    R_d = (a_d ** 2)[:, :, None, None] * np.eye(M)[None, None]
    R_r = np.zeros((K, K, M * N * L, M * N * L), dtype=complex)
    eyeN = np.eye(N)
    for i in range(K):
        for j in range(K):
            for l in range(L):
                Eh = a_h[l, j] ** 2 * (kap * np.outer(h_los[l, j], h_los[l, j].conj())
                                       + (1 - kap) * eyeN)
                g = G_los[i, l]                                   # (M, N)
                # EG[n, a, m, b] = E{G[a, n] G[b, m]*}
                EG = kap * np.einsum("an,bm->namb", g, g.conj())
                EG += (1 - kap) * np.einsum("nm,ab->namb", eyeN, np.eye(M))
                EG *= a_g[i, l] ** 2
                block = Eh[:, None, :, None] * EG
                sl = slice(l * N * M, (l + 1) * N * M)
                R_r[i, j, sl, sl] = block.reshape(N * M, N * M)
    return CovarianceSet(R_d.astype(complex), R_r, N, L)


def commutation_matrix(m, n):
    """Permutation ``K`` of size ``mn`` with ``K @ vec(A) == vec(A.T)`` for ``m x n`` A."""
    if m < 1 or n < 1:
        raise ValueError("commutation_matrix: dimensions must be >= 1")
    K = np.zeros((m * n, m * n))
    i, j = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
    K[(j + i * n).ravel(), (i + j * m).ravel()] = 1.0
    return K


def vec(A):
    """Column-major vectorization."""
    return np.asarray(A).reshape(-1, order="F")
