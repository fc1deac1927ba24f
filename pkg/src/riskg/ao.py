"""Alternating optimization over precoders and phases, plus the two baselines."""
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .metrics import evaluate
from .phase import objective_v, optimize_phases, random_phases
from .precoder import build_subproblem, default_init, optimize_precoders


@dataclass
class AOResult:
    P: list
    v_bar: np.ndarray
    wskr: float                  # exact weighted sum rate at (P, v_bar), nats
    wskr_ub: float               # optimized objective at (P, v_bar), nats
    per_cell_rate: np.ndarray
    trace: list                  # objective after each outer iteration (entry 0: initial point)
    outer_iters: int
    inner_iters: list = field(default_factory=list)   # (precoder, phase) per outer iteration
    stage_seconds: dict = field(default_factory=dict)
    converged: bool = True
    inner_traces: list = field(default_factory=list)  # (precoder trace, phase trace) per outer iteration


def _finish(covs, config, P, v_bar, trace, outer, inner, seconds, converged, inner_traces):
    rep = evaluate(config, covs, P, v_bar)
    return AOResult(P, v_bar, rep.wskr, rep.wskr_ub, rep.per_cell_rate, trace, outer,
                    inner, seconds, converged, inner_traces)


def alternate(covs, config, eps_outer=None, v_init=None, P_init=None, order="pv",
              precoder_kw=None, phase_kw=None):
    """Alternate precoder and phase stages until the relative objective change is at most ``eps_outer``.

    ``order`` is ``"pv"`` (precoders first) or ``"vp"``. Covariances stay
    fixed for the whole run.
    """
    if order not in ("pv", "vp"):
        raise ValueError("order must be 'pv' or 'vp'")
    eps_outer = config.eps_outer if eps_outer is None else eps_outer
    precoder_kw = precoder_kw or {}
    phase_kw = phase_kw or {}
    w = np.asarray(config.weights, dtype=float)
    v = np.ones(covs.NL, dtype=complex) if v_init is None else np.asarray(v_init, dtype=complex)
    P = default_init(config) if P_init is None else [np.array(p, dtype=complex) for p in P_init]
    g = objective_v(covs, P, v, w)
    trace = [g]
    inner, inner_traces = [], []
    seconds = {"precoder": 0.0, "phase": 0.0}
    converged = False
    t = 0
    for t in range(1, config.max_outer + 1):
        n_p = n_v = 0
        tr_p, tr_v = [], []
        for stage in order:
            t0 = time.perf_counter()
            if stage == "p":
                res = optimize_precoders(build_subproblem(covs, v, config), config, P_init=P,
                                         **precoder_kw)
                P, n_p, tr_p = res.P, res.n_iter, res.trace
                seconds["precoder"] += time.perf_counter() - t0
            else:
                res = optimize_phases(covs, P, config, v_init=v, **phase_kw)
                v, n_v, tr_v = res.v_bar, res.n_iter, res.trace
                seconds["phase"] += time.perf_counter() - t0
        inner.append((n_p, n_v))
        inner_traces.append((tr_p, tr_v))
        g_new = objective_v(covs, P, v, w)
        trace.append(g_new)
        rel = abs(g_new - g) / max(abs(g), 1e-300)
        g = g_new
        if rel <= eps_outer:
            converged = True
            break
    if not converged:
        warnings.warn("alternate: outer iteration cap reached", RuntimeWarning)
    return _finish(covs, config, P, v, trace, t, inner, seconds, converged, inner_traces)


def _precoders_only(covs, config, v, precoder_kw=None):
    t0 = time.perf_counter()
    w = np.asarray(config.weights, dtype=float)
    P0 = default_init(config)
    g0 = objective_v(covs, P0, v, w)
    res = optimize_precoders(build_subproblem(covs, v, config), config, P_init=P0,
                             **(precoder_kw or {}))
    seconds = {"precoder": time.perf_counter() - t0, "phase": 0.0}
    trace = [g0, objective_v(covs, res.P, v, w)]
    return _finish(covs, config, res.P, v, trace, 1, [(res.n_iter, 0)], seconds, res.converged,
                   [(res.trace, [])])


def baseline_no_ris(covs, config, precoder_kw=None):
    """RIS channels zeroed; precoders optimized on the direct links only."""
    return _precoders_only(covs.without_ris(), config, np.ones(covs.NL, dtype=complex),
                           precoder_kw)


def baseline_rand_phase(covs, config, seed, precoder_kw=None):
    """Uniform random phases drawn once from ``seed``; precoders optimized."""
    return _precoders_only(covs, config, random_phases(covs.NL, seed), precoder_kw)
