"""Scenario presets and the config-driven sweep runner."""
import copy
import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .ao import alternate, baseline_no_ris, baseline_rand_phase
from .channel import (FadingParams, ScenarioGeometry, analytic_covariances,
                      estimate_covariances)
from .config import SystemConfig, ValidationError
from .keygen import bdr, canonical_transforms, cell_statistics, key_bits, simulate_features

SWEEP_VARIABLES = ("transmit_power_dbm", "ris_elements", "ris_x_m", "ut_x_m")
SCHEMES = ("proposed", "no_ris", "rand_phase")
CSV_COLUMNS = ("sweep_value", "scheme", "wskr_bits", "wskr_ub_bits", "bdr", "outer_iters",
               "seed_hash")

HEIGHT_BS, HEIGHT_RIS, HEIGHT_UT = 30.0, 10.0, 1.5


def dbm_to_mw(dbm):
    return 10.0 ** (dbm / 10.0)


@dataclass(frozen=True)
class Preset:
    name: str
    K: int
    L: int
    defaults: dict

    def geometry(self, ris_x_m=None, ut_x_m=None, bs_heights=None):
        d = self.defaults
        ris_x = d["ris_x_m"] if ris_x_m is None else ris_x_m
        ut_x = d["ut_x_m"] if ut_x_m is None else ut_x_m
        bs_h = d["bs_heights"] if bs_heights is None else bs_heights
        if self.name == "two-cell":
            bs = [[0.0, 0.0, bs_h[0]], [600.0, 0.0, bs_h[1]]]
            ut = [[ut_x, 0.0, HEIGHT_UT], [600.0 - ut_x, 0.0, HEIGHT_UT]]
            ris = [[ris_x, 0.0, HEIGHT_RIS]]
        else:
            bs = [[0.0, 0.0, bs_h[0]], [600.0, 0.0, bs_h[1]],
                  [600.0, 600.0, bs_h[2]], [0.0, 600.0, bs_h[3]]]
            ut = [[ut_x, 0.0, HEIGHT_UT], [600.0 - ut_x, 0.0, HEIGHT_UT],
                  [ut_x, 600.0, HEIGHT_UT], [600.0 - ut_x, 600.0, HEIGHT_UT]]
            ris = [[ris_x, 0.0, HEIGHT_RIS], [600.0 - ris_x, 600.0, HEIGHT_RIS]]
        return ScenarioGeometry(np.array(bs), np.array(ut), np.array(ris))

    def fading(self, **overrides):
        d = dict(self.defaults)
        d.update({k: v for k, v in overrides.items() if v is not None})
        noise_mw = dbm_to_mw(d["noise_dbm"])
        pilot_mw = dbm_to_mw(d["pilot_power_dbm"])
        return FadingParams(zeta0=10.0 ** (d["zeta0_db"] / 10.0), alpha_bu=d["alpha_bu"],
                            alpha_ris=d["alpha_ris"], rician_beta=d["rician_beta"],
                            noise_power=noise_mw, pilot_power=pilot_mw,
                            carrier_hz=d["carrier_ghz"] * 1e9)

    # fading constants, exposed for convenience
    @property
    def alpha_bu(self):
        return self.defaults["alpha_bu"]

    @property
    def alpha_ris(self):
        return self.defaults["alpha_ris"]

    @property
    def rician_beta(self):
        return self.defaults["rician_beta"]


_COMMON = {
    "alpha_bu": 3.75,
    "alpha_ris": 2.2,
    "rician_beta": 3.0,
    "noise_dbm": -90.0,
    "zeta0_db": -30.0,
    "pilot_power_dbm": 30.0,
    "carrier_ghz": 3.5,
    "transmit_power_dbm": 30.0,
    "M": 4,
    "M_e": 4,
    "N": 60,
}

PRESETS = {
    # BS heights as printed for this layout (10 m and 0 m)
    "two-cell": Preset("two-cell", 2, 1, dict(_COMMON, ris_x_m=300.0, ut_x_m=280.0,
                                              bs_heights=(10.0, 0.0))),
    "four-cell": Preset("four-cell", 4, 2, dict(_COMMON, ris_x_m=280.0, ut_x_m=280.0,
                                                bs_heights=(HEIGHT_BS,) * 4)),
}


def preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise ValidationError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")


# ---------------------------------------------------------------- config

def load_schema():
    return json.loads(resources.files("riskg").joinpath("config_schema.json").read_text())


@dataclass
class ExperimentConfig:
    preset: str
    sweep_variable: str
    sweep_values: list
    schemes: tuple = SCHEMES
    draws: int = 20
    seed: int = 0
    covariance_method: str = "monte_carlo"
    covariance_samples: int = 1000
    bdr_rounds: int = 512
    output: str = None
    params: dict = field(default_factory=dict)   # overrides of preset defaults
    weights: tuple = None
    tolerances: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw):
        import jsonschema
        try:
            jsonschema.validate(raw, load_schema())
        except jsonschema.ValidationError as exc:
            raise ValidationError(f"config: {exc.message}") from None
        pr = preset(raw["preset"])
        sweep = raw["sweep"]
        cfg = cls(preset=pr.name, sweep_variable=sweep["variable"],
                  sweep_values=[float(x) for x in sweep["values"]],
                  schemes=tuple(raw.get("schemes", SCHEMES)),
                  draws=int(raw.get("draws", 20)), seed=int(raw.get("seed", 0)),
                  covariance_method=raw.get("covariance", {}).get("method", "monte_carlo"),
                  covariance_samples=int(raw.get("covariance", {}).get("samples", 1000)),
                  bdr_rounds=int(raw.get("bdr_rounds", 512)), output=raw.get("output"),
                  params=dict(raw.get("params", {})),
                  weights=tuple(raw["weights"]) if "weights" in raw else None,
                  tolerances=dict(raw.get("tolerances", {})))
        cfg.check()
        return cfg

    def check(self):
        if self.sweep_variable not in SWEEP_VARIABLES:
            raise ValidationError(f"sweep variable must be one of {SWEEP_VARIABLES}")
        if not self.sweep_values:
            raise ValidationError("sweep values must be nonempty")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ValidationError(f"unknown scheme {s!r}")
        if self.draws < 1:
            raise ValidationError("draws must be >= 1")
        if self.bdr_rounds < 2:
            raise ValidationError("bdr_rounds must be >= 2")
        pr = preset(self.preset)
        # build one system config per sweep value to surface dimension errors early
        for val in self.sweep_values:
            self.system(val)
        if self.weights is not None and len(self.weights) != pr.K:
            raise ValidationError(f"weights must have length {pr.K}")
        return self

    def param(self, name, sweep_value=None):
        if sweep_value is not None and name == self.sweep_variable:
            return sweep_value
        if name in self.params:
            return self.params[name]
        return preset(self.preset).defaults[name]

    def system(self, sweep_value):
        pr = preset(self.preset)
        N = self.param("ris_elements", sweep_value) if self.sweep_variable == "ris_elements" \
            else self.params.get("N", pr.defaults["N"])
        if float(N) != int(N):
            raise ValidationError("ris_elements must be integers")
        P_A = dbm_to_mw(self.param("transmit_power_dbm", sweep_value)) / \
            dbm_to_mw(self.param("pilot_power_dbm"))
        tol = {k: self.tolerances[k] for k in ("eps_outer", "eps_precoder", "eps_phase",
                                                "eps_bisect", "max_outer", "max_precoder",
                                                "max_phase") if k in self.tolerances}
        return SystemConfig(K=pr.K, M=int(self.param("M")), M_e=int(self.param("M_e")),
                            N=int(N), L=pr.L, P_A=P_A, weights=self.weights, **tol)

    def scenario(self, sweep_value):
        pr = preset(self.preset)
        geo = pr.geometry(ris_x_m=self.param("ris_x_m", sweep_value),
                          ut_x_m=self.param("ut_x_m", sweep_value),
                          bs_heights=self.params.get("bs_heights"))
        keys = ("alpha_bu", "alpha_ris", "rician_beta", "noise_dbm", "zeta0_db",
                "pilot_power_dbm", "carrier_ghz")
        fad = pr.fading(**{k: self.params.get(k) for k in keys})
        return geo, fad, self.system(sweep_value)


# ---------------------------------------------------------------- runner

@dataclass
class ResultRow:
    sweep_value: float
    scheme: str
    wskr_bits: float
    wskr_ub_bits: float
    bdr: float
    outer_iters: float
    seed_hash: str

    def check(self):
        if self.wskr_bits > self.wskr_ub_bits + 1e-6:
            raise ValidationError("result row: WSKR exceeds its upper bound")
        if not 0.0 <= self.bdr <= 1.0:
            raise ValidationError("result row: BDR outside [0, 1]")
        return self


def draw_seeds(seed, draw):
    """Independent seeds of one draw: covariance estimate, random phases, probing."""
    ss = np.random.SeedSequence([int(seed), int(draw)])
    return ss.spawn(3)


def seed_hash(seed, draws):
    h = hashlib.sha256(f"{int(seed)}:{int(draws)}".encode()).hexdigest()
    return h[:16]


def _mean_bdr(geo, fad, cfg, covs, P, v_bar, rounds, seed, with_ris=True):
    """BDR of the key bits averaged over cells; a cell with no shared component counts as 0.5."""
    y, z = simulate_features(geo, fad, cfg, P, v_bar, rounds, seed, with_ris=with_ris)
    out = []
    for k in range(cfg.K):
        tr = canonical_transforms(*cell_statistics(covs, P, v_bar, k))
        a, b = key_bits(y[:, k], z[:, k], tr)
        out.append(bdr(a, b) if a.size else 0.5)
    return float(np.mean(out))


def run_point(exp, sweep_value, draw):
    """All schemes for one (sweep value, draw); returns ``{scheme: (wskr, wskr_ub, bdr, outer)}`` in nats."""
    geo, fad, cfg = exp.scenario(sweep_value)
    cov_seed, phase_seed, probe_seed = draw_seeds(exp.seed, draw)
    if exp.covariance_method == "analytic":
        covs = analytic_covariances(geo, fad, cfg)
    else:
        covs = estimate_covariances(geo, fad, cfg, exp.covariance_samples, cov_seed)
    out = {}
    for scheme in exp.schemes:
        if scheme == "proposed":
            res = alternate(covs, cfg)
        elif scheme == "no_ris":
            res = baseline_no_ris(covs, cfg)
        else:
            res = baseline_rand_phase(covs, cfg, phase_seed)
        # No-RIS probing runs without the RIS channels as well
        with_ris = scheme != "no_ris"
        b = _mean_bdr(geo, fad, cfg, covs if with_ris else covs.without_ris(), res.P,
                      res.v_bar, exp.bdr_rounds, probe_seed, with_ris=with_ris)
        out[scheme] = (res.wskr, res.wskr_ub, b, res.outer_iters)
    return out


def _task(args):
    exp, value, draw = args
    return run_point(exp, value, draw)


def run_experiment(exp, jobs=1):
    """Run every (sweep value, draw) point and average per scheme; returns ``ResultRow`` list."""
    tasks = [(exp, v, d) for v in exp.sweep_values for d in range(exp.draws)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_task, tasks))
    else:
        results = [_task(t) for t in tasks]
    rows = []
    sh = seed_hash(exp.seed, exp.draws)
    for vi, value in enumerate(exp.sweep_values):
        chunk = results[vi * exp.draws:(vi + 1) * exp.draws]
        for scheme in exp.schemes:
            vals = np.array([c[scheme] for c in chunk], dtype=float)
            wsk, ub, b, outer = vals.mean(axis=0)
            rows.append(ResultRow(value, scheme, wsk / math.log(2), ub / math.log(2), b, outer,
                                  sh).check())
    return rows


def format_rows(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([f"{r.sweep_value:.6g}", r.scheme, f"{r.wskr_bits:.6f}",
                         f"{r.wskr_ub_bits:.6f}", f"{r.bdr:.6f}", f"{r.outer_iters:.2f}",
                         r.seed_hash])
    return buf.getvalue()


def write_rows(rows, path):
    text = format_rows(rows)
    d = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(d):
        raise OSError(f"output directory does not exist: {d}")
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return text


def with_overrides(exp, **kw):
    out = copy.deepcopy(exp)
    for k, v in kw.items():
        setattr(out, k, v)
    return out
