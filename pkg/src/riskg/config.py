"""System dimensions, budgets and tolerances shared by every module."""
from dataclasses import dataclass

import numpy as np


class ValidationError(ValueError):
    """Raised for inconsistent dimensions, invalid parameters or broken invariants."""


@dataclass(frozen=True)
class SystemConfig:
    K: int = 2
    M: int = 4
    M_e: int = 4
    N: int = 20
    L: int = 1
    P_A: float = 1.0
    weights: tuple = None
    # algorithm tolerances
    eps_outer: float = 1e-4
    eps_precoder: float = 1e-6
    eps_phase: float = 1e-6
    eps_bisect: float = 1e-8
    max_outer: int = 100
    max_precoder: int = 500
    max_phase: int = 1000

    def __post_init__(self):
        for name in ("K", "M", "M_e"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.N < 0 or self.L < 0:
            raise ValidationError("N and L must be >= 0")
        if self.M_e > self.M:
            raise ValidationError("M_e must not exceed M")
        if not self.P_A > 0:
            raise ValidationError("P_A must be > 0")
        w = np.ones(self.K) if self.weights is None else np.asarray(self.weights, dtype=float)
        if w.shape != (self.K,):
            raise ValidationError(f"weights must have length K={self.K}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValidationError("weights must be finite and >= 0")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))

    @property
    def NL(self):
        return self.N * self.L

    @property
    def w(self):
        return np.asarray(self.weights)


def as_seed_sequence(seed):
    """Accept an int, a sequence of ints or an existing ``SeedSequence``."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)
