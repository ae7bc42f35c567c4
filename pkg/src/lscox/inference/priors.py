"""Prior configuration and log-density pieces on the sampling scale.

Positive parameters are sampled as logs, so their log-priors carry the
Jacobian term. Truncated supports are enforced by proposal rejection, not
by density renormalization (the normalizing constant cancels in MH
ratios because the bounds never move during a run).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PriorConfig:
    """Hyperprior settings.

    Ranges get exponential priors truncated below at the lattice spacing
    and above at the extension margin of the field's role; the bounds are
    derived from the lattice at fit time, only the mean lives here.
    """

    fixed_effect_var: float = 10.0
    threshold_var: float = 4.0
    sigma_mean: float = 2.0
    range_mean: float = 200.0
    nugget_mean: float = 0.1
    nugget_upper: float = 1.0


def log_exp_prior(u: float, mean: float) -> tuple[float, float]:
    """Exponential prior with given mean for x = e^u; returns (logp, dlogp/du)."""
    x = math.exp(u)
    return -x / mean + u, -x / mean + 1.0


def log_normal_prior(x, var: float):
    """Independent mean-zero normals; returns (total logp, dlogp/dx)."""
    x = np.asarray(x, dtype=float)
    return float(-0.5 * (x * x).sum() / var), -x / var


@dataclass(frozen=True)
class RangeBounds:
    lower: float
    upper: float

    def contains(self, rho: float) -> bool:
        return self.lower <= rho <= self.upper

    def clip(self, rho: float) -> float:
        return min(max(rho, self.lower * 1.0000001), self.upper * 0.9999999)
