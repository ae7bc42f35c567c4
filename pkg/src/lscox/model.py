"""The level-set Cox process generative specification.

A model has a latent level-set field (unit marginal variance), strictly
increasing thresholds cutting its range into K intervals, a nugget standard
deviation for sub-lattice classification noise, and one intensity
specification per class. The log-intensity at a cell is the selected
class's field value plus its mean structure.

Class kinds:

- ``gaussian-field``: Matern field plus a constant or covariate-linear mean
- ``fixed-effects``: covariate regression only, no field
- ``constant``: a fixed log-intensity value

Class labels are 0-based everywhere in memory; exported artifacts use
1-based labels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtr

from .grf import MaternSpec, matern_cov

GAUSSIAN = "gaussian-field"
FIXED_EFFECTS = "fixed-effects"
CONSTANT = "constant"
_KINDS = (GAUSSIAN, FIXED_EFFECTS, CONSTANT)


@dataclass(frozen=True)
class Thresholds:
    """Interior thresholds c_1 < ... < c_{K-1}; c_0 = -inf, c_K = +inf."""

    interior: tuple[float, ...] = ()

    def __post_init__(self):
        vals = tuple(float(c) for c in self.interior)
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("thresholds must be strictly increasing")
        object.__setattr__(self, "interior", vals)

    @property
    def n_classes(self) -> int:
        return len(self.interior) + 1

    @property
    def edges(self) -> np.ndarray:
        """All K+1 cut points including the infinite endpoints."""
        return np.concatenate([[-np.inf], self.interior, [np.inf]])


@dataclass(frozen=True)
class ClassSpec:
    """Intensity specification for one class.

    Parameters
    ----------
    kind : str
        One of ``gaussian-field``, ``fixed-effects``, ``constant``.
    field : MaternSpec, optional
        Covariance of the class field (gaussian-field only).
    mean : float
        Constant mean mu_k (gaussian-field) or the value C_k (constant).
    beta : ndarray, optional
        Covariate coefficients; switches the mean to B(s) beta. Required
        for fixed-effects, optional for gaussian-field.
    fixed : bool
        For constant classes: whether C_k is held fixed during inference
        (the default, matching the application).
    """

    kind: str
    field: Optional[MaternSpec] = None
    mean: float = 0.0
    beta: Optional[np.ndarray] = None
    fixed: bool = True

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown class kind {self.kind!r}")
        if self.kind == GAUSSIAN and self.field is None:
            raise ValueError("gaussian-field class needs a MaternSpec")
        if self.kind != GAUSSIAN and self.field is not None:
            raise ValueError(f"{self.kind} class cannot carry a field spec")
        if self.kind == FIXED_EFFECTS and self.beta is None:
            raise ValueError("fixed-effects class needs coefficients")
        if self.beta is not None:
            object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))

    @property
    def has_field(self) -> bool:
        return self.kind == GAUSSIAN

    def cov(self, h):
        """Covariance function r_k of the class field; zero without a field."""
        if self.field is None:
            return np.zeros_like(np.asarray(h, dtype=float)) if np.ndim(h) else 0.0
        return matern_cov(h, self.field)


@dataclass(frozen=True)
class LevelSpec:
    """Level-set field: unit-variance Matern plus a mean structure."""

    field: MaternSpec
    mean: float = 0.0
    beta: Optional[np.ndarray] = None

    def __post_init__(self):
        if abs(self.field.sigma - 1.0) > 1e-12:
            raise ValueError("the level-set field is fixed at unit variance")
        if self.beta is not None:
            object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))


@dataclass(frozen=True)
class LscpModel:
    """Full generative description of one level-set Cox process.

    ``covariates`` is a (q, ny, nx) standardized stack used by any class
    (or the level mean) with coefficients; it may be None when every mean
    is constant.
    """

    level: LevelSpec
    thresholds: Thresholds
    sigma_eps: float
    classes: tuple[ClassSpec, ...]
    covariates: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if self.thresholds.n_classes != len(self.classes):
            raise ValueError(
                f"{len(self.classes)} classes but thresholds define "
                f"{self.thresholds.n_classes} intervals"
            )
        if self.sigma_eps < 0:
            raise ValueError("nugget standard deviation must be nonnegative")
        needs_cov = any(c.beta is not None for c in self.classes)
        needs_cov = needs_cov or self.level.beta is not None
        if needs_cov and self.covariates is None:
            raise ValueError("coefficient mean structures need a covariate stack")
        if self.covariates is not None:
            object.__setattr__(
                self, "covariates", np.asarray(self.covariates, dtype=float)
            )
            q = self.covariates.shape[0]
            for k, c in enumerate(self.classes):
                if c.beta is not None and c.beta.shape != (q,):
                    raise ValueError(f"class {k} has {c.beta.shape} coefficients "
                                     f"for {q} covariates")
            if self.level.beta is not None and self.level.beta.shape != (q,):
                raise ValueError("level mean coefficients do not match covariates")

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def class_mean(self, k: int) -> np.ndarray | float:
        """Mean surface mu_k: scalar for constant means, (ny, nx) otherwise."""
        cls = self.classes[k]
        if cls.beta is not None:
            return np.tensordot(cls.beta, self.covariates, axes=1)
        return cls.mean

    def level_mean(self) -> np.ndarray | float:
        if self.level.beta is not None:
            return np.tensordot(self.level.beta, self.covariates, axes=1)
        return self.level.mean

    def mean_stack(self, shape: tuple[int, int]) -> np.ndarray:
        """All class means broadcast to (K, ny, nx)."""
        out = np.empty((self.n_classes,) + shape)
        for k in range(self.n_classes):
            out[k] = self.class_mean(k)
        return out


def class_probabilities(x0_plus_mu0: np.ndarray, thresholds: Thresholds,
                        sigma_eps: float) -> np.ndarray:
    """Ordered-probit class probabilities per cell.

    Returns an array of shape (K,) + shape(x0_plus_mu0) with
    ``P(Gamma = k) = Phi((c_k - v)/sigma_eps) - Phi((c_{k-1} - v)/sigma_eps)``.
    ``sigma_eps = 0`` degenerates to deterministic interval membership
    (half-open intervals, upper edge included).
    """
    v = np.asarray(x0_plus_mu0, dtype=float)
    edges = thresholds.edges
    k_classes = thresholds.n_classes
    out = np.empty((k_classes,) + v.shape)
    if sigma_eps > 0:
        upper = ndtr((edges[1:].reshape((-1,) + (1,) * v.ndim) - v) / sigma_eps)
        lower = ndtr((edges[:-1].reshape((-1,) + (1,) * v.ndim) - v) / sigma_eps)
        out[:] = upper - lower
    else:
        for k in range(k_classes):
            out[k] = (v > edges[k]) & (v <= edges[k + 1])
    return out


def classify(x0_plus_mu0: np.ndarray, thresholds: Thresholds) -> np.ndarray:
    """Deterministic class labels from level values (0-based)."""
    v = np.asarray(x0_plus_mu0, dtype=float)
    # searchsorted with left side: count of interior thresholds < v,
    # so v exactly at a threshold joins the lower class (upper edge closed)
    return np.searchsorted(np.asarray(thresholds.interior), v, side="left")


def assemble_log_intensity(fields: np.ndarray, means: np.ndarray,
                           gamma: np.ndarray) -> np.ndarray:
    """Select per-cell log-intensity: field + mean of the assigned class.

    ``fields`` and ``means`` have shape (K, ny, nx) (zero field planes for
    classes without one), ``gamma`` holds 0-based labels of shape (ny, nx).
    """
    fields = np.asarray(fields, dtype=float)
    means = np.asarray(means, dtype=float)
    gamma = np.asarray(gamma)
    if fields.shape != means.shape:
        raise ValueError(f"field stack {fields.shape} vs mean stack {means.shape}")
    if gamma.shape != fields.shape[1:]:
        raise ValueError(f"gamma shape {gamma.shape} does not match cells "
                         f"{fields.shape[1:]}")
    if gamma.min() < 0 or gamma.max() >= fields.shape[0]:
        raise ValueError("class labels outside 0..K-1")
    total = fields + means
    return np.take_along_axis(total, gamma[None], axis=0)[0]
