"""Fit configuration, chain state, and parameter bookkeeping.

Estimated class means are held as vectors against a per-class design
matrix over window cells: an intercept-only design for scalar means, the
covariate stack for regression means, and an empty design for values held
fixed. That uniformity keeps the Poisson likelihood and its gradients
identical across class kinds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from ..lattice import CLASS_ROLE, LEVEL_ROLE, CountGrid, Lattice
from ..model import CONSTANT, FIXED_EFFECTS, GAUSSIAN, LscpModel, classify
from .priors import PriorConfig, RangeBounds
from .spectral import SpectralOps


@dataclass
class FitSpec:
    """What to estimate, over which lattice, under which priors.

    ``model`` supplies the structure (class kinds, covariates, fixed
    constants) and initial values for fixed quantities; estimated
    parameters are initialized from priors and data moments, not from the
    model's values.
    """

    model: LscpModel
    lattice: Lattice
    priors: PriorConfig = dc_field(default_factory=PriorConfig)
    order: Optional[int] = None
    estimate_thresholds: bool = True
    estimate_nugget: bool = True
    estimate_level_range: bool = True
    estimate_level_mean: bool = False
    interweave: bool = True

    def __post_init__(self):
        lat = self.lattice
        spacing = max(lat.cell_width, lat.cell_height)
        any_class_field = any(c.kind == GAUSSIAN for c in self.model.classes)
        multi = self.model.n_classes > 1
        if multi and lat.margin_level <= spacing and self.estimate_level_range:
            raise ValueError("level margin must exceed the cell size to "
                             "estimate the level range")
        if any_class_field and lat.margin_class <= spacing:
            raise ValueError("class margin must exceed the cell size for "
                             "class field inference")

    def range_bounds(self, role: str) -> RangeBounds:
        lat = self.lattice
        spacing = max(lat.cell_width, lat.cell_height)
        return RangeBounds(spacing, lat.margin(role))


class ChainState:
    """All latent quantities and parameters at one iteration.

    Field values on the window are cached per slot and invalidated on any
    write that changes them; hyperparameter moves that rescale the white
    noise to hold the field fixed keep the cache.
    """

    def __init__(self, fit: FitSpec, ops: dict[str, SpectralOps],
                 designs: "list[ClassDesign]", level_design: "ClassDesign"):
        self.fit = fit
        self.ops = ops
        self.designs = designs
        self.level_design = level_design
        model = fit.model
        self.gamma = np.zeros(fit.lattice.shape, dtype=np.int64)
        self.c = np.array(model.thresholds.interior, dtype=float)
        self.sigma_eps = model.sigma_eps if model.sigma_eps > 0 else fit.priors.nugget_mean
        self.rho_level = model.level.field.rho
        self.nu_level = model.level.field.nu
        self.mu_level = np.zeros(0)
        self.z: dict = {}
        self.sigma: dict[int, float] = {}
        self.rho: dict[int, float] = {}
        self.nu: dict[int, float] = {}
        self.mean_par: dict[int, np.ndarray] = {}
        self._values: dict = {}

    # slots are "level" or an integer class index
    def slot_ops(self, slot) -> SpectralOps:
        return self.ops[LEVEL_ROLE if slot == "level" else CLASS_ROLE]

    def slot_cov(self, slot) -> tuple[float, float, float]:
        if slot == "level":
            return 1.0, self.rho_level, self.nu_level
        return self.sigma[slot], self.rho[slot], self.nu[slot]

    def set_z(self, slot, z: np.ndarray, keep_values: bool = False):
        self.z[slot] = z
        if not keep_values:
            self._values.pop(slot, None)

    def set_cov(self, slot, sigma: float, rho: float):
        if slot == "level":
            self.rho_level = rho
        else:
            self.sigma[slot] = sigma
            self.rho[slot] = rho
        self._values.pop(slot, None)

    def field_ext(self, slot) -> np.ndarray:
        """Extended-grid field values for a slot, cached."""
        if slot not in self._values:
            ops = self.slot_ops(slot)
            sigma, rho, nu = self.slot_cov(slot)
            transfer = ops.transfer(ops.weights(sigma, rho, nu))
            self._values[slot] = ops.apply(transfer, self.z[slot])
        return self._values[slot]

    def set_field_ext(self, slot, values: np.ndarray):
        self._values[slot] = values

    def field_window(self, slot) -> np.ndarray:
        ops = self.slot_ops(slot)
        return ops.window(self.field_ext(slot))

    def thresholds_interior(self) -> np.ndarray:
        if self.c.size:
            return self.c
        return np.asarray(self.fit.model.thresholds.interior, dtype=float)


def level_mean_flat(state: ChainState) -> np.ndarray:
    return state.level_design.surface_flat(state.mu_level)


def level_surface_flat(state: ChainState) -> np.ndarray:
    """Level field plus its mean over window cells, flattened."""
    return state.field_window("level").ravel() + level_mean_flat(state)


def class_mean_flat(state: ChainState, k: int) -> np.ndarray:
    return state.designs[k].surface_flat(state.mean_par[k])


def class_eta_flat(state: ChainState, k: int) -> np.ndarray:
    """Log intensity of class k over window cells, flattened."""
    eta = class_mean_flat(state, k)
    if state.fit.model.classes[k].kind == GAUSSIAN:
        eta = eta + state.field_window(k).ravel()
    return eta


@dataclass(frozen=True)
class ClassDesign:
    """Design matrix and fixed offset for one class's mean over window cells."""

    design: np.ndarray      # (n_cells, p); p may be 0
    offset: float           # fixed additive constant (0 unless a fixed constant class)
    prior_var: float

    @property
    def n_par(self) -> int:
        return self.design.shape[1]

    def surface_flat(self, params: np.ndarray) -> np.ndarray:
        if self.n_par == 0:
            return np.full(self.design.shape[0], self.offset)
        return self.design @ params + self.offset


def build_designs(fit: FitSpec) -> tuple[list[ClassDesign], ClassDesign]:
    """Per-class mean designs plus the level-mean design."""
    model = fit.model
    n = fit.lattice.n_cells
    ones = np.ones((n, 1))
    empty = np.zeros((n, 0))
    if model.covariates is not None:
        cov_mat = model.covariates.reshape(model.covariates.shape[0], n).T
    else:
        cov_mat = None
    designs = []
    for cls in model.classes:
        if cls.kind == CONSTANT and cls.fixed:
            designs.append(ClassDesign(empty, cls.mean, fit.priors.fixed_effect_var))
        elif cls.kind == CONSTANT:
            designs.append(ClassDesign(ones, 0.0, fit.priors.fixed_effect_var))
        elif cls.beta is not None:
            designs.append(ClassDesign(cov_mat, 0.0, fit.priors.fixed_effect_var))
        else:
            # gaussian class with a scalar mean: intercept-only design
            designs.append(ClassDesign(ones, 0.0, fit.priors.fixed_effect_var))
    if fit.estimate_level_mean:
        lvl_design = cov_mat if model.level.beta is not None else ones
        level = ClassDesign(lvl_design, 0.0, fit.priors.fixed_effect_var)
    else:
        level = ClassDesign(empty, float(model.level.mean), fit.priors.fixed_effect_var)
    return designs, level


def initial_state(fit: FitSpec, counts: CountGrid, ops: dict[str, SpectralOps],
                  designs: list[ClassDesign], level_design: ClassDesign,
                  rng: np.random.Generator) -> ChainState:
    """Starting point: prior-scale parameters, flat class fields, and a
    level surface whitened from the cell occupancy pattern.

    The intercept of every estimated scalar mean starts at the crude
    log-intensity of the data, thresholds at zero prior mean, ranges at the
    prior mean clipped into support. The level field cannot start flat: a
    flat surface sits exactly on a zero threshold in every cell, where the
    classification gradients are at their largest and step-size adaptation
    collapses before the field can move away. A random start is not much
    better, because the label field then has to coarsen into data-shaped
    regions through single-cell flips, which can eat the whole burn-in.
    Instead each cell's level value starts in the middle of the interval
    its occupancy suggests (occupied cells in the richest class's interval,
    empty cells in the poorest's), whitened under the initial covariance
    with the coefficients clipped so the sharp region boundaries do not
    put the start in the far tail of the field prior.
    """
    state = ChainState(fit, ops, designs, level_design)
    model = fit.model
    lat = fit.lattice
    total = max(counts.total, 1)
    crude = math.log(total / (lat.window_width * lat.window_height))

    if model.n_classes > 1 and fit.estimate_level_range:
        state.rho_level = fit.range_bounds(LEVEL_ROLE).clip(
            min(fit.priors.range_mean, lat.margin_level))
    state.mu_level = np.zeros(level_design.n_par)
    if fit.estimate_thresholds:
        m = len(model.thresholds.interior)
        # strictly increasing start regardless of how many classes there are
        state.c = np.linspace(-0.5, 0.5, m) if m > 1 else np.zeros(m)
    for k, cls in enumerate(model.classes):
        if cls.kind == GAUSSIAN:
            state.z[k] = np.zeros(ops[CLASS_ROLE].shape)
            state.sigma[k] = min(fit.priors.sigma_mean, 1.0)
            state.nu[k] = cls.field.nu
            state.rho[k] = fit.range_bounds(CLASS_ROLE).clip(
                min(fit.priors.range_mean, lat.margin_class))
        pars = np.zeros(designs[k].n_par)
        if designs[k].n_par >= 1 and cls.kind != CONSTANT:
            # intercept column is all ones for scalar means; for covariate
            # designs the stack is standardized so the first coefficient is
            # close to an intercept only when one is included explicitly
            if np.allclose(designs[k].design[:, 0], 1.0):
                pars[0] = crude
        elif designs[k].n_par == 1:
            pars[0] = crude
        state.mean_par[k] = pars
    if model.n_classes > 1:
        ops_l = ops[LEVEL_ROLE]
        interior = (state.c if state.c.size else
                    np.asarray(model.thresholds.interior, dtype=float))
        lo = np.concatenate([[interior[0] - 2.0], interior])
        hi = np.concatenate([interior, [interior[-1] + 2.0]])
        centers = 0.5 * (lo + hi)
        class_levels = [float(np.mean(d.surface_flat(state.mean_par[k])))
                        for k, d in enumerate(designs)]
        rich = int(np.argmax(class_levels))
        poor = int(np.argmin(class_levels))
        level_mu = level_design.surface_flat(state.mu_level).reshape(lat.shape)
        v_tgt = np.where(counts.counts > 0, centers[rich],
                         centers[poor]) - level_mu
        transfer = ops_l.transfer(
            ops_l.weights(1.0, state.rho_level, state.nu_level))
        z0 = ops_l.rewhiten(np.fft.fft2(ops_l.pad_window(v_tgt)), transfer)
        state.z["level"] = np.clip(z0, -3.0, 3.0)
        v = ops_l.window(state.field_ext("level")) + level_mu
        state.gamma = (v[:, :, None] > interior).sum(axis=2).astype(np.int64)
    else:
        state.gamma = np.zeros(lat.shape, dtype=np.int64)
    return state
