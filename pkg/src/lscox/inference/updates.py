"""Markov kernels: label resampling, preconditioned Langevin moves on
parameter blocks, and the field update that stays exact under the
Gaussian prior.

The field kernel is the Crank-Nicolson Langevin proposal
``v = a u - b g(u) + c w`` with ``a = (2 - h)/(2 + h)``,
``b = 2 h/(2 + h)``, ``c = sqrt(8 h)/(2 + h)`` so that ``a^2 + c^2 = 1``;
with a flat likelihood the acceptance probability is identically one,
which keeps the move well defined on the lattice at any resolution.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtr

from .priors import log_normal_prior
from .state import (ChainState, class_eta_flat, class_mean_flat,
                    level_mean_flat, level_surface_flat)

_PROB_FLOOR = 1e-300


# ---------------------------------------------------------------------------
# label resampling

def gibbs_gamma(state: ChainState, counts_flat: np.ndarray,
                rng: np.random.Generator) -> None:
    """Exact draw of every cell label from its full conditional.

    Cells are conditionally independent given the fields and parameters:
    the weight of class k is the ordered-classification mass of the level
    value times the Poisson likelihood of the cell count under that
    class's intensity.
    """
    fit = state.fit
    model = fit.model
    k_classes = model.n_classes
    if k_classes == 1:
        return
    lat = fit.lattice
    n = lat.n_cells
    area = lat.cell_area

    edges = np.concatenate([[-np.inf], state.thresholds_interior(), [np.inf]])
    v = level_surface_flat(state)
    log_w = np.empty((k_classes, n))
    for k in range(k_classes):
        mass = ndtr((edges[k + 1] - v) / state.sigma_eps) - ndtr(
            (edges[k] - v) / state.sigma_eps)
        eta = class_eta_flat(state, k)
        log_w[k] = np.log(np.maximum(mass, _PROB_FLOOR)) + counts_flat * eta \
            - area * np.exp(eta)
    gumbel = rng.gumbel(size=(k_classes, n))
    state.gamma = np.argmax(log_w + gumbel, axis=0).reshape(lat.shape)


# ---------------------------------------------------------------------------
# parameter blocks

@dataclass
class StepState:
    """Adaptive scalar step size with a diagonal preconditioner."""

    log_step: float
    precond: np.ndarray     # marginal scales (std devs) per coordinate
    accepted: int = 0
    proposed: int = 0

    @property
    def step(self) -> float:
        return math.exp(self.log_step)

    @property
    def rate(self) -> float:
        return self.accepted / max(self.proposed, 1)


def mala_step(vec: np.ndarray, step: StepState,
              log_post_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
              in_support: Callable[[np.ndarray], bool],
              rng: np.random.Generator):
    """One preconditioned Langevin proposal on a parameter vector.

    Returns the (possibly unchanged) vector and whether the proposal was
    accepted. Proposals outside the support or with a non-finite target
    are rejected without evaluating further.
    """
    step.proposed += 1
    h = step.step
    if h == 0.0:
        step.accepted += 1
        return vec.copy(), True
    m = step.precond
    lp, grad = log_post_grad(vec)
    if not (np.isfinite(lp) and np.all(np.isfinite(grad))):
        warnings.warn("non-finite log posterior or gradient at the current "
                      "state; step rejected", RuntimeWarning)
        return vec, False
    drift = vec + 0.5 * h * m * m * grad
    prop = drift + math.sqrt(h) * m * rng.standard_normal(vec.size)
    if not in_support(prop):
        return vec, False
    lp_p, grad_p = log_post_grad(prop)
    if not np.isfinite(lp_p):
        return vec, False
    drift_p = prop + 0.5 * h * m * m * grad_p
    fwd = -0.5 / h * float((((prop - drift) / m) ** 2).sum())
    rev = -0.5 / h * float((((vec - drift_p) / m) ** 2).sum())
    log_alpha = lp_p - lp + rev - fwd
    if math.log(rng.uniform()) < log_alpha:
        step.accepted += 1
        return prop, True
    return vec, False


def mala_theta(block, state: ChainState, step: StepState,
               rng: np.random.Generator) -> bool:
    """One Langevin move on a parameter block, committed on acceptance."""
    ctx = block.begin(state)
    vec = block.vector(state)
    new, accepted = mala_step(
        vec, step, lambda v: block.log_post_grad(v, ctx), block.in_support, rng)
    if accepted:
        block.commit(state, new, ctx)
    return accepted


# ---------------------------------------------------------------------------
# field update

def pcn_step(u: np.ndarray, delta: float,
             potential_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
             rng: np.random.Generator):
    """Crank-Nicolson Langevin move under a standard normal prior.

    ``potential_grad`` returns the negative log likelihood as a function of
    the whitened coordinates together with its gradient. With a zero
    potential the acceptance probability equals one exactly.
    """
    if delta == 0.0:
        return u.copy(), True
    a = (2.0 - delta) / (2.0 + delta)
    b = 2.0 * delta / (2.0 + delta)
    c = math.sqrt(8.0 * delta) / (2.0 + delta)

    phi_u, g_u = potential_grad(u)
    noise = rng.standard_normal(u.shape)
    v = a * u - b * g_u + c * noise
    phi_v, g_v = potential_grad(v)
    if not np.isfinite(phi_v):
        return u, False
    c2 = c * c

    def half(x, y, g_y):
        # -|y|^2/2 - |x - a y + b g(y)|^2 / (2 c^2) with (x, y) the
        # (arrival, departure) pair of the reverse move: the Gaussian
        # reference density of the departure point plus the transition
        # back to the arrival point
        resid = x - a * y + b * g_y
        return -0.5 * float((y * y).sum()) - float((resid * resid).sum()) / (2.0 * c2)

    log_alpha = (-phi_v + half(u, v, g_v)) - (-phi_u + half(v, u, g_u))
    if math.log(rng.uniform()) < log_alpha:
        return v, True
    return u, False


def field_potential(state: ChainState, slot, counts_flat: np.ndarray):
    """Negative conditional log likelihood of one field in whitened
    coordinates, with gradient, for the current labels and parameters."""
    fit = state.fit
    lat = fit.lattice
    ops = state.slot_ops(slot)
    sigma, rho, nu = state.slot_cov(slot)
    transfer = ops.transfer(ops.weights(sigma, rho, nu))
    area = lat.cell_area

    if slot == "level":
        edges = np.concatenate([[-np.inf], state.thresholds_interior(), [np.inf]])
        gamma = state.gamma.ravel()
        mu = level_mean_flat(state)
        cu = edges[gamma + 1]
        cl = edges[gamma]

        def potential(u):
            x = ops.apply(transfer, u)
            v = ops.window(x).ravel() + mu
            zu = (cu - v) / state.sigma_eps
            zl = (cl - v) / state.sigma_eps
            raw = ndtr(zu) - ndtr(zl)
            mass = np.maximum(raw, _PROB_FLOOR)
            phi = -float(np.log(mass).sum())
            live = raw > _PROB_FLOOR
            phi_u = np.where(np.isfinite(zu) & live, _phi_dens(zu), 0.0)
            phi_l = np.where(np.isfinite(zl) & live, _phi_dens(zl), 0.0)
            dv = (phi_u - phi_l) / (state.sigma_eps * mass)
            grad = ops.apply(transfer, ops.pad_window(dv.reshape(lat.shape)))
            return phi, grad
    else:
        idx = np.flatnonzero(state.gamma.ravel() == slot)
        y = counts_flat[idx]
        mu = class_mean_flat(state, slot)[idx]

        def potential(u):
            x = ops.apply(transfer, u)
            eta = ops.window(x).ravel()[idx] + mu
            with np.errstate(over="ignore"):
                lam = area * np.exp(eta)
            if not np.all(np.isfinite(lam)):
                return np.inf, np.zeros_like(u)
            phi = -float(y @ eta - lam.sum())
            dflat = np.zeros(lat.n_cells)
            dflat[idx] = -(y - lam)
            grad = ops.apply(transfer, ops.pad_window(dflat.reshape(lat.shape)))
            return phi, grad

    return potential


def _phi_dens(x: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def pcn_mala_field(state: ChainState, slot, counts_flat: np.ndarray,
                   step: StepState, rng: np.random.Generator) -> bool:
    """One Crank-Nicolson Langevin move on a field's white noise."""
    step.proposed += 1
    potential = field_potential(state, slot, counts_flat)
    u, accepted = pcn_step(state.z[slot], step.step, potential, rng)
    if accepted:
        step.accepted += 1
        state.set_z(slot, u)
    return accepted


# ---------------------------------------------------------------------------
# interweaved covariance move with fixed white noise

def interweave_cov(state: ChainState, slot, counts_flat: np.ndarray,
                   step: StepState, rng: np.random.Generator) -> bool:
    """Random-walk move on covariance parameters holding the white noise
    fixed, so the field surface rescales with the proposal.

    Complements the fixed-field move: the two parameterizations have
    opposite conditioning pathologies, and alternating them mixes the
    scale and range when either alone would stall.
    """
    step.proposed += 1
    fit = state.fit
    pri = fit.priors
    ops = state.slot_ops(slot)
    lat = fit.lattice
    area = lat.cell_area

    if slot == "level":
        bounds = fit.range_bounds("level")
        log_rho = math.log(state.rho_level)
        prop_lr = log_rho + step.step * rng.standard_normal()
        rho_p = math.exp(prop_lr)
        if not bounds.contains(rho_p):
            return False
        nu = state.nu_level
        transfer_p = ops.transfer(ops.weights(1.0, rho_p, nu))
        x_new = ops.apply(transfer_p, state.z["level"])

        edges = np.concatenate([[-np.inf], state.thresholds_interior(), [np.inf]])
        gamma = state.gamma.ravel()
        mu = level_mean_flat(state)

        def probit_lp(x_ext):
            v = ops.window(x_ext).ravel() + mu
            zu = (edges[gamma + 1] - v) / state.sigma_eps
            zl = (edges[gamma] - v) / state.sigma_eps
            mass = np.maximum(ndtr(zu) - ndtr(zl), _PROB_FLOOR)
            return float(np.log(mass).sum())

        delta = probit_lp(x_new) - probit_lp(state.field_ext("level"))
        delta += log_exp_delta(prop_lr, log_rho, pri.range_mean)
        if math.log(rng.uniform()) < delta:
            state.set_cov("level", 1.0, rho_p)
            state.set_field_ext("level", x_new)
            step.accepted += 1
            return True
        return False

    k = slot
    bounds = fit.range_bounds("class")
    cur = np.array([math.log(state.sigma[k]), math.log(state.rho[k])])
    prop = cur + step.step * rng.standard_normal(2)
    rho_p = math.exp(prop[1])
    if not bounds.contains(rho_p):
        return False
    sigma_p = math.exp(prop[0])
    nu = state.nu[k]
    transfer_p = ops.transfer(ops.weights(sigma_p, rho_p, nu))
    x_new = ops.apply(transfer_p, state.z[k])

    idx = np.flatnonzero(state.gamma.ravel() == k)
    y = counts_flat[idx]
    mu = class_mean_flat(state, k)[idx]

    def pois_lp(x_ext):
        eta = ops.window(x_ext).ravel()[idx] + mu
        with np.errstate(over="ignore"):
            lam = area * np.exp(eta)
        if not np.all(np.isfinite(lam)):
            return -np.inf
        return float(y @ eta - lam.sum())

    delta = pois_lp(x_new) - pois_lp(state.field_ext(k))
    delta += log_exp_delta(prop[0], cur[0], pri.sigma_mean)
    delta += log_exp_delta(prop[1], cur[1], pri.range_mean)
    if math.log(rng.uniform()) < delta:
        state.set_cov(k, sigma_p, rho_p)
        state.set_field_ext(k, x_new)
        step.accepted += 1
        return True
    return False


def log_exp_delta(new: float, old: float, mean: float) -> float:
    """Log prior ratio for an exponential prior on the natural scale,
    parameters stored on the log scale."""
    return (-math.exp(new) / mean + new) - (-math.exp(old) / mean + old)


# ---------------------------------------------------------------------------
# interweaved translation move with fixed observable surface

def shift_translation(state: ChainState, slot, step: StepState,
                      rng: np.random.Generator,
                      intercept_idx: int = 0) -> bool:
    """Random-walk shift of a location parameter, compensated through the
    field's zero-frequency coefficient so the observable surface never
    moves and only the priors arbitrate the proposal.

    For the level slot every interior threshold and the level surface
    shift together, which leaves all classification masses unchanged; for
    a class slot the intercept and the class surface trade places, which
    leaves the intensity unchanged. A location offset shared between a
    parameter and its field is informed only through the field prior, so
    fixed-field and fixed-surface moves both stall along it; this kernel
    moves straight down that ridge.
    """
    step.proposed += 1
    ops = state.slot_ops(slot)
    sigma, rho, nu = state.slot_cov(slot)
    t00 = float(ops.transfer(ops.weights(sigma, rho, nu))[0, 0])
    if not t00 > 0.0:
        # the zero frequency carries no mass, so no compensation exists
        return False
    a = step.step * float(rng.standard_normal())
    z = state.z[slot]
    if slot == "level":
        d = a / t00
        c_old = state.c
        c_new = c_old + a
        delta = (log_normal_prior(c_new, state.fit.priors.threshold_var)[0]
                 - log_normal_prior(c_old, state.fit.priors.threshold_var)[0])
    else:
        d = -a / t00
        var = state.designs[slot].prior_var
        m_old = float(state.mean_par[slot][intercept_idx])
        m_new = m_old + a
        delta = -(m_new * m_new - m_old * m_old) / (2.0 * var)
    delta -= 0.5 * (2.0 * d * float(z.sum()) + z.size * d * d)
    if not math.log(rng.uniform()) < delta:
        return False
    x_new = state.field_ext(slot) + (a if slot == "level" else -a)
    state.set_z(slot, z + d, keep_values=True)
    state.set_field_ext(slot, x_new)
    if slot == "level":
        state.c = c_new
    else:
        state.mean_par[slot][intercept_idx] = m_new
    step.accepted += 1
    return True
