"""Parameter blocks: posterior targets and gradients for the chain's
Langevin moves.

Each block owns a contiguous parameter vector, knows its support, and can
evaluate the conditional log posterior with gradient while the latent
fields stay fixed. Covariance moves hold the field values fixed (not the
white noise), so accepting one rescales the stored white noise to match;
the Gaussian density of the field given its hyperparameters then enters
the target through the spectral coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtr

from ..lattice import CLASS_ROLE, LEVEL_ROLE
from ..model import GAUSSIAN
from .priors import PriorConfig, RangeBounds, log_exp_prior, log_normal_prior
from .spectral import SpectralOps
from .state import ChainState, ClassDesign, FitSpec

_PROB_FLOOR = 1e-300


def _phi(x: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


@dataclass
class PoissonCtx:
    """Cells of one class and their counts, fixed during a block update."""

    idx: np.ndarray         # flat window indices where gamma == k
    y: np.ndarray
    design: np.ndarray      # (m, p) rows of the class design at those cells
    offset: float
    x: np.ndarray           # field values at those cells (0 for field-free classes)
    area: float


def poisson_ctx(state: ChainState, k: int, design: ClassDesign,
                counts_flat: np.ndarray) -> PoissonCtx:
    idx = np.flatnonzero(state.gamma.ravel() == k)
    if state.fit.model.classes[k].kind == GAUSSIAN:
        x = state.field_window(k).ravel()[idx]
    else:
        x = np.zeros(idx.size)
    return PoissonCtx(idx, counts_flat[idx], design.design[idx], design.offset,
                      x, state.fit.lattice.cell_area)


def poisson_logpdf_grad(ctx: PoissonCtx, mean_par: np.ndarray):
    """Log Poisson likelihood over the block's cells and its gradient with
    respect to the mean parameters."""
    eta = ctx.x + ctx.offset
    if mean_par.size:
        eta = eta + ctx.design @ mean_par
    with np.errstate(over="ignore"):
        lam = ctx.area * np.exp(eta)
    if not np.all(np.isfinite(lam)):
        return -np.inf, np.zeros(mean_par.size)
    lp = float(ctx.y @ eta - lam.sum())
    grad = ctx.design.T @ (ctx.y - lam) if mean_par.size else np.zeros(0)
    return lp, grad


class GaussianClassBlock:
    """Joint move on (log sigma_k, log rho_k, mean parameters) of one
    Gaussian class, with the class field held fixed in value."""

    def __init__(self, fit: FitSpec, k: int, design: ClassDesign,
                 ops: SpectralOps, counts_flat: np.ndarray):
        self.fit = fit
        self.k = k
        self.design = design
        self.ops = ops
        self.counts_flat = counts_flat
        self.bounds: RangeBounds = fit.range_bounds(CLASS_ROLE)
        label = k + 1
        self.names = [f"sigma_{label}", f"rho_{label}"]
        if design.n_par == 1:
            self.names.append(f"mean_{label}")
        else:
            self.names += [f"beta_{label}_{j}" for j in range(design.n_par)]

    @property
    def n_par(self) -> int:
        return 2 + self.design.n_par

    def vector(self, state: ChainState) -> np.ndarray:
        return np.concatenate([[math.log(state.sigma[self.k]),
                                math.log(state.rho[self.k])],
                               state.mean_par[self.k]])

    def in_support(self, vec: np.ndarray) -> bool:
        return self.bounds.contains(math.exp(vec[1]))

    def begin(self, state: ChainState):
        nu = state.nu[self.k]
        sigma, rho = state.sigma[self.k], state.rho[self.k]
        transfer = self.ops.transfer(self.ops.weights(sigma, rho, nu))
        xhat = self.ops.xhat(transfer, state.z[self.k])
        quad = self.ops.quad(xhat)[self.ops.mask]
        pois = poisson_ctx(state, self.k, self.design, self.counts_flat)
        return {"nu": nu, "xhat": xhat, "quad": quad, "pois": pois}

    def log_post_grad(self, vec: np.ndarray, ctx):
        log_sigma, log_rho = vec[0], vec[1]
        mean_par = vec[2:]
        sigma, rho = math.exp(log_sigma), math.exp(log_rho)
        pri = self.fit.priors

        s = self.ops.weights(sigma, rho, ctx["nu"])[self.ops.mask]
        ratio = ctx["quad"] / s
        n = self.ops.n
        lp = -0.5 * float(ratio.sum()) - 0.5 * float(np.log(n * s).sum())
        d_ls = float(ratio.sum()) - self.ops.m_active
        dlog = self.ops.dlog_weights_dlog_rho(rho, ctx["nu"])
        d_lr = 0.5 * float((ratio - 1.0) @ dlog)

        lp_p, g_mean = poisson_logpdf_grad(ctx["pois"], mean_par)
        lp += lp_p

        p_s, dp_s = log_exp_prior(log_sigma, pri.sigma_mean)
        p_r, dp_r = log_exp_prior(log_rho, pri.range_mean)
        lp += p_s + p_r
        d_ls += dp_s
        d_lr += dp_r
        lp_m, g_m = log_normal_prior(mean_par, self.design.prior_var)
        lp += lp_m
        return lp, np.concatenate([[d_ls, d_lr], g_mean + g_m])

    def commit(self, state: ChainState, vec: np.ndarray, ctx):
        sigma, rho = math.exp(vec[0]), math.exp(vec[1])
        transfer = self.ops.transfer(self.ops.weights(sigma, rho, ctx["nu"]))
        values = state.field_ext(self.k)
        state.set_cov(self.k, sigma, rho)
        state.set_z(self.k, self.ops.rewhiten(ctx["xhat"], transfer),
                    keep_values=True)
        state.set_field_ext(self.k, values)
        state.mean_par[self.k] = vec[2:].copy()


class MeanBlock:
    """Mean parameters of a field-free class (an estimated constant or a
    covariate regression)."""

    def __init__(self, fit: FitSpec, k: int, design: ClassDesign,
                 counts_flat: np.ndarray):
        self.fit = fit
        self.k = k
        self.design = design
        self.counts_flat = counts_flat
        label = k + 1
        if design.n_par == 1:
            self.names = [f"mean_{label}"]
        else:
            self.names = [f"beta_{label}_{j}" for j in range(design.n_par)]

    @property
    def n_par(self) -> int:
        return self.design.n_par

    def vector(self, state: ChainState) -> np.ndarray:
        return state.mean_par[self.k].copy()

    def in_support(self, vec: np.ndarray) -> bool:
        return True

    def begin(self, state: ChainState):
        return {"pois": poisson_ctx(state, self.k, self.design, self.counts_flat)}

    def log_post_grad(self, vec: np.ndarray, ctx):
        lp, grad = poisson_logpdf_grad(ctx["pois"], vec)
        lp_m, g_m = log_normal_prior(vec, self.design.prior_var)
        return lp + lp_m, grad + g_m

    def commit(self, state: ChainState, vec: np.ndarray, ctx):
        state.mean_par[self.k] = vec.copy()


class LevelBlock:
    """Thresholds, nugget scale, level range, and level mean, moved jointly
    against the ordered-classification likelihood of the current labels."""

    def __init__(self, fit: FitSpec, level_design: ClassDesign,
                 ops: SpectralOps):
        self.fit = fit
        self.design = level_design
        self.ops = ops
        self.bounds: RangeBounds = fit.range_bounds(LEVEL_ROLE)
        self.n_c = len(fit.model.thresholds.interior) if fit.estimate_thresholds else 0
        self.with_nugget = fit.estimate_nugget
        self.with_range = fit.estimate_level_range
        self.n_mu = level_design.n_par
        self.names = [f"c_{i + 1}" for i in range(self.n_c)]
        if self.with_nugget:
            self.names.append("sigma_eps")
        if self.with_range:
            self.names.append("rho_0")
        if self.n_mu == 1:
            self.names.append("mu_0")
        else:
            self.names += [f"beta_0_{j}" for j in range(self.n_mu)]

    @property
    def n_par(self) -> int:
        return self.n_c + int(self.with_nugget) + int(self.with_range) + self.n_mu

    def vector(self, state: ChainState) -> np.ndarray:
        parts = [state.c[:self.n_c]]
        if self.with_nugget:
            parts.append([math.log(state.sigma_eps)])
        if self.with_range:
            parts.append([math.log(state.rho_level)])
        parts.append(state.mu_level)
        return np.concatenate(parts)

    def _unpack(self, vec: np.ndarray):
        i = self.n_c
        c = vec[:i]
        sig_eps = None
        rho = None
        if self.with_nugget:
            sig_eps = math.exp(vec[i])
            i += 1
        if self.with_range:
            rho = math.exp(vec[i])
            i += 1
        return c, sig_eps, rho, vec[i:]

    def in_support(self, vec: np.ndarray) -> bool:
        c, sig_eps, rho, _ = self._unpack(vec)
        if c.size > 1 and np.any(np.diff(c) <= 0):
            return False
        if sig_eps is not None and sig_eps > self.fit.priors.nugget_upper:
            return False
        if rho is not None and not self.bounds.contains(rho):
            return False
        return True

    def begin(self, state: ChainState):
        ctx = {"x0": state.field_window("level").ravel(),
               "gamma": state.gamma.ravel(),
               "nu": state.nu_level}
        if self.with_range:
            transfer = self.ops.transfer(
                self.ops.weights(1.0, state.rho_level, state.nu_level))
            xhat = self.ops.xhat(transfer, state.z["level"])
            ctx["xhat"] = xhat
            ctx["quad"] = self.ops.quad(xhat)[self.ops.mask]
        return ctx

    def log_post_grad(self, vec: np.ndarray, ctx):
        fit = self.fit
        pri = fit.priors
        c, sig_eps, rho, mu_par = self._unpack(vec)
        if sig_eps is None:
            sig_eps = fit.model.sigma_eps
        k_classes = fit.model.n_classes
        full_c = c if self.n_c else np.asarray(fit.model.thresholds.interior)
        edges = np.concatenate([[-np.inf], full_c, [np.inf]])

        gamma = ctx["gamma"]
        v = ctx["x0"] + self.design.surface_flat(mu_par)
        zu = (edges[gamma + 1] - v) / sig_eps
        zl = (edges[gamma] - v) / sig_eps
        raw = ndtr(zu) - ndtr(zl)
        mass = np.maximum(raw, _PROB_FLOOR)
        lp = float(np.log(mass).sum())
        # where the mass is floored the potential is flat, so its gradient
        # contributions are zero rather than the floored quotient
        live = raw > _PROB_FLOOR
        phi_u = np.where(np.isfinite(zu) & live, _phi(zu), 0.0)
        phi_l = np.where(np.isfinite(zl) & live, _phi(zl), 0.0)
        inv = 1.0 / (sig_eps * mass)

        grad = np.zeros(self.n_par)
        pos = 0
        if self.n_c:
            upper = np.bincount(gamma, weights=phi_u * inv,
                                minlength=k_classes)
            lower = np.bincount(gamma, weights=phi_l * inv,
                                minlength=k_classes)
            # threshold i is the upper edge of class i and lower edge of i+1
            grad[:self.n_c] = upper[:-1] - lower[1:]
            pos = self.n_c
        if self.with_nugget:
            zu_t = np.where(np.isfinite(zu), zu, 0.0)
            zl_t = np.where(np.isfinite(zl), zl, 0.0)
            grad[pos] = float(((phi_l * zl_t - phi_u * zu_t) / mass).sum())
            lp_e, d_e = log_exp_prior(math.log(sig_eps), pri.nugget_mean)
            lp += lp_e
            grad[pos] += d_e
            pos += 1
        if self.with_range:
            s = self.ops.weights(1.0, rho, ctx["nu"])[self.ops.mask]
            ratio = ctx["quad"] / s
            lp += -0.5 * float(ratio.sum()) - 0.5 * float(
                np.log(self.ops.n * s).sum())
            dlog = self.ops.dlog_weights_dlog_rho(rho, ctx["nu"])
            grad[pos] = 0.5 * float((ratio - 1.0) @ dlog)
            lp_r, d_r = log_exp_prior(math.log(rho), pri.range_mean)
            lp += lp_r
            grad[pos] += d_r
            pos += 1
        if self.n_mu:
            dv = (phi_l - phi_u) * inv
            grad[pos:] = self.design.design.T @ dv
            lp_m, g_m = log_normal_prior(mu_par, self.design.prior_var)
            lp += lp_m
            grad[pos:] += g_m
        if self.n_c:
            lp_c, g_c = log_normal_prior(c, pri.threshold_var)
            lp += lp_c
            grad[:self.n_c] += g_c
        return lp, grad

    def commit(self, state: ChainState, vec: np.ndarray, ctx):
        c, sig_eps, rho, mu_par = self._unpack(vec)
        if self.n_c:
            state.c = c.copy()
        if sig_eps is not None:
            state.sigma_eps = sig_eps
        if rho is not None:
            transfer = self.ops.transfer(self.ops.weights(1.0, rho, ctx["nu"]))
            values = state.field_ext("level")
            state.set_cov("level", 1.0, rho)
            state.set_z("level", self.ops.rewhiten(ctx["xhat"], transfer),
                        keep_values=True)
            state.set_field_ext("level", values)
        state.mu_level = mu_par.copy()
