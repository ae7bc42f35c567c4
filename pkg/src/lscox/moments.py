"""Semi-analytic product densities and summary functions of the model.

First and second moments of the random intensity (with the numerically
integrated class-pair probabilities), pair correlation, the inhomogeneous
K-function under translation invariance, and a Monte-Carlo empty-space
function. Closed-form results here are validated against simulation
oracles in the test suite; that agreement is the module's defining
property.

All operations except ``empty_space_mc`` require translation-invariant
mean structures (constant class and level means).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr

from .grf import matern_cov, sample_fft
from .lattice import CLASS_ROLE, LEVEL_ROLE, Lattice
from .model import LscpModel, classify

_SQRT2PI = math.sqrt(2.0 * math.pi)
_TAIL_SD = 8.0


def _require_stationary(model: LscpModel):
    if model.level.beta is not None or any(c.beta is not None for c in model.classes):
        raise ValueError("moment formulas need translation-invariant (constant) means")


def _interval_mass(model: LscpModel) -> np.ndarray:
    """P(Gamma = k) per class from the level-set marginal."""
    edges = model.thresholds.edges
    mu0 = model.level.mean
    return ndtr(edges[1:] - mu0) - ndtr(edges[:-1] - mu0)


def rho1(model: LscpModel, point=None) -> float:
    """First product density (mean intensity); constant over the window.

    ``point`` is accepted for signature symmetry and ignored under
    translation invariance.
    """
    _require_stationary(model)
    mass = _interval_mass(model)
    total = 0.0
    for k, cls in enumerate(model.classes):
        r0 = float(cls.cov(0.0))
        total += math.exp(cls.mean + 0.5 * r0) * mass[k]
    return total


def p_lk(s1, s2, model: LscpModel, quadrature: int = 64) -> np.ndarray:
    """Joint class probabilities of the level-set field at two locations.

    Returns a (K, K) matrix ``P`` with ``P[k, l] = P(Gamma(s1) = k,
    Gamma(s2) = l)``, computed by Gauss-Legendre quadrature over the level
    value at ``s1`` with the bivariate-normal conditional at ``s2``. Tails
    are truncated at 8 marginal standard deviations.
    """
    if quadrature < 8:
        raise ValueError("quadrature node count must be at least 8")
    _require_stationary(model)
    h = float(np.hypot(*(np.asarray(s1, dtype=float) - np.asarray(s2, dtype=float))))
    return _p_matrix(h, model, quadrature)


def _p_matrix(h: float, model: LscpModel, quadrature: int) -> np.ndarray:
    k_classes = model.n_classes
    edges = model.thresholds.edges
    mu0 = model.level.mean
    r0h = float(matern_cov(h, model.level.field))
    mass = _interval_mass(model)

    if abs(r0h) >= 1.0 - 1e-12:
        # degenerate conditional: the two values coincide (r -> 1)
        return np.diag(mass)

    sig = math.sqrt(1.0 - r0h * r0h)
    nodes, glw = np.polynomial.legendre.leggauss(quadrature)
    out = np.zeros((k_classes, k_classes))
    for k in range(k_classes):
        a = max(edges[k], mu0 - _TAIL_SD)
        b = min(edges[k + 1], mu0 + _TAIL_SD)
        if b <= a:
            continue
        u = 0.5 * (b - a) * nodes + 0.5 * (b + a)
        w = 0.5 * (b - a) * glw
        mu_star = mu0 + r0h * (u - mu0)
        dens = np.exp(-0.5 * (u - mu0) ** 2) / _SQRT2PI
        z_up = (edges[1:, None] - mu_star[None, :]) / sig
        z_lo = (edges[:-1, None] - mu_star[None, :]) / sig
        inner = ndtr(z_up) - ndtr(z_lo)
        out[k] = inner @ (dens * w)
    return out


def rho2(s1, s2, model: LscpModel, quadrature: int = 64) -> float:
    """Second product density E[lambda(s1) lambda(s2)]."""
    _require_stationary(model)
    h = float(np.hypot(*(np.asarray(s1, dtype=float) - np.asarray(s2, dtype=float))))
    pmat = _p_matrix(h, model, quadrature)
    r_zero = np.array([float(c.cov(0.0)) for c in model.classes])
    r_h = np.array([float(c.cov(h)) for c in model.classes])
    mu = np.array([c.mean for c in model.classes])
    total = 0.0
    for k in range(model.n_classes):
        for l in range(model.n_classes):
            log_term = mu[k] + mu[l] + 0.5 * (r_zero[k] + r_zero[l])
            if k == l:
                log_term += r_h[k]
            total += pmat[k, l] * math.exp(log_term)
    return total


def pair_correlation(s1, s2, model: LscpModel, quadrature: int = 64) -> float:
    """g(s1, s2) = rho_2 / (rho_1 rho_1)."""
    denom = rho1(model)
    return rho2(s1, s2, model, quadrature) / (denom * denom)


def k_function(r, model: LscpModel, radial_quadrature: int = 128,
               quadrature: int = 64):
    """Inhomogeneous K-function, K(r) = 2 pi int_0^r g0(h) h dh.

    ``r`` may be a scalar or an array. Requires translation invariance
    (enforced); the polar reduction additionally uses isotropy of the
    Matern fields.
    """
    _require_stationary(model)
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r_arr < 0):
        raise ValueError("distances must be nonnegative")
    nodes, glw = np.polynomial.legendre.leggauss(radial_quadrature)
    out = np.empty(r_arr.shape)
    for i, ri in enumerate(r_arr):
        if ri == 0:
            out[i] = 0.0
            continue
        hh = 0.5 * ri * (nodes + 1.0)
        ww = 0.5 * ri * glw
        g_vals = np.array([
            pair_correlation((0.0, 0.0), (h, 0.0), model, quadrature) for h in hh
        ])
        out[i] = 2.0 * math.pi * float(np.sum(g_vals * hh * ww))
    return float(out[0]) if np.ndim(r) == 0 else out


def disc_cell_areas(center, radius: float, lattice: Lattice) -> np.ndarray:
    """Exact areas of each window cell's intersection with a disc.

    Returns a (ny, nx) array. The per-cell corner decomposition telescopes,
    so the areas sum to the exact disc-window intersection area.
    """
    cx, cy = float(center[0]), float(center[1])
    cw, ch = lattice.cell_width, lattice.cell_height
    j0 = max(int(math.floor((cx - radius) / cw)), 0)
    j1 = min(int(math.ceil((cx + radius) / cw)), lattice.nx)
    i0 = max(int(math.floor((cy - radius) / ch)), 0)
    i1 = min(int(math.ceil((cy + radius) / ch)), lattice.ny)
    out = np.zeros(lattice.shape)
    if j1 <= j0 or i1 <= i0 or radius <= 0:
        return out
    xs = np.arange(j0, j1 + 1) * cw - cx
    ys = np.arange(i0, i1 + 1) * ch - cy
    corner = _disc_corner_area(xs[None, :], ys[:, None], radius)
    cells = corner[1:, 1:] - corner[:-1, 1:] - corner[1:, :-1] + corner[:-1, :-1]
    out[i0:i1, j0:j1] = np.maximum(cells, 0.0)
    return out


def _disc_corner_area(x, y, r: float):
    """Area of {u^2 + v^2 <= r^2, u <= x, v <= y} for a disc at the origin."""
    x = np.minimum(np.asarray(x, dtype=float), r)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)

    def antideriv(u):
        # integral of sqrt(r^2 - t^2) dt up to u, for u in [-r, r]
        u = np.clip(u, -r, r)
        return 0.5 * (u * np.sqrt(np.maximum(r * r - u * u, 0.0))
                      + r * r * np.arcsin(np.clip(u / r, -1.0, 1.0)))

    t = np.sqrt(np.maximum(r * r - y * y, 0.0))
    ga = antideriv
    # portion with u <= -t carries a full chord when y >= 0
    left = 2.0 * (ga(np.minimum(x, -t)) - ga(-r))
    # middle portion [-t, t]: chord height y + sqrt(r^2 - u^2)
    upper_mid = np.clip(x, -t, t)
    mid = y * (upper_mid + t) + ga(upper_mid) - ga(-t)
    # portion with u >= t carries a full chord when y >= 0
    right = 2.0 * (ga(np.maximum(x, t)) - ga(t))
    area_pos = left + mid + right
    area_neg = np.where(x > -t, mid, 0.0)

    area = np.where(y >= 0, area_pos, area_neg)
    area = np.where(y >= r, 2.0 * (ga(x) - ga(-r)), area)
    area = np.where(y <= -r, 0.0, area)
    area = np.where(x <= -r, 0.0, area)
    return area


def empty_space_mc(s0, r, model: LscpModel, lattice: Lattice, n_sims: int,
                   rng: np.random.Generator, order: int | None = None):
    """Monte-Carlo inhomogeneous empty-space function at a reference point.

    Estimates ``F(s0, r) = 1 - E[exp(-integral of the intensity over the
    disc)]`` by simulating latent fields and classifications; the disc
    integral uses the exact per-cell intersection areas. ``r`` may be a
    scalar or an array sharing the same simulations. Returns ``(F, se)``
    with the Monte-Carlo standard error.
    """
    if n_sims < 100:
        raise ValueError("n_sims must be at least 100")
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    weights = [disc_cell_areas(s0, ri, lattice) for ri in r_arr]
    flat_w = np.stack([w.ravel() for w in weights])

    k_classes = model.n_classes
    shape = lattice.shape
    means = model.mean_stack(shape)
    has_field = [c.has_field for c in model.classes]
    terms = np.empty((n_sims, r_arr.size))
    for s in range(n_sims):
        x0 = sample_fft(model.level.field, lattice, rng, role=LEVEL_ROLE,
                        order=order)
        v = x0.values + model.level_mean()
        if model.sigma_eps > 0:
            v = v + model.sigma_eps * rng.standard_normal(shape)
        gamma = classify(v, model.thresholds)
        lam = np.empty(shape)
        for k in range(k_classes):
            sel = gamma == k
            if not sel.any():
                continue
            if has_field[k]:
                xk = sample_fft(model.classes[k].field, lattice, rng,
                                role=CLASS_ROLE, order=order).values
                lam[sel] = np.exp(xk[sel] + np.broadcast_to(means[k], shape)[sel])
            else:
                lam[sel] = np.exp(np.broadcast_to(means[k], shape)[sel])
        integrals = flat_w @ lam.ravel()
        terms[s] = np.exp(-integrals)
    f_hat = 1.0 - terms.mean(axis=0)
    se = terms.std(axis=0, ddof=1) / math.sqrt(n_sims)
    if np.ndim(r) == 0:
        return float(f_hat[0]), float(se[0])
    return f_hat, se
