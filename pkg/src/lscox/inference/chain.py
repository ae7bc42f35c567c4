"""Chain orchestration: the three-step sweep, step-size adaptation,
sample storage, and posterior summaries.

Each iteration resamples every cell label exactly, moves the parameter
blocks by preconditioned Langevin steps (optionally interleaved with
fixed-noise covariance moves), and refreshes each latent field by a
Crank-Nicolson Langevin step. Step sizes adapt toward 0.574 acceptance
during burn-in and are frozen afterwards.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..lattice import CLASS_ROLE, LEVEL_ROLE, CountGrid
from ..model import GAUSSIAN
from .blocks import GaussianClassBlock, LevelBlock, MeanBlock
from .spectral import SpectralOps
from .state import (ChainState, FitSpec, build_designs, class_eta_flat,
                    initial_state)
from .updates import (StepState, gibbs_gamma, interweave_cov, mala_theta,
                      shift_translation,
                      pcn_mala_field)

MALA_TARGET = 0.574
RW_TARGET = 0.30
MAX_FIELD_SAMPLES = 200


@dataclass
class ChainResult:
    """Thinned posterior draws plus joint field snapshots and diagnostics."""

    fit: FitSpec
    names: list
    theta: np.ndarray                  # (n_kept, n_params), natural scale
    gammas: np.ndarray                 # (n_field, ny, nx) labels, 0-based
    log_intensity: np.ndarray          # (n_field, ny, nx)
    level_fields: Optional[np.ndarray]  # (n_field, ny, nx) or None when K = 1
    class_fields: dict                 # k -> (n_field, ny, nx)
    field_theta_idx: np.ndarray        # row of `theta` drawn jointly with each snapshot
    gamma_prob: np.ndarray             # (K, ny, nx) mean one-hot over kept iterations
    mean_log_intensity: np.ndarray     # (ny, nx) mean over kept iterations
    acceptance: dict
    diagnostics: dict
    meta: dict

    @property
    def n_kept(self) -> int:
        return self.theta.shape[0]

    def theta_column(self, name: str) -> np.ndarray:
        return self.theta[:, self.names.index(name)]


def _natural_values(block, state: ChainState) -> np.ndarray:
    """Block parameters on their reporting scale (variances and ranges
    exponentiated back from the sampling scale)."""
    vec = block.vector(state).copy()
    if isinstance(block, GaussianClassBlock):
        vec[0] = math.exp(vec[0])
        vec[1] = math.exp(vec[1])
    elif isinstance(block, LevelBlock):
        i = block.n_c
        if block.with_nugget:
            vec[i] = math.exp(vec[i])
            i += 1
        if block.with_range:
            vec[i] = math.exp(vec[i])
    return vec


class _Welford:
    def __init__(self, dim: int):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def push(self, x: np.ndarray):
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)

    def var(self) -> np.ndarray:
        if self.n < 2:
            return np.ones_like(self.mean)
        return self.m2 / (self.n - 1)


def _adapt(step: StepState, accepted: bool, count: int, target: float):
    gain = 0.5 / (1.0 + count) ** 0.6
    step.log_step += gain * ((1.0 if accepted else 0.0) - target)
    step.log_step = min(max(step.log_step, math.log(1e-10)), math.log(1e4))


def run_chain(fit: FitSpec, counts: CountGrid, n_iter: int,
              burn_in: Optional[int] = None, thinning: int = 10,
              seed: Optional[int] = None,
              max_field_samples: int = MAX_FIELD_SAMPLES) -> ChainResult:
    """Run the three-step sampler and return thinned draws.

    ``burn_in`` defaults to 20% of ``n_iter``. Joint snapshots of the
    fields, labels, and log intensity are kept for at most
    ``max_field_samples`` of the thinned iterations, evenly spaced, with
    the matching parameter rows recorded so envelope simulation can use
    coherent joint draws.
    """
    if n_iter <= 0:
        raise ValueError("n_iter must be positive")
    if burn_in is None:
        burn_in = n_iter // 5
    if not 0 <= burn_in < n_iter:
        raise ValueError("burn_in must lie in [0, n_iter)")
    if thinning < 1:
        raise ValueError("thinning must be at least 1")
    if counts.lattice is not fit.lattice and counts.lattice != fit.lattice:
        raise ValueError("counts were binned on a different lattice")

    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    model = fit.model
    lat = fit.lattice
    k_classes = model.n_classes
    counts_flat = counts.counts.ravel().astype(float)

    ops: dict[str, SpectralOps] = {}
    if k_classes > 1:
        ops[LEVEL_ROLE] = SpectralOps(lat, LEVEL_ROLE, fit.order)
    if any(c.kind == GAUSSIAN for c in model.classes):
        ops[CLASS_ROLE] = SpectralOps(lat, CLASS_ROLE, fit.order)

    designs, level_design = build_designs(fit)
    state = initial_state(fit, counts, ops, designs, level_design, rng)

    blocks = []
    if k_classes > 1:
        level_block = LevelBlock(fit, level_design, ops[LEVEL_ROLE])
        if level_block.n_par:
            blocks.append(level_block)
    for k, cls in enumerate(model.classes):
        if cls.kind == GAUSSIAN:
            blocks.append(GaussianClassBlock(fit, k, designs[k],
                                             ops[CLASS_ROLE], counts_flat))
        elif designs[k].n_par:
            blocks.append(MeanBlock(fit, k, designs[k], counts_flat))

    field_slots = []
    if k_classes > 1:
        field_slots.append("level")
    field_slots += [k for k, c in enumerate(model.classes) if c.kind == GAUSSIAN]
    iw_slots = [s for s in field_slots
                if s != "level" or fit.estimate_level_range] if fit.interweave else []
    shift_slots: list = []
    shift_icol: dict = {}
    if fit.interweave:
        if k_classes > 1 and fit.estimate_thresholds:
            shift_slots.append("level")
        for k, cls in enumerate(model.classes):
            if cls.kind != GAUSSIAN or not designs[k].n_par:
                continue
            cols = [j for j in range(designs[k].n_par)
                    if np.allclose(designs[k].design[:, j], 1.0)]
            if cols:
                shift_slots.append(k)
                shift_icol[k] = cols[0]

    block_steps = {b: StepState(math.log(0.01), np.ones(b.n_par)) for b in blocks}
    field_steps = {s: StepState(math.log(0.05), np.ones(1)) for s in field_slots}
    iw_steps = {s: StepState(math.log(0.1), np.ones(1)) for s in iw_slots}
    shift_steps = {s: StepState(math.log(0.5), np.ones(1)) for s in shift_slots}
    welford = {b: _Welford(b.n_par) for b in blocks}

    names: list = []
    for b in blocks:
        names += b.names
    kept_iters = list(range(burn_in, n_iter, thinning))
    n_kept = len(kept_iters)
    keep_pos = {it: i for i, it in enumerate(kept_iters)}
    n_field = min(max_field_samples, n_kept)
    field_pos = set(np.unique(np.linspace(0, n_kept - 1, n_field).astype(int))
                    ) if n_kept else set()

    theta = np.zeros((n_kept, len(names)))
    gammas = np.zeros((len(field_pos), lat.ny, lat.nx), dtype=np.int8)
    log_int = np.zeros((len(field_pos), lat.ny, lat.nx), dtype=np.float32)
    level_fields = (np.zeros((len(field_pos), lat.ny, lat.nx), dtype=np.float32)
                    if k_classes > 1 else None)
    class_fields = {k: np.zeros((len(field_pos), lat.ny, lat.nx), dtype=np.float32)
                    for k in field_slots if k != "level"}
    field_theta_idx = np.zeros(len(field_pos), dtype=np.int64)
    gamma_prob = np.zeros((k_classes, lat.ny, lat.nx))
    mean_log_int = np.zeros((lat.ny, lat.nx))
    f_row = 0

    for it in range(n_iter):
        adapting = it < burn_in
        gibbs_gamma(state, counts_flat, rng)
        for b in blocks:
            acc = mala_theta(b, state, block_steps[b], rng)
            if adapting:
                _adapt(block_steps[b], acc, it, MALA_TARGET)
                welford[b].push(b.vector(state))
                if it >= 50 and it % 25 == 0:
                    sd = np.sqrt(welford[b].var())
                    if np.all(sd > 0):
                        sd = sd / math.exp(np.log(sd).mean())
                        block_steps[b].precond = np.clip(sd, 0.05, 20.0)
        for s in iw_slots:
            acc = interweave_cov(state, s, counts_flat, iw_steps[s], rng)
            if adapting:
                _adapt(iw_steps[s], acc, it, RW_TARGET)
        for s in shift_slots:
            acc = shift_translation(state, s, shift_steps[s], rng,
                                    intercept_idx=shift_icol.get(s, 0))
            if adapting:
                _adapt(shift_steps[s], acc, it, RW_TARGET)
        for s in field_slots:
            acc = pcn_mala_field(state, s, counts_flat, field_steps[s], rng)
            if adapting:
                _adapt(field_steps[s], acc, it, MALA_TARGET)
                field_steps[s].log_step = min(field_steps[s].log_step,
                                              math.log(2.0))

        if it in keep_pos:
            row = keep_pos[it]
            col = 0
            for b in blocks:
                vals = _natural_values(b, state)
                theta[row, col:col + b.n_par] = vals
                col += b.n_par
            eta = np.stack([class_eta_flat(state, k).reshape(lat.shape)
                            for k in range(k_classes)])
            loglam = np.take_along_axis(eta, state.gamma[None], axis=0)[0]
            mean_log_int += loglam / n_kept
            onehot = np.zeros((k_classes, lat.n_cells))
            onehot[state.gamma.ravel(), np.arange(lat.n_cells)] = 1.0
            gamma_prob += onehot.reshape(k_classes, lat.ny, lat.nx) / n_kept
            if row in field_pos:
                gammas[f_row] = state.gamma
                log_int[f_row] = loglam
                if level_fields is not None:
                    level_fields[f_row] = state.field_window("level")
                for k in class_fields:
                    class_fields[k][f_row] = state.field_window(k)
                field_theta_idx[f_row] = row
                f_row += 1

    acceptance = {}
    for b in blocks:
        acceptance[f"theta[{'/'.join(b.names)}]"] = block_steps[b].rate
    for s in field_slots:
        label = "level" if s == "level" else f"class_{s + 1}"
        acceptance[f"field[{label}]"] = field_steps[s].rate
    for s in iw_slots:
        label = "level" if s == "level" else f"class_{s + 1}"
        acceptance[f"interweave[{label}]"] = iw_steps[s].rate
    for s in shift_slots:
        label = "level" if s == "level" else f"class_{s + 1}"
        acceptance[f"shift[{label}]"] = shift_steps[s].rate

    diagnostics = {
        "all_zero_data": bool(counts.total == 0),
        "step_sizes": {k: math.exp(v.log_step)
                       for k, v in {**{"/".join(b.names): block_steps[b]
                                       for b in blocks},
                                    **{f"field_{s}": field_steps[s]
                                       for s in field_slots},
                                    **{f"interweave_{s}": iw_steps[s]
                                       for s in iw_slots},
                                    **{f"shift_{s}": shift_steps[s]
                                       for s in shift_slots}}.items()},
        "ess": {name: effective_sample_size(theta[:, j])
                for j, name in enumerate(names)},
    }
    meta = {"n_iter": n_iter, "burn_in": burn_in, "thinning": thinning,
            "seed": seed, "runtime_s": time.perf_counter() - t0,
            "n_kept": n_kept}
    return ChainResult(fit=fit, names=names, theta=theta, gammas=gammas,
                       log_intensity=log_int, level_fields=level_fields,
                       class_fields=class_fields,
                       field_theta_idx=field_theta_idx, gamma_prob=gamma_prob,
                       mean_log_intensity=mean_log_int, acceptance=acceptance,
                       diagnostics=diagnostics, meta=meta)


def posterior_summaries(result: ChainResult, level: float = 0.95) -> dict:
    """Pointwise posterior summaries from a sample store.

    Returns the mean log-intensity raster, per-class membership
    probability rasters, and per-parameter mean, sd, and equal-tailed
    credible intervals with effective sample sizes.
    """
    if result.n_kept == 0:
        raise ValueError("sample store is empty")
    lo_q, hi_q = (1.0 - level) / 2.0, 1.0 - (1.0 - level) / 2.0
    params = {}
    for j, name in enumerate(result.names):
        x = result.theta[:, j]
        params[name] = {
            "mean": float(x.mean()),
            "sd": float(x.std(ddof=1)) if x.size > 1 else 0.0,
            "lo": float(np.quantile(x, lo_q)),
            "hi": float(np.quantile(x, hi_q)),
            "ess": effective_sample_size(x),
        }
    return {
        "mean_log_intensity": result.mean_log_intensity,
        "class_probability": result.gamma_prob,
        "parameters": params,
        "acceptance": dict(result.acceptance),
    }


def effective_sample_size(x: np.ndarray) -> float:
    """Effective sample size from the initial positive autocovariance
    sequence of a single chain."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    x = x - x.mean()
    var = float(x @ x) / n
    if var == 0:
        return float(n)
    acov = np.correlate(x, x, mode="full")[n - 1:] / n
    rho = acov / var
    # sum consecutive pairs until a pair sum turns negative
    total = 1.0
    t = 1
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        total += 2.0 * pair
        t += 2
    return float(min(n, max(1.0, n / max(total, 1e-12))))


def split_rhat(chains: np.ndarray) -> float:
    """Potential scale reduction from chains split in half.

    ``chains`` has shape (n_chains, n_draws)."""
    chains = np.asarray(chains, dtype=float)
    if chains.ndim != 2 or chains.shape[1] < 4:
        raise ValueError("need at least two draws per half chain")
    half = chains.shape[1] // 2
    parts = np.concatenate([chains[:, :half], chains[:, half:2 * half]], axis=0)
    m, n = parts.shape
    means = parts.mean(axis=1)
    b = n * means.var(ddof=1)
    w = parts.var(axis=1, ddof=1).mean()
    if w == 0:
        return 1.0
    var_plus = (n - 1) / n * w + b / n
    return float(math.sqrt(var_plus / w))
