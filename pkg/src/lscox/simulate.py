"""Forward simulation of level-set Cox process realizations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grf import MaternSpec, sample_fft
from .lattice import CLASS_ROLE, LEVEL_ROLE, CountGrid, Lattice, PointPattern, bin_points
from .model import (
    CONSTANT,
    GAUSSIAN,
    ClassSpec,
    LevelSpec,
    LscpModel,
    Thresholds,
    assemble_log_intensity,
    classify,
)

#: Abort threshold for the per-cell log-intensity.
LOG_INTENSITY_CAP = 30.0


class SimulationOverflow(RuntimeError):
    """Raised when the assembled log-intensity exceeds the overflow guard."""


@dataclass(frozen=True)
class Realization:
    """One forward draw: latent surfaces, labels, counts, and points."""

    level_values: np.ndarray
    class_fields: np.ndarray
    gamma: np.ndarray
    log_intensity: np.ndarray
    counts: CountGrid
    pattern: PointPattern


def simulate_realization(model: LscpModel, lattice: Lattice,
                         rng: np.random.Generator,
                         order: Optional[int] = None) -> Realization:
    """Simulate latent fields, classification, counts, and point locations.

    Counts are Poisson with mean ``cell_area * exp(log_intensity)`` and each
    count is scattered uniformly inside its cell, so binning the returned
    pattern recovers the counts exactly.
    """
    k_classes = model.n_classes
    shape = lattice.shape

    x0 = sample_fft(model.level.field, lattice, rng, role=LEVEL_ROLE, order=order)
    v = x0.values + model.level_mean()
    if model.sigma_eps > 0:
        v_cls = v + model.sigma_eps * rng.standard_normal(shape)
    else:
        v_cls = v
    gamma = classify(v_cls, model.thresholds)

    fields = np.zeros((k_classes,) + shape)
    for k, cls in enumerate(model.classes):
        if cls.has_field:
            fields[k] = sample_fft(cls.field, lattice, rng,
                                   role=CLASS_ROLE, order=order).values
    means = model.mean_stack(shape)

    log_lam = assemble_log_intensity(fields, means, gamma)
    peak = float(log_lam.max())
    if peak > LOG_INTENSITY_CAP:
        raise SimulationOverflow(
            f"log-intensity peak {peak:.2f} exceeds cap {LOG_INTENSITY_CAP}; "
            f"cell {np.unravel_index(int(log_lam.argmax()), shape)}"
        )

    mean_counts = lattice.cell_area * np.exp(log_lam)
    counts = rng.poisson(mean_counts)
    pattern = _scatter(counts, lattice, rng)
    grid = CountGrid(counts, lattice)
    return Realization(v, fields, gamma, log_lam, grid, pattern)


def _scatter(counts: np.ndarray, lattice: Lattice,
             rng: np.random.Generator) -> PointPattern:
    """Place each counted point uniformly inside its cell."""
    iy, ix = np.nonzero(counts)
    reps = counts[iy, ix]
    ix = np.repeat(ix, reps)
    iy = np.repeat(iy, reps)
    n = ix.size
    x = (ix + rng.random(n)) * lattice.cell_width
    y = (iy + rng.random(n)) * lattice.cell_height
    return PointPattern(np.column_stack([x, y]))


def pattern_from_log_intensity(log_intensity: np.ndarray, lattice: Lattice,
                               rng: np.random.Generator) -> PointPattern:
    """Poisson counts from a per-cell log-intensity surface, scattered
    uniformly within their cells."""
    lam = lattice.cell_area * np.exp(np.asarray(log_intensity, dtype=float))
    counts = rng.poisson(lam)
    return _scatter(counts, lattice, rng)


def poisson_pattern(intensity: float, window: tuple[float, float],
                    rng: np.random.Generator) -> PointPattern:
    """Homogeneous Poisson pattern on a rectangle (testing and envelopes)."""
    w, h = window
    n = rng.poisson(intensity * w * h)
    pts = np.column_stack([rng.random(n) * w, rng.random(n) * h])
    return PointPattern(pts)


def preset_examples(name: str) -> LscpModel:
    """The four unit-square example configurations.

    ``two-random``: both classes are Matern fields (mu 2 and 0, ranges 0.1
    and 0.2). ``zero-inflated``: one field class, one low constant.
    ``two-constant``: two constants. ``boundary-layer``: three classes with
    a Gaussian interface layer between two constants. The level-set field
    has range 0.4 and the two-class presets threshold at zero.
    """
    level = LevelSpec(field=MaternSpec(sigma=1.0, rho=0.4, nu=1.0), mean=0.0)
    if name == "two-random":
        classes = (
            ClassSpec(GAUSSIAN, field=MaternSpec(1.0, 0.1, 1.0), mean=2.0),
            ClassSpec(GAUSSIAN, field=MaternSpec(1.0, 0.2, 1.0), mean=0.0),
        )
        thresholds = Thresholds((0.0,))
    elif name == "zero-inflated":
        classes = (
            ClassSpec(GAUSSIAN, field=MaternSpec(1.0, 0.1, 1.0), mean=2.0),
            ClassSpec(CONSTANT, mean=-2.0),
        )
        thresholds = Thresholds((0.0,))
    elif name == "two-constant":
        classes = (
            ClassSpec(CONSTANT, mean=2.0),
            ClassSpec(CONSTANT, mean=0.0),
        )
        thresholds = Thresholds((0.0,))
    elif name == "boundary-layer":
        classes = (
            ClassSpec(CONSTANT, mean=2.0),
            ClassSpec(GAUSSIAN, field=MaternSpec(1.0, 0.1, 1.0), mean=1.0),
            ClassSpec(CONSTANT, mean=0.0),
        )
        thresholds = Thresholds((-0.5, 0.5))
    else:
        raise ValueError(
            f"unknown preset {name!r}; choose from two-random, zero-inflated, "
            f"two-constant, boundary-layer"
        )
    return LscpModel(level=level, thresholds=thresholds, sigma_eps=0.0,
                     classes=classes)
