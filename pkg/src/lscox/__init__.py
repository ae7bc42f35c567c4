"""Level-set Cox processes: simulation, moments, MCMC inference, diagnostics.

The model partitions the observation window by thresholding a latent
Gaussian level-set field and assigns each region its own log-intensity
surface (a Gaussian random field, a covariate regression, or a constant).
Conditional on the assembled intensity, points follow a Poisson process.

Subpackages and modules:

- ``lattice``: window discretization, extension margins, point binning
- ``grf``: Matern fields, spectral FFT sampler, dense Cholesky oracle
- ``model``: class specifications, thresholds, intensity assembly
- ``simulate``: forward realizations and the four example presets
- ``moments``: product densities, pair correlation, K and F functions
- ``inference``: Metropolis-within-Gibbs sampler over fields and parameters
- ``summaries``: empirical L, g, F estimators and envelope tests
- ``data``: pattern/raster ingestion, interpolation, VIF, Holm correction
- ``convergence_checks``: lattice refinement and truncation study harness
- ``cli``: command-line entry point
"""

__version__ = "0.1.0"
