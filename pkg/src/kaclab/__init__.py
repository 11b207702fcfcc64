"""kaclab: a numerical laboratory for the Kac model.

The pieces fit together like the theory does:

* :mod:`kaclab.walk` -- the N-particle Kac walk on S^{N-1}(sqrt N), its
  Poissonified master dynamics and the spectral gap.
* :mod:`kaclab.densities` -- one-particle velocity densities (Gaussian
  mixtures and grids), moments, entropies and distances.
* :mod:`kaclab.wild` -- the Wild convolution, the mean-field
  Boltzmann-Kac evolution and entropy production.
* :mod:`kaclab.conditioned` -- conditioned tensor products on the sphere:
  exact and asymptotic normalizations, marginals, samplers, and the
  per-particle entropy/entropy-production estimators.
* :mod:`kaclab.lclt` -- a quantitative local central limit theorem with
  an explicit three-term error budget.
* :mod:`kaclab.cli` -- reproducible batch experiments writing CSV/JSON.
"""

from .densities import (
    DEFAULT_GRID,
    GaussianMixture,
    GridDensity1D,
    MomentReport,
    bc_mixture,
    evaluate,
    maxwellian,
    moments,
    mollify_standardize,
    read_grid_density,
    relative_entropy,
    relative_entropy_to_gaussian,
    tail_energy,
    to_grid,
    tv_distance,
    write_grid_density,
)
from .walk import (
    EstimateReport,
    PairRotation,
    SphereState,
    WalkConfig,
    phi_gap,
    rayleigh_quotient,
    rotate_pair,
    run_steps,
    sample_uniform_sphere,
    simulate_continuous,
    spectral_gap_exact,
    sphere_fourth_moment,
    step,
)
from .wild import (
    DsmallReport,
    EvolutionTrace,
    ThetaQuadrature,
    dsmall_paper_bound,
    dsmall_report,
    entropy_production_D,
    evolve,
    wild_convolution,
)
from .conditioned import (
    AsymptoticParams,
    ConditionedProduct,
    MetropolisSampler,
    RadialDensity,
    ZTable,
    asymptotic_log_Z,
    build_ztable,
    convolve_power,
    entropy_per_particle,
    entropy_production_per_particle,
    gamma_ratio_check,
    marginal_conditioned,
    marginal_entropy_gap,
    marginal_sigma,
    metropolis_sampler,
    squared_pushforward,
)
from .lclt import (
    CharacteristicFunction,
    LcltBoundReport,
    char_fn,
    check_bound_iii,
    entropy_alpha_lower_bound,
    find_alpha0,
    lclt_error_bound,
    measure_alpha,
    measure_eps,
    rescaled_convolution,
    standardize,
)

__version__ = "0.1.0"
