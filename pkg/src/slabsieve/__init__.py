"""Exact and Monte Carlo posteriors for sparsity priors on dyadic sequence
models, with the experiment harness that checks their concentration behavior.
"""

from .seqmodel import (
    HoelderBall,
    Observations,
    SequenceParam,
    holder_membership,
    loss_l2,
    loss_linf,
    make_holder_extremal,
    max_level,
    simulate,
)
from .slab import SlabDensity, log_marginal, log_marginal_lower_bound, sample_tilted, tilted_moments
from .spikeslab import (
    ProductPosterior,
    SpikeSlabPrior,
    concentration_prob_mc,
    fit_posterior,
    lemma1_probabilities,
    posterior_nonzero_logodds,
    sample_posterior,
    selection_set,
)
from .blockslab import (
    BlockPosterior,
    BlockPrior,
    block_active_logodds,
    fit_block_posterior,
    sample_block_posterior,
)
from .inference import (
    CredibleBall,
    bayes_estimator_l2,
    bayes_estimator_linf,
    coverage_experiment,
    credible_ball,
    risk_inequality_check,
)
from .modulus import (
    ModulusResult,
    RateFunction,
    lower_bound_envelope,
    modulus_sweep,
    omega_bruteforce,
    omega_holder_upper,
    rate,
)
from .sieve import (
    AdmissiblePartition,
    LatticeSieve,
    build_admissible_partition,
    build_sieve,
    exact_sieve_posterior,
    verify_sieve_conditions,
)

__version__ = "0.1.0"
