"""Coverage models over binomial point processes on a d-dimensional torus.

Simulation of the covered volume V and isolated-ball count S, their exact
finite-n moments, every normal-approximation bound constant attached to
them, and the size-biased couplings that drive those bounds.
"""

__version__ = "0.1.0"

from .analytic import (
    QuadratureSpec,
    g_S,
    g_V,
    integral_J,
    omega,
    std_normal_cdf,
    std_normal_pdf,
    unit_ball_volume,
)
from .bounds import (
    BoundReport,
    bound_report,
    delta_S,
    delta_V,
    eta_S,
    eta_V,
    finite_n_lower_bound_S,
    kissing_constants,
    lower_bound_S,
    size_bias_ks_bound,
    theorem_bound_S,
    theorem_bound_V,
)
from .coupling import (
    CouplingDraw,
    couple_binomial,
    coupling_batch,
    dominance_check,
    estimate_delta,
    pi_k,
    size_biased_pair_V,
    size_biased_pair_W,
)
from .errors import NumericalError, ValidityError
from .geometry import (
    ModelParams,
    PointConfiguration,
    neighbors_within,
    pairs_within,
    sample_configuration,
    toroidal_distance,
)
from .moments import MomentSet, mean_S, mean_V, moment_set, variance_S, variance_V
from .simulate import (
    ReplicateBatch,
    VolumeMethod,
    covered_volume,
    covered_volume_mc,
    isolated_count,
    run_replicates,
)
from .stats import KolmogorovResult, dkw_band, ks_distance, sandwich_test
