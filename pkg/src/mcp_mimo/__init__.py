"""Two-BS cooperative (network MIMO) link analysis.

Mutual information and MMSE for finite and Gaussian inputs, uplink power
allocation, downlink precoding, and a deterministic simulation of the
cooperation protocol between the base stations.
"""

from .channel import PowerAllocation, VirtualChannel, db_to_linear, effective, linear_to_db
from .constellation import (
    BPSK,
    GAUSSIAN,
    QPSK,
    Constellation,
    GaussianInputs,
    JointAlphabet,
    Kind,
    enumerate_joint,
    joint_inputs,
)
from .errors import *  # noqa: F401,F403
from .infotheory import (
    GRADIENT_CONVENTION_FACTOR,
    MiEstimate,
    MmseReport,
    bpsk_siso_mi,
    bpsk_siso_mmse,
    evaluate,
    lowsnr_mi_expansion,
    lowsnr_mmse_expansion,
    mi_discrete,
    mi_gaussian,
    mi_gradient,
    mmse_matrix,
    mmse_trace,
    mutual_information,
    rate_region_bounds,
)
from .integrate import Integrator
from .power import PowerSolution, PowerSolveParams, algorithm1_solve, solve_power_gaussian
from .precoder import (
    HighSnrParams,
    PrecoderMatrix,
    PrecoderSolveParams,
    algorithm2_solve,
    d_min,
    decompose,
    highsnr_bound,
    lowsnr_optimal_precoder,
    optimize_precoder_highsnr,
)

__version__ = "0.1.0"
