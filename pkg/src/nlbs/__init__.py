"""Nonlocal boson sampling with fully dephased two-mode squeezed vacuum sources."""

__version__ = "0.1.0"

from .config import Caps, CapacityError
from .fock import (
    build_submatrix,
    enumerate_outputs,
    haar_unitary,
    output_distribution,
    permanent,
    transition_probability,
)
from .states import DensityOperator, fdtsv_density, geometric_pmf, tmsv_density
from .protocol import (
    ProtocolConfig,
    SampleRecord,
    classical_local_sampler,
    exact_joint_distribution,
    run_protocol,
)
from .analysis import classify_state, discord, mutual_information, pnc_witness, tv_distance
