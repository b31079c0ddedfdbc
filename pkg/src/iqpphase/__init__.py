"""Exact simulation and classical-parent-Hamiltonian analysis of gate-density IQP circuits."""
from ._backend import BACKEND
from .circuit import (
    CircuitInstance,
    analytic_product_distribution,
    distribution,
    output_distribution,
    output_state,
    parity_permute,
    phase_function,
    sample_instance,
)
from .errors import DomainError, InvalidInputError, IQPError, NumericalError, ResourceError
from .hamiltonian import (
    CouplingSpectrum,
    coupling_l1,
    find_truncation_threshold,
    l1_distance,
    normalized_complexity,
    reconstruct,
    reconstruct_distribution,
    support_size,
    truncate,
    weight_profile,
)
from .transform import fwht, fwht_inplace, fwht_inverse

__version__ = "0.1.0"
