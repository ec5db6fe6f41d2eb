"""Correlation and communication complexity of multipartite quantum states
and classical distributions: exact values for pure states, bound intervals
for mixed states, PSD-rank machinery, and constructive generation protocols.
"""
from .complexity import (
    ComplexityReport,
    PurificationError,
    comm_corr_consistency,
    extract_factors,
    marginal_complexity,
    marginal_complexity_eps,
    min_product_cover,
    qcomm_mixed_bounds,
    qcomm_pure_bounds,
    qcorr_classical_bounds,
    qcorr_eps_bipartite_pure,
    qcorr_eps_classical,
    qcorr_eps_pure_bounds,
    qcorr_eps_pure_mixed_relation,
    qcorr_mixed_bounds,
    qcorr_pure,
    verify_general_characterization,
)
from .psd_rank import FitOptions, PsdFactorization, psd_rank_lower, psd_rank_upper
from .synthesis import (
    GenerationProtocol,
    ProtocolError,
    canonical_seed,
    purification_from_psd,
    qcomm_upper_protocol,
    simulate_protocol,
    subset_truncate,
    truncate_pure,
)
from .tensor_core import ClassicalDistribution, DensityOperator, InvariantError, PureState

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
