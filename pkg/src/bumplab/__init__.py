"""Numerical laboratory for two-weight bump conditions and sparse operators."""

from .bumps import (
    BumpProfile,
    EpsilonFunction,
    ap_constant,
    entangled_bump,
    epsilon_integral,
    normalize_epsilon,
    rho,
    separated_bump,
)
from .grid import DyadicCube, WeightGrid
from .orlicz import (
    YoungFunction,
    bp_integral,
    dual_young,
    eval_young,
    log_bump,
    loglog_bump,
    luxembourg_norm,
    numeric_dual,
    power,
    tabulated,
)
from .sparse import (
    SparseCollection,
    SparseOperator,
    apply_sparse,
    norm_oracle,
    orlicz_maximal,
    split_sparse,
    testing_constant,
    verify_sparse,
    weighted_maximal,
)

__version__ = "0.1.0"
