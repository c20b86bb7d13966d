"""Sparse null-vector regression toolkit.

Pipeline: simulate a chaotic PDE (kssim) -> enumerate a symbolic term
library (symlib) -> assemble a nondimensionalized weak-form feature matrix
(weakform) -> run greedy sparse null-vector searches accelerated by secular
bisection (search, secular, linalg) -> select models from the optimization
curve.  The cli module wires the stages together behind one executable.
"""

from .linalg import (
    CoefficientVector,
    FeatureMatrix,
    SvdFactorization,
    economy_svd,
    min_null_vector,
    qr_reduce,
    residual,
)
from .search import (
    EXHAUSTIVE,
    SPRINT_MINUS,
    SPRINT_PLUS,
    OptimizationCurve,
    RelationSet,
    SearchConfig,
    exhaustive_search,
    find_relations,
    select_model,
    sprint_minus,
    sprint_plus,
)
from .secular import (
    ADD,
    REMOVE,
    BisectionConfig,
    RankOneUpdate,
    SecularBreakdown,
    bisect_min_singular,
    bracket,
    rank_one_update,
    secular_minus,
    secular_plus,
    secular_regularized,
)
from .symlib import (
    Alphabet,
    Library,
    SymbolicWord,
    canonicalize,
    count,
    enumerate_words,
    ks_dynamic_library,
    ks_spatial_library,
    mhd_alphabet,
    upper_bound,
)

__version__ = "0.1.0"
