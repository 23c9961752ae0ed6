"""Coverage-guided concolic test-suite generation for feedforward ReLU networks."""

from .network import (
    ActivationCache,
    ActivationPattern,
    Activations,
    Conv2D,
    Dense,
    Flatten,
    MaxPool,
    Network,
    forward,
    load_model,
    pattern_of,
    save_model,
)
from .logic import (
    Box,
    Requirement,
    SubspacePartition,
    coverage,
    eval_bool,
    gen_lipschitz,
    gen_nbc,
    gen_nc,
    gen_ssc,
    satisfies,
)
from .ranking import (
    LayerFactors,
    RankedCandidate,
    estimate_layer_factors,
    rank_lipschitz,
    rank_nbc,
    rank_nc,
    rank_ssc,
)
from .lp import (
    LpOutcome,
    LpProblem,
    add_chebyshev_objective,
    encode_pattern,
    nbc_constraint,
    nc_target_pattern,
    solve,
    ssc_target_pattern,
    symbolic_lp,
)
from .l0search import L0Budget, l0_distance, symbolic_l0
from .lipschitz import (
    LipConfig,
    LipWitness,
    alternating_search,
    compass_minimize,
    lip_ratio,
    random_baseline,
    stage_one,
    stage_two_loop,
)
from .oracle import (
    AdversarialRecord,
    CoverageReport,
    ReferenceSet,
    nearest,
    robustness_check,
    suite_report,
    validity_check,
)
from .engine import (
    RunConfig,
    RunResult,
    TestCase,
    TestSuite,
    load_suite,
    nbc_bounds_from_samples,
    persist_suite,
    run,
    save_run,
)

__version__ = "0.1.0"
