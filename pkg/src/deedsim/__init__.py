"""deedsim: communication-efficient distributed optimization, simulated
with bit-exact accounting and verified against closed-form envelopes.

The package simulates a star network whose nodes exchange quantized
gradient (or weight) differences under geometrically shrinking error
budgets, counts every communicated bit with an Elias-coded wire format,
and asserts each run against the matching convergence envelope.
"""

from .bitstream import (
    BitStream,
    SparseIntVector,
    decode_sparse,
    elias_decode,
    elias_encode,
    encode_sparse,
)
from .config import RunConfig, parse_config, parse_config_file
from .engine import (
    run_adeed_gd,
    run_const_error_gd,
    run_deed_fed,
    run_deed_gd,
    run_deed_sgd,
    run_exact_agd,
    run_exact_gd,
)
from .errors import (
    BoundViolationError,
    ConfigError,
    CorruptStreamError,
    DeedsimError,
    InvalidInputError,
    RankDeficiencyError,
)
from .harness import cmd_compare, cmd_run, compute_bound, execute
from .problems import (
    FedConstants,
    QuadraticProblem,
    estimate_fed_constants,
    estimate_rho,
    from_node_data,
    load_problem,
    make_linreg,
    save_problem,
    solve_optimum,
)
from .quantizer import (
    QuantSpec,
    QuantizedMessage,
    bits_lower_bound,
    bits_upper_bound,
    dequantize,
    quantize,
)
from .theory import (
    AcceleratedConstants,
    BoundSeries,
    RecursionSpec,
    accelerated_bound,
    deterministic_bound,
    fed_bound,
    linear_rate_iff_check,
    recursion_bound,
    sgd_squared_bound,
    tightness_construction,
    zeta_bits,
)
from .trace import RunTrace

__version__ = "0.1.0"
