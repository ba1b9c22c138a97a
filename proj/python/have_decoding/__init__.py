"""Head-adaptive gating and value calibration decoding."""

from ._core import (
    ContextToken,
    DimensionError,
    DomainError,
    FormatError,
    FusedDistribution,
    HaveError,
    InputError,
    InvariantViolation,
    NumericError,
    StepSnapshot,
    TraceExhaustedError,
    TraceFile,
    TraceHeader,
    TruncationError,
    decode_step,
    decode_trace,
    encode_trace,
    exact_match,
    greedy_step,
    normalized_entropy,
    planted_rate,
    read_trace_file,
    replay,
    run_eval,
    softmax,
    token_f1,
    top_r_support,
    toy_generate,
    validate_snapshot,
    validate_trace,
    write_trace_file,
)

__all__ = [name for name in dir() if not name.startswith("_")]
