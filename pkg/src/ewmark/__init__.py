"""Anytime-valid detection of Gumbel-max watermarks in token streams.

The package generates watermarked token streams, extracts pivotal statistics,
and runs e-process sequential tests whose Type I error is controlled at any
stopping time, alongside classical sum-based baselines for comparison.
"""

from .core import (
    PivotalRecord,
    ProbVector,
    Verdict,
    VerdictStatus,
    entropy,
    in_delta_simplex,
    make_prob_vector,
)
from .gumbel import (
    PseudoUniformVector,
    WatermarkKey,
    alt_cdf,
    alt_density,
    decode,
    derive_uniform,
    kl_alt_uniform,
    pivotal,
    sample_alt,
    unbiasedness_check,
)
from .calibrators import (
    CalibratorKind,
    FixedCalibrator,
    MixtureCalibrator,
    PHistory,
    StepCalibrator,
    adaptive_lambda,
    clamp_range,
    eval_fixed,
    grenander_fit,
)
from .engine import (
    Average,
    EProcessState,
    Nonadaptive,
    OG,
    WeightAdaptive,
    detector_from_config,
    find_lambda0,
    growth_rate,
    new_detector,
    run,
)
from .baselines import SumTestConfig, null_threshold, sequential_monitor, sum_score
from .simulate import (
    ErrorCurves,
    ExperimentConfig,
    SpikeConfig,
    emit_results,
    gen_spike_ntp,
    gen_streams,
    read_results,
    run_experiment,
)

__version__ = "0.1.0"
