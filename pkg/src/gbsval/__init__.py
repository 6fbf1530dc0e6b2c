"""Exact simulation and validation of noisy Gaussian boson sampling.

Submodules
----------
gaussian
    Covariance conventions, Haar interferometers, conditioning.
matchpoly
    Hafnians, loop hafnians, permanents and pattern probabilities.
oracle
    Exhaustive probability tables and output-structure statistics.
samplers
    Chain-rule samplers for ideal, lossy, distinguishable and mockup inputs.
validation
    K-means++ clustering, chi-square sample-box runs, binning, correlators.
cli
    Command-line pipelines.
"""
from . import _backend
from .errors import (
    GBSError,
    InvalidInputError,
    InvalidParameterError,
    InvalidStateError,
    NumericalDegeneracyError,
    ResourceLimitError,
    SamplingDegeneracyError,
    UndefinedRatioError,
    ValidationInputError,
)
from .gaussian import (
    GaussianState,
    Interferometer,
    SqueezingSpec,
    haar_unitary,
    output_state,
)
from .matchpoly import hafnian_reference, loop_hafnian_reference, pattern_probability, permanent
from .oracle import (
    ProbabilityTable,
    distinguishable_probabilities,
    enumerate_ideal,
    lossy_probabilities,
    structure_stats,
)
from .samplers import (
    SampleSet,
    sample_coherent,
    sample_distinguishable,
    sample_ideal,
    sample_lossy,
    sample_squashed,
    sample_thermal,
)
from .validation import (
    BinningPartition,
    bin_patterns,
    correlator,
    fit_gaussian_peak,
    gamma_deviation,
    sample_box_run,
    train_clusters,
)

BACKEND = _backend.BACKEND
__version__ = "0.1.0"
