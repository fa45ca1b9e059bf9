"""Reduced-dimension multiuser detection: models, detectors, bounds and Monte Carlo."""

from .detectors import (
    DetectionResult,
    DetectorSpec,
    apply_whitened,
    conventional_decorrelator,
    detect,
    ml_objective,
    rd_ls_symbols,
    rd_ml,
    rd_mmse_symbols,
    rdd,
    rddf,
    rddft,
    rddt,
)
from .error_handling import RDMUDError
from .matrix_factory import (
    MatrixRecipe,
    SpectrumSpec,
    coherence,
    gen_gaussian,
    gen_kerdock,
    gen_partial_dft,
    gram_from_spectrum,
    gram_gold,
    load_matrix,
    search_min_coherence,
    subselect_columns,
    welch_bound,
)
from .model_core import (
    AmplitudeProfile,
    FrontEndObservation,
    GramMatrix,
    MeasurementMatrix,
    NoiseModel,
    SymbolVector,
    noise_covariance,
    sample_front_end,
    sample_mf_bank,
    whitening_transform,
)
from .monte_carlo import (
    AmplitudeRule,
    GramSpec,
    PeEstimate,
    TrialSpec,
    estimate_event_g,
    estimate_pe,
    run_trial,
    sweep,
    tune_threshold,
)
from .theory_bounds import BoundParams, ConditionReport

__version__ = "0.1.0"
