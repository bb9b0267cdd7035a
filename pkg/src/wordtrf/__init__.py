"""Word recognition dynamics and temporal receptive field models.

A two-part modeling toolkit: an incremental Bayesian model of auditory
word recognition that turns contextual priors and phoneme-confusion
evidence into per-word recognition times, and a family of lagged ridge
regression (TRF) models that link those dynamics to multi-sensor neural
recordings, with cross-validated fitting, hyperparameter search, and
paired model comparison.  A seeded synthetic generator provides ground
truth for verifying every stage.
"""

__version__ = "0.1.0"

from .exceptions import NumericalError, ValidationError
from .lexicon import (
    ConfusionMatrix,
    Lexicon,
    PhonemeInventory,
    build_confusion,
    concat_confusion_counts,
    phoneme_likelihood,
)
from .transcript import AlignedPhoneme, AlignedWord, StimulusTranscript
from .recognition import (
    CandidateSet,
    CognitiveParams,
    RecognitionResult,
    posterior,
    posterior_trajectory,
    recognition_point,
    recognition_time,
    recognize_transcript,
)
from .cohort import (
    CohortState,
    advance_cohort,
    next_phoneme_dist,
    onset_cohort,
    phoneme_surprisal_entropy,
    transcript_phoneme_features,
)
from .features import (
    FeatureSeries,
    QuantileSplit,
    WordFeatures,
    build_xt,
    build_xv,
    tertile_split,
)
from .trf import (
    FeatureLayout,
    NeuralRecording,
    TrfModel,
    convolve_features,
    design_matrix,
    fit_ridge,
    fit_ridge_multi,
    predict,
    sensor_correlations,
)
from .linking import (
    LINKING_VARIANTS,
    LinkingSpec,
    ModelComparison,
    assemble_word_design,
    coefficient_peak,
    compare_fit,
    model_features,
    paired_ttest,
)
from .pipeline import (
    DataSplit,
    FitReport,
    PipelineData,
    SearchSpace,
    evaluate_params,
    guard_trimmed,
    search,
    split_data,
)
from .synth import KernelSpec, SynthConfig, SynthDataset, generate, write_dataset

__all__ = [name for name in dir() if not name.startswith("_")]
