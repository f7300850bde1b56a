"""memtrace: band-power features and small classifiers for epoched signals.

The pipeline turns multi-channel epoched recordings into six-band log-power
features and evaluates three classifiers (RBF-SVM, MLP, CNN on a 2-D channel
mesh) with leave-one-subject-out cross-validation, reporting accuracy and
Cohen's kappa per fold.
"""

from memtrace.data_model import (
    BandSet,
    ChannelLayout,
    EpochFormatError,
    EpochSet,
    ValidationReport,
    default_bands,
    default_layout,
    load_epochs,
    save_epochs,
    validate,
)
from memtrace.synthgen import SynthSpec, generate_cohort, generate_subject

__version__ = "0.1.0"

__all__ = [
    "BandSet",
    "ChannelLayout",
    "EpochFormatError",
    "EpochSet",
    "SynthSpec",
    "ValidationReport",
    "default_bands",
    "default_layout",
    "generate_cohort",
    "generate_subject",
    "load_epochs",
    "save_epochs",
    "validate",
    "__version__",
]
