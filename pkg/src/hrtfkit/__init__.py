"""Statistical HRTF individualization on the horizontal plane.

Builds a principal-components model of measured magnitude HRTFs,
regresses the component weights onto eight anthropometric measurements,
and synthesizes minimum-phase HRIRs (with per-direction onset delays)
for a new listener from their body measurements alone.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .dataset import (AnthropometryTable, Direction, HrirArchive,
                      TrainedModel, load_anthropometry, load_archive,
                      load_model, save_anthropometry, save_archive,
                      save_model)
from .pipeline import (EvaluationReport, IndividualizedHrirSet, evaluate,
                       individualize, train)
from .testkit import SyntheticWorld, synth_generate

__all__ = [
    "AnthropometryTable", "BACKEND", "Direction", "EvaluationReport",
    "HrirArchive", "IndividualizedHrirSet", "SyntheticWorld", "TrainedModel",
    "__version__", "evaluate", "individualize", "load_anthropometry",
    "load_archive", "load_model", "save_anthropometry", "save_archive",
    "save_model", "synth_generate", "train",
]
