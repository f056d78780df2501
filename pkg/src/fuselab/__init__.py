"""fuselab: a desk-scale laboratory for knowledge forgetting under model fusion.

Trains small seeded neural models (bag classifier, causal LM, masked LM)
from a shared base, fuses their weights by convex combination, and measures
which knowledge survives: task/shortcut accuracy, fairness gaps, memorization
likelihood ratios, and Fisher-information overlap.
"""

__version__ = "0.1.0"

from fuselab.params import ParameterSet, Segment
from fuselab.rng import Rng
from fuselab.models import Model, ModelConfig
from fuselab.training import TrainConfig, TrainResult, init_base, train

__all__ = [
    "ParameterSet",
    "Segment",
    "Rng",
    "Model",
    "ModelConfig",
    "TrainConfig",
    "TrainResult",
    "init_base",
    "train",
    "__version__",
]
