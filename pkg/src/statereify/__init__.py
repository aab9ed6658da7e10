"""State reification toolkit: attractor networks and denoising autoencoders
that pull neural hidden states back onto the training manifold."""

__version__ = "0.1.0"

from .attractor import (
    AttractorConfig,
    AttractorDenoiser,
    AttractorNet,
    AttractorTargets,
)
from .adversarial import AttackConfig, ReifiedMlp, ReifiedMlpClassifier
from .dae import Dae, DenoisingAutoencoder
from .ndcore import Tensor, grad_check
from .rnn import SdrnnClassifier, SdrnnModel
from .tasks import Dataset
from .training import Adam, Checkpoint, TrainSchedule

__all__ = [
    "__version__",
    "AttractorConfig",
    "AttractorDenoiser",
    "AttractorNet",
    "AttractorTargets",
    "AttackConfig",
    "ReifiedMlp",
    "ReifiedMlpClassifier",
    "Dae",
    "DenoisingAutoencoder",
    "Tensor",
    "grad_check",
    "SdrnnClassifier",
    "SdrnnModel",
    "Dataset",
    "Adam",
    "Checkpoint",
    "TrainSchedule",
]
