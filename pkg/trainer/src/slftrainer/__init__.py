"""Offline training of generative spatial-loss-field priors, with export to
the dense weight format consumed by the recovery runtime."""

from .config import TrainConfig, load_config
from .data import make_training_set, ranges_from_scenario, shadow_field, slf_field
from .distill import distill_to_dense
from .export import export_dense, forward_fields
from .models import ConvDiscriminator, ConvGenerator, MlpEncoder, MlpGenerator, build_generator
from .train import TrainingDiverged, train

__version__ = "0.1.0"
