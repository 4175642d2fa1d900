"""NumPy implementation of FSKNet, a 3-D/2-D convolutional hyperspectral
classifier with a selective-kernel block of deformable convolutions."""

__version__ = "0.1.0"

from .data import HsiCube, PatchSet, SplitSpec, extract_patches, load_cube, normalize, save_cube, stratified_split, synth_cube
from .metrics import average_accuracy, confusion_matrix, kappa, overall_accuracy
from .model import FsknetConfig, ModelGraph, build, load_checkpoint, plan_spectral_stages, save_checkpoint
from .training import TrainConfig, cross_entropy, evaluate, fit, gradcheck_suite

__all__ = [
    "HsiCube", "PatchSet", "SplitSpec", "extract_patches", "load_cube", "normalize", "save_cube",
    "stratified_split", "synth_cube", "average_accuracy", "confusion_matrix", "kappa",
    "overall_accuracy", "FsknetConfig", "ModelGraph", "build", "load_checkpoint",
    "plan_spectral_stages", "save_checkpoint", "TrainConfig", "cross_entropy", "evaluate", "fit",
    "gradcheck_suite",
]
