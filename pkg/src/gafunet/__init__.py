"""Pixel-wise hyperspectral classification: GAF encoding + neighborhood-attention U-Net."""

from .gaf import GafSample, encode_pixel, gadf, gasf, normalize, resize_gaf, to_polar
from .hsi import HsiCube, SplitAssignment, load_cube, save_cube, stratified_split
from .model import ModelConfig, NauNetModel, build_model, load_checkpoint, save_checkpoint
from .pe import PeSpec, pe_expand, pe_param_count
from .tensor import Tensor
from .train import TrainConfig, evaluate, lr_at_epoch, majority_vote, predict_map, train

__version__ = "0.1.0"
