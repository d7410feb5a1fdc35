"""Permutation-invariant network turning pooled pilot sets into mixture parameters."""

from .data import SetRecord, load_records
from .infer import run_inference
from .model import (FeatureExtractor, PilotNet, build_net, load_net,
                    mixture_log_density, mixture_nll, property_head, save_net)
from .train import TrainSettings, train

__all__ = [
    "SetRecord", "load_records", "run_inference", "FeatureExtractor",
    "PilotNet", "build_net", "load_net", "mixture_log_density", "mixture_nll",
    "property_head", "save_net", "TrainSettings", "train",
]
