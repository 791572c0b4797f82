"""Gated graph neural networks for situation recognition: a verb plus its role-noun frame."""

from .errors import (ConfigError, ContractError, DatasetError, DimensionError, NumericError,
                     OracleError, SituError)
from .model import ModelParams, forward, forward_sequential, init_hidden, propagate_step
from .ontology import Instance, Ontology, canonical_agent, chain_order, load_dataset, write_dataset
from .synthetic import SyntheticConfig, generate_synthetic
from .topology import Topology, build_topology, neighbors_in
from .training import TrainConfig, train
from .inference import SituationPrediction, predict_beam, predict_greedy, top_k_verbs
from .evaluation import MetricReport, aggregate, confusion_matrix, score_instance
from .analysis import export_embeddings, propagation_norm_matrix

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ContractError", "DatasetError", "DimensionError", "NumericError",
    "OracleError", "SituError",
    "ModelParams", "forward", "forward_sequential", "init_hidden", "propagate_step",
    "Instance", "Ontology", "canonical_agent", "chain_order", "load_dataset", "write_dataset",
    "SyntheticConfig", "generate_synthetic",
    "Topology", "build_topology", "neighbors_in",
    "TrainConfig", "train",
    "SituationPrediction", "predict_beam", "predict_greedy", "top_k_verbs",
    "MetricReport", "aggregate", "confusion_matrix", "score_instance",
    "export_embeddings", "propagation_norm_matrix",
]
