from .graph import GatLayer, GraphEncoder, adjacency, graph_conv, project, reproject
from .loss import siv_loss, term_weights
from .model import FlowSequence, SivConfig, SivNet
from .msvr import gate
from .train import Dataset, TrainConfig, evaluate, load_model, save_run, train, train_toy

__all__ = [
    "Dataset", "FlowSequence", "GatLayer", "GraphEncoder", "SivConfig", "SivNet", "TrainConfig",
    "adjacency", "evaluate", "gate", "graph_conv", "load_model", "project", "reproject", "save_run",
    "siv_loss", "term_weights", "train", "train_toy",
]
