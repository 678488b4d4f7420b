from .model import MultipolygonGNN, collate, forward, loss_and_grads
from .training import TrainConfig, TrainReport, train

__all__ = ["MultipolygonGNN", "TrainConfig", "TrainReport", "collate", "forward", "loss_and_grads", "train"]
