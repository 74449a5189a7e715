"""Load any persisted model by its mode tag."""

from __future__ import annotations

from .baselines import AverageModel, BiasedSvdModel, PopModel
from .embeddings import load_params
from .ranking import RankingModel
from .rating import RatingModel

# which evaluation task each model mode answers
TASK_OF_MODE = {
    "rating": "rating",
    "svd": "rating",
    "useravg": "rating",
    "itemavg": "rating",
    "ranking": "ranking",
    "pop": "ranking",
}

_LOADERS = {
    "rating": RatingModel.load,
    "svd": BiasedSvdModel.load,
    "useravg": AverageModel.load,
    "itemavg": AverageModel.load,
    "ranking": RankingModel.load,
    "pop": PopModel.load,
}


def load_model(path):
    return _LOADERS[load_params(path).mode](path)
