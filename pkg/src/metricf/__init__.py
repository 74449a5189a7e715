"""Metric factorization recommender: users and items as points in Euclidean space."""

from .dataset import Dataset, Interaction, SplitSpec, binarize, build_dataset, load_dataset, random_split
from .errors import ConfigError, DataFormatError, MetricFError, NumericError, ShapeError
from .metrics import EvalReport, evaluate_ranking, evaluate_rating
from .models import load_model
from .ranking import RankingConfig, RankingModel, train_ranking
from .rating import RatingConfig, RatingModel, train_rating

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataFormatError", "Dataset", "EvalReport", "Interaction", "MetricFError", "NumericError",
    "RankingConfig", "RankingModel", "RatingConfig", "RatingModel", "ShapeError", "SplitSpec", "binarize",
    "build_dataset", "evaluate_ranking", "evaluate_rating", "load_dataset", "load_model", "random_split",
    "train_ranking", "train_rating",
]
