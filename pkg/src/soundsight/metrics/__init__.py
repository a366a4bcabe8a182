from .frechet import frechet_distance, mean_cov
from .kld import class_kl, kld_metric
from .retrieval import match_ranks, retrieval_eval

__all__ = [
    "class_kl",
    "frechet_distance",
    "kld_metric",
    "match_ranks",
    "mean_cov",
    "retrieval_eval",
]
