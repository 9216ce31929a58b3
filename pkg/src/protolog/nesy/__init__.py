"""Neural predicates backed by Gaussian prototypes."""

from .builtins import NeuralBackend
from .engine import (
    Engine, NesyAnswer, answer_canonical, decode_goal, encode_goal, im_similar, load_program,
    neural_ad_probabilities, transform_for_inference,
)
from .evaluator import QueryEnv, RecipeEvaluator

__all__ = [
    "Engine", "NesyAnswer", "NeuralBackend", "QueryEnv", "RecipeEvaluator", "answer_canonical",
    "decode_goal", "encode_goal", "im_similar", "load_program", "neural_ad_probabilities",
    "transform_for_inference",
]
