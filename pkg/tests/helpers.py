import numpy as np


def random_weights(rng, n):
    """严格为正、和为 1 的随机权重"""
    weights = rng.random(n) + 0.1
    return weights / weights.sum()
