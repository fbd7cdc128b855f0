"""melodylab: a desk-scale lab for adapting a small melody VAE to
out-of-distribution genres, comparing transfer-learning baselines against
a Monte Carlo tree search over recombinations of the pretrained model's
feature rows."""

__version__ = "0.1.0"
