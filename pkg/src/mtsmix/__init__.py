"""Simulation library for combining predictors in metrical task systems.

Submodules:
  core        - metric spaces, instances, traces, exact cost accounting
  unfair      - unfair uniform-metric task systems: OddExponent, Share
  combine     - full-access predictor mixing
  bandit      - one-query-per-step predictor mixing
  benchmarks  - exact offline benchmarks (dynamic combinations, optimum)
  instances   - generators and reductions
  cli         - reproducible experiment harness (``mtsmix`` entry point)
"""

from . import bandit, benchmarks, combine, core, instances, unfair

__version__ = "0.1.0"

__all__ = ["core", "unfair", "combine", "bandit", "benchmarks", "instances", "__version__"]
