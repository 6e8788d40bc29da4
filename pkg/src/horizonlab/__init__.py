"""horizonlab: a desk-scale lab for long-horizon training dynamics.

Subpackages cover the success model and trajectory sampling (``model``),
exact estimator moments and SNR (``moments``), training regimes
(``training``), compositional problem chaining (``chains``, ``graphs``),
the cost/compute curriculum search (``tradeoff``), and the CLI plumbing
(``config``, ``reporting``, ``cli``).
"""

__version__ = "0.1.0"
