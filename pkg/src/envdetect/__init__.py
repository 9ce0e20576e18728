"""Noncoherent detection of a constant-envelope tone from magnitude-only samples.

Submodules: ``special`` (Bessel, gamma, Marcum Q), ``signal_model``,
``estimation`` (amplitude MLEs), ``detection`` (ED, AD, GLRT, RID),
``sumdist`` and ``performance`` (analytic error rates and switch points),
``montecarlo`` (empirical rates) and ``cli``.
"""

__version__ = "0.1.0"
