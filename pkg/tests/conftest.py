"""Shared pytest configuration.

Hypothesis runs derandomized so a red property test reproduces exactly
on rerun; the deadline is disabled because the suite shares one CPU
with the Monte Carlo tests and per-example timing is meaningless there.
"""

from hypothesis import settings

settings.register_profile("suite", derandomize=True, deadline=None)
settings.load_profile("suite")
