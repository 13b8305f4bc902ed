"""Wearable stress-detection pipeline.

Raw wrist-sensor streams -> minutely physiological channels -> windowed
features -> tiered sparse logistic regression -> detected arousal events ->
permutation-tested evaluation reports. A seeded synthetic generator provides
the test substrate.
"""

__version__ = "0.1.0"
