"""texsynth: action-conditional haptic texture vibration synthesis.

Predicts the short-time magnitude spectrum of probe acceleration from a
user's force/speed action and a texture representation, reconstructs temporal
vibration from the predicted frames, and benchmarks against a piecewise
autoregressive baseline.
"""

__version__ = "0.1.0"

from .dsp import Signal, SpectralFrame, ComplexFrame  # noqa: F401
