"""GFDM with index modulation: transmitter, channel, ZF/ML/neural detectors,
complexity counts and a Monte Carlo BER harness."""

__version__ = "0.1.0"
