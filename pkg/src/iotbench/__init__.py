"""Benchmark harness for IoT time-series databases with scale-out and compression tests."""

__version__ = "0.1.0"
