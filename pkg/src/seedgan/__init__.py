"""Generative seed synthesis for coverage-guided fuzzing.

A GAN or WGAN learns the byte distribution of high-quality testcases
harvested from a bootstrap fuzzing run. Its samples then seed an AFL-style
fuzzer. See the README for the pipeline and the ``seedgan`` command line.
"""

__version__ = "0.1.0"
