"""Experiment harness: synthetic data (``generators``), sweep runners
(``experiments``), figures (``plotting``) and the command line (``cli``)."""
