"""Worked examples; run with ``python -m mtimpute.examples.<name>``."""
