"""
longitudinal_gc - Granger-causal discovery for sparse longitudinal studies

Pipeline: ΔMSE Granger test with a recurrent forecaster (Step 1), bidirectional
edge orientation (Step 2), indirect-cause pruning (Step 3), plus the synthetic
study generator, a linear VAR baseline and directed-edge scoring.
"""

__version__ = "1.0.0"
