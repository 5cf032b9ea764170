"""Simulation, forecasting, detection and graph post-processing."""
