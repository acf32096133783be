"""Experiment orchestration: config, engine, metrics, sweeps and CLI."""
