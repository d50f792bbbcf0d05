"""Command-line entry point: ``phaseforge`` / ``python -m cli``."""
