"""Desk-scale active vision-action manipulation: voxel simulator, dual NBV/NBP agent and metrics."""

__version__ = "0.1.0"
