"""Privileged-teacher guided SAC with ensemble-driven adaptive distillation."""

__version__ = "0.1.0"
