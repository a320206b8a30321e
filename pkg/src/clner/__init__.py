"""Desk-scale continual-learning NER: span-based multi-label model with
knowledge distillation, IOB-tagging baselines, benchmark synthesis, and
CL metrics."""

__version__ = "0.1.0"
