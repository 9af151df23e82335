"""Visual foresight planning loop: planner, foresight generator, edge control and evaluation."""

__version__ = "0.1.0"
