"""Coverage-guided fuzzing with mutation-testing feedback over a small IR."""

__version__ = "0.1.0"
