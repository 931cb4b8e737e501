"""Goal-driven next-data-command recommendations from analytics command logs."""

__version__ = "0.1.0"
