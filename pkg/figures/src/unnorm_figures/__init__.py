"""Render figures from the estimation harness's summary CSV files.

The harness and this package communicate through files only: the
`summary_mse.csv` and `summary_existence.csv` schemas documented in the
harness README are the entire interface.
"""

from .render import KINDS, FigureSpec, SchemaError, load_summary, render

__all__ = [
    "FigureSpec",
    "KINDS",
    "SchemaError",
    "load_summary",
    "render",
]

__version__ = "0.1.0"
