"""Static figures from batchbins campaign CSVs."""

from .render import EmptyGroup, FigureSpec, MissingColumn, aggregate, read_rows, render

__version__ = "0.1.0"
