"""plotkit: renders isacdt CSV/PGM experiment outputs as PNG figures."""

from .render import (FigureSpec, SchemaError, read_metrics_csv, read_pgm,
                     render)

__version__ = "0.1.0"

__all__ = ["FigureSpec", "SchemaError", "read_metrics_csv", "read_pgm",
           "render", "__version__"]
