"""Figure rendering for ldpmean sweep CSVs."""

from .render import NoDataError, PlotSpec, SchemaError, aggregate, load_frame, render

__version__ = "0.1.0"

__all__ = ["NoDataError", "PlotSpec", "SchemaError", "aggregate", "load_frame", "render", "__version__"]
