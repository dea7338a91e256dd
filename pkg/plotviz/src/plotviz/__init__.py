"""Figure rendering for long-horizon bandit experiment outputs."""

__version__ = "0.1.0"

from .render import PlotSpec, PlotSpecError, build_figure, render

__all__ = ["PlotSpec", "PlotSpecError", "build_figure", "render",
           "__version__"]
