"""Figure renderer for the CSV files the slicernn CLI exports."""

from .render import FigureJob, FormatError, RenderArgumentError, render

__version__ = "0.1.0"
