"""Mean curvature flow of surfaces in C^2 with Kahler-angle diagnostics."""

__version__ = "0.1.0"
