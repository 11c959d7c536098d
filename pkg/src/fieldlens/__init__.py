"""fieldlens: a scientific-visualization pipeline engine with
neural-network data-driven filters, a lid-driven cavity flow source,
and an interactive HTTP service."""

__version__ = "0.1.0"
