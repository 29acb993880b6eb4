"""Coverage-guided assertion grouping, spec mapping and feedback for SVA generators."""

__version__ = "0.1.0"
