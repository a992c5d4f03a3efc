"""svaforge: a desk-scale multi-agent formal verification pipeline."""

__version__ = "0.1.0"
