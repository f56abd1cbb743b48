"""querytax-adapter: input producers for the querytax core."""

__version__ = "0.1.0"
