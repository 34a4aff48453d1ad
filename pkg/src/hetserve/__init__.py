"""Cost-efficient LLM serving plans over heterogeneous cloud GPUs."""

__version__ = "0.1.0"
