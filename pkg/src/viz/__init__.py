"""viz: a desk-scale marketplace for NF4-quantized low-rank adapters."""

__version__ = "0.1.0"
