"""Service-chain placement on cloud nodes: utilization-first GA plus multi-agent bandwidth search."""

__version__ = "0.1.0"
