"""Trace-driven toolkit for DRAM+NVM memory-tiering characterization.

Maps sampled memory accesses onto mmap-backed objects, computes tier and
reuse metrics, simulates AutoNUMA-style page tiering, and evaluates static
object-level placement over the same traces.
"""

__version__ = "0.1.0"
TRACE_FORMAT_VERSION = "1"
