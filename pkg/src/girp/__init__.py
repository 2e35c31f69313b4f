"""girp: GPU-IR remoting between a lightweight client and an edge server.

Kernels, buffers, and dispatches travel as SPIR-V over a bit-exact binary
protocol; sessions migrate between servers as self-validating snapshots, and a
disconnected client falls back to a local reference interpreter.
"""

__version__ = "0.1.0"
