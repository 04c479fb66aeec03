"""edgebench: sweep phase-marked LLM workloads over a device/power/model
matrix, sample telemetry, derive latency/energy/memory metrics, and answer
constraint-based configuration queries."""

__version__ = "0.1.0"
