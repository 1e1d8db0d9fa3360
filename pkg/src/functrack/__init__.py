"""functrack: function-granularity tracking detection from browser execution
traces, with automatic surrogate script generation."""

__version__ = "0.1.0"
