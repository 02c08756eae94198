"""oracleserve: serve total-log-probability queries for a causal language
model over a JSON-lines protocol (stdio or TCP), with strided scoring for
texts longer than the model's context window."""

__version__ = "0.1.0"
