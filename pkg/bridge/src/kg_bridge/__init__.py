"""HTTP model bridge: serves /v1/generate, /v1/embed, and
/v1/classify-relation, and validates preference exports for a downstream
trainer."""

__version__ = "0.1.0"
