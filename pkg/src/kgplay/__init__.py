"""Knowledge-graph grounded self-play: construction, sampling, rewards,
refinement, and evaluation over scientific-document IR."""

__version__ = "0.1.0"
