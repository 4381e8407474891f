"""evoqa: evolutionary QA dataset generation with LLM-judge fitness scoring."""

__version__ = "0.1.0"
