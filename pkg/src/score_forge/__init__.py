"""Compile a declarative commonsense knowledge base into verified multi-hop questions."""

__version__ = "0.1.0"
