"""Recite-and-answer harness for closed-book question answering."""

__version__ = "0.1.0"
