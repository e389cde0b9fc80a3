"""Annotated dialog datasets from two-channel transcripts and Big-Five alignment prediction."""

__version__ = "0.1.0"
