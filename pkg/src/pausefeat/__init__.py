"""Pause-centred subsequence classification for guided feature engineering."""

__version__ = "0.1.0"
