"""Recurrent attention classifier for pause-centred subsequences."""
