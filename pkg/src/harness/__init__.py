"""Dataset, training, inference and evaluation runners."""
