"""Penalized logistic regression for stratified populations."""

__version__ = "0.1.0"
