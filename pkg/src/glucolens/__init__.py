"""Postprandial glucose response prediction from wearable and lifestyle data."""

__version__ = "0.1.0"
