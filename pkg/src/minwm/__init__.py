"""Desk-scale camera-controllable few-step autoregressive video world model."""

__version__ = "0.1.0"
