"""Hurst index estimation for Rosenblatt and fractional Brownian paths by filtered quadratic variations."""

__version__ = "0.1.0"
