"""Causal disparity auditing: decompose outcome gaps between sensitive groups
into direct, indirect and spurious parts, find sub-groups by individual direct
effect, and audit classifier performance inside them."""

__version__ = "0.1.0"
