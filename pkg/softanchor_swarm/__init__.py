"""Soft-anchor coupling control stack for planar robot swarms."""
