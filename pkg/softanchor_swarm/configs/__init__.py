"""Configs package for calibration constants and scenario schemas."""
