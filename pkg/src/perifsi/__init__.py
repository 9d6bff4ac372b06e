"""Periodic fluid-plate interaction on a moving graph domain."""
