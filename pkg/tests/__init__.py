"""Tests for the collective behavior classifier."""
