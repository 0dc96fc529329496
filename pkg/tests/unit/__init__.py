"""Unit tests for confsel components."""
