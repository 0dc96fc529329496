"""Integration tests for the confsel command line and guarantees."""
