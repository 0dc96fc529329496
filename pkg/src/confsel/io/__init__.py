"""Input/output: CSV ingestion and result emission."""

from .exporter import RunManifest, file_digest, write_csv, write_json
from .loader import DataLoader, load_calibration, load_selection, load_test

__all__ = [
    "RunManifest",
    "file_digest",
    "write_csv",
    "write_json",
    "DataLoader",
    "load_calibration",
    "load_selection",
    "load_test",
]
