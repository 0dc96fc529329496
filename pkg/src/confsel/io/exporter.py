"""
Result emission: run manifests, CSV tables and JSON documents.

All files are UTF-8 with LF line endings. Floats are written in their
shortest round-trip form; JSON replaces non-finite numbers with null.
"""

from dataclasses import dataclass, field
import hashlib
import json
import logging
import math
from pathlib import Path
import sys
import time
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, TextIO, Union

import numpy as np
import pandas as pd

from ..core.exceptions import InputFormatError

logger = logging.getLogger(__name__)

Target = Union[str, Path, TextIO]

_DIGEST_CHUNK = 1 << 20


def file_digest(path: Union[str, Path]) -> str:
    """sha256 of a file's bytes as a hex string."""
    sha = hashlib.sha256()
    try:
        with open(path, "rb") as handle:
            for chunk in iter(lambda: handle.read(_DIGEST_CHUNK), b""):
                sha.update(chunk)
    except OSError as e:
        raise InputFormatError(f"Cannot read input file {path}: {e}", path=str(path)) from e
    return sha.hexdigest()


def to_jsonable(obj: Any) -> Any:
    """Recursively convert numpy values and non-finite floats for JSON."""
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


@dataclass
class RunManifest:
    """
    Provenance of one command invocation.

    Attributes:
        command: subcommand name
        config: echo of the effective configuration
        seed: master seed, if the command is random
        input_digests: sha256 per input path
        version: library version
        duration_seconds: wall-clock duration of the command
    """
    command: str
    config: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    input_digests: Dict[str, str] = field(default_factory=dict)
    version: str = ""
    duration_seconds: Optional[float] = None
    _started: float = field(default_factory=time.perf_counter, repr=False)

    @classmethod
    def start(
        cls,
        command: str,
        config: Optional[Dict[str, Any]] = None,
        seed: Optional[int] = None,
        inputs: Iterable[Union[str, Path]] = (),
    ) -> "RunManifest":
        """Begin a manifest, hashing every input file."""
        from .. import __version__

        digests = {str(p): file_digest(p) for p in inputs}
        return cls(command=command, config=dict(config or {}), seed=seed,
                   input_digests=digests, version=__version__)

    def finish(self) -> "RunManifest":
        """Record the elapsed time since ``start``."""
        self.duration_seconds = time.perf_counter() - self._started
        return self

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return {
            "command": self.command,
            "config": to_jsonable(self.config),
            "seed": self.seed,
            "input_digests": dict(self.input_digests),
            "version": self.version,
            "duration_seconds": self.duration_seconds,
        }

    def to_json(self, indent: Optional[int] = 2) -> str:
        """Convert to JSON string."""
        return dumps_json(self.to_dict(), indent=indent)


def dumps_json(payload: Any, indent: Optional[int] = 2) -> str:
    """Serialize with sorted keys and null for non-finite numbers."""
    return json.dumps(to_jsonable(payload), indent=indent, sort_keys=True, allow_nan=False)


def write_json(payload: Any, target: Optional[Target] = None) -> None:
    """Write a JSON document to a path, an open stream, or stdout."""
    text = dumps_json(payload) + "\n"
    if target is None:
        sys.stdout.write(text)
    elif isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        logger.info(f"Wrote {target}")
    else:
        target.write(text)


def write_csv(
    rows: Union[pd.DataFrame, Sequence[Mapping[str, Any]]],
    target: Optional[Target] = None,
    columns: Optional[List[str]] = None,
) -> None:
    """
    Write a table as CSV with a header row.

    Args:
        rows: DataFrame or sequence of row dictionaries
        target: path, open stream, or None for stdout
        columns: column order; also the header of an empty table
    """
    frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows), columns=columns)
    if columns is not None:
        frame = frame.reindex(columns=columns)
    if target is None:
        frame.to_csv(sys.stdout, index=False, lineterminator="\n")
    elif isinstance(target, (str, Path)):
        frame.to_csv(target, index=False, lineterminator="\n", encoding="utf-8")
        logger.info(f"Wrote {len(frame)} rows to {target}")
    else:
        frame.to_csv(target, index=False, lineterminator="\n")


def manifest_path(output: Union[str, Path]) -> Path:
    """Sidecar manifest location for an output file: ``<output>.manifest.json``."""
    output = Path(output)
    return output.with_name(output.name + ".manifest.json")
