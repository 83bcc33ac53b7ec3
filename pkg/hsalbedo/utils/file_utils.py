"""File helpers that keep written artifacts byte-deterministic."""

import hashlib
import json
from pathlib import Path
from typing import Any, Union


def write_json(path: Union[str, Path], data: Any) -> Path:
    """
    Write JSON with sorted keys, fixed indentation and a trailing newline.

    Args:
        path: Destination file
        data: JSON-serializable data

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(data, sort_keys=True, indent=2, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def read_json(path: Union[str, Path]) -> Any:
    """Read a UTF-8 JSON document."""
    return json.loads(Path(path).read_text(encoding="utf-8"))


def sha256_file(path: Union[str, Path]) -> str:
    """Hex SHA-256 digest of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
