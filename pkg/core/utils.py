"""
Utility functions shared across sonicforge.
"""

import json
import zlib
from pathlib import Path
from typing import Any, Union

import numpy as np

from core.errors import FormatError


def derive_seed(seed: int, *keys: Union[int, str]) -> int:
    """Deterministic 63-bit child seed from a root seed and a path of keys."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for key in keys:
        if isinstance(key, str):
            entropy.append(zlib.crc32(key.encode("utf-8")))
        else:
            entropy.append(int(key) & 0xFFFFFFFFFFFFFFFF)
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0]
    return int(state) >> 1


def read_json(path: Path) -> Any:
    """Load a JSON file, reporting the line of any syntax error."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"JSON file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, path=str(path), line=exc.lineno) from exc


def _to_builtin(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def write_json(path: Path, data: Any) -> None:
    """Write JSON with stable key order and numpy support."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, default=_to_builtin)
        f.write("\n")


def group_id(index: int) -> str:
    """Stable identifier for the index-th generated group."""
    return f"group_{index:05d}"
