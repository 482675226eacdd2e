import os
import json
import tempfile
import logging
from typing import Any, Dict, Iterable, Iterator, Tuple

from utils.errors import ParseError

logger = logging.getLogger(__name__)


def sidecar_path(path: str, suffix: str) -> str:
    """Path of a sidecar file stored next to an artifact, e.g. data.jsonl.scheme.json"""
    return f"{path}.{suffix}.json"


def dump_json(obj: Any) -> str:
    """Canonical JSON text: sorted keys, compact separators"""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_json_atomic(path: str, obj: Any, indent: int = 2) -> None:
    """Write JSON to a temp file in the target directory, then rename over the target"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix=".tmp-", suffix=".json", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump(obj, f, indent=indent, sort_keys=True)
            f.write("\n")
        os.replace(tmp_path, path)
    except Exception:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def read_json(path: str) -> Any:
    """Read a JSON document, mapping decode failures to ParseError"""
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"Invalid JSON in {path}: {str(e)}", line=e.lineno)


def iter_jsonl(path: str) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """Yield (line number, object) for every non-blank line of a JSONL file"""
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}:{line_no}: invalid JSON: {str(e)}", line=line_no)
            if not isinstance(obj, dict):
                raise ParseError(f"{path}:{line_no}: expected a JSON object", line=line_no)
            yield line_no, obj


def write_jsonl(path: str, rows: Iterable[Dict[str, Any]]) -> int:
    """Write rows as JSONL; returns the number of lines written"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(dump_json(row))
            f.write("\n")
            count += 1
    logger.debug(f"Wrote {count} lines to {path}")
    return count
