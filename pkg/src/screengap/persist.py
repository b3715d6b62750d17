"""Config hashing, atomic files, CSV round trips, schema checks and the result cache."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import shutil
import tempfile
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

import jsonschema

log = logging.getLogger(__name__)

CACHE_DIR = ".cache"
MANIFEST = "manifest.json"


def _normalize(obj):
    if isinstance(obj, dict):
        return {str(k): _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, int):
        return obj
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError(f"non-finite value {obj!r} in config")
        return obj
    # numpy scalars and friends
    if hasattr(obj, "item"):
        return _normalize(obj.item())
    raise TypeError(f"cannot canonicalize {type(obj).__name__}")


def canonical_json(obj) -> str:
    """Key-sorted, whitespace-free JSON; the text that gets hashed."""
    return json.dumps(_normalize(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def seed_from_hash(digest: str) -> int:
    return int(digest[:8], 16)


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _finite_or_none(obj):
    if isinstance(obj, dict):
        return {k: _finite_or_none(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite_or_none(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dump_json(obj) -> str:
    """Pretty, key-sorted JSON for result files; non-finite numbers become null."""
    return json.dumps(_normalize(_finite_or_none(obj)), indent=2, sort_keys=True, allow_nan=False) + "\n"


def fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format(v, ".17g")
    if hasattr(v, "item"):
        return fmt_value(v.item())
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_value(v) for v in row])
    return buf.getvalue()


def parse_value(text: str):
    """Inverse of :func:`fmt_value` for numbers; everything else stays a string."""
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return [{k: parse_value(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def load_schema(name: str) -> dict:
    ref = resources.files("screengap").joinpath("schemas", f"{name}.schema.json")
    return json.loads(ref.read_text())


def validate_json(obj, name: str) -> None:
    """Validate the document exactly as :func:`dump_json` would write it."""
    jsonschema.validate(json.loads(dump_json(obj)), load_schema(name))


class ResultCache:
    """Result files keyed by config hash under ``<out>/.cache/<hash>/``.

    A manifest records a checksum per file; any mismatch is treated as a miss.
    """

    def __init__(self, out_dir):
        self.root = Path(out_dir) / CACHE_DIR

    def entry(self, digest: str) -> Path:
        return self.root / digest

    def lookup(self, digest: str) -> Optional[dict]:
        """Mapping ``name -> bytes`` for a valid entry, ``None`` otherwise."""
        d = self.entry(digest)
        man = d / MANIFEST
        if not man.exists():
            return None
        try:
            manifest = json.loads(man.read_text())
            files = {}
            for name, digest_f in manifest["files"].items():
                p = d / name
                data = p.read_bytes()
                if hashlib.sha256(data).hexdigest() != digest_f:
                    raise ValueError(f"checksum mismatch for {name}")
                files[name] = data
            if manifest.get("config_hash") != digest:
                raise ValueError("manifest belongs to another config")
        except (OSError, ValueError, KeyError, TypeError) as exc:
            log.warning("cache entry %s is corrupted (%s); recomputing", digest[:12], exc)
            return None
        return files

    def store(self, digest: str, files: dict) -> None:
        """Write all files into a temp directory, then rename it into place."""
        self.root.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(dir=self.root, prefix=f".{digest[:12]}."))
        try:
            manifest = {"config_hash": digest, "files": {}}
            for name, data in sorted(files.items()):
                (tmp / name).write_bytes(data)
                manifest["files"][name] = hashlib.sha256(data).hexdigest()
            (tmp / MANIFEST).write_text(dump_json(manifest))
            final = self.entry(digest)
            if final.exists():
                shutil.rmtree(final)
            os.replace(tmp, final)
        except BaseException:
            shutil.rmtree(tmp, ignore_errors=True)
            raise
