"""Reproducibility records attached to every JSON output."""

import os
import json
import hashlib
from typing import Dict, Iterable, Optional

SCHEMA_VERSION = 1
TOOL_NAME = 'dig2size'
TOOL_VERSION = '1.0.0'


def canonical_json(obj) -> str:
    """Key-sorted, whitespace-free JSON used for hashing."""
    return json.dumps(obj, sort_keys=True, separators=(',', ':'))


def config_digest(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode('utf-8')).hexdigest()


def file_digest(path: str) -> str:
    """SHA-256 of a file's bytes."""
    sha = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 16), b''):
            sha.update(block)
    return sha.hexdigest()


def input_digests(paths: Iterable[str], root: Optional[str] = None) -> Dict[str, str]:
    """Digest per input file, keyed by path relative to ``root`` when given.

    Relative keys keep reports identical when the same inputs live elsewhere.
    """
    digests = {}
    for path in sorted(paths):
        key = os.path.relpath(path, root) if root else os.path.basename(path)
        digests[key.replace(os.sep, '/')] = file_digest(path)
    return digests


def build_provenance(config: dict, defaults: dict, overrides: dict,
                     inputs: Optional[Dict[str, str]] = None) -> dict:
    """Assemble the provenance block.

    Args:
        config: Effective configuration (as a plain dictionary).
        defaults: Built-in defaults.
        overrides: Dotted keys whose values differ from the defaults.
        inputs: Input digests.

    Returns:
        Dictionary without timestamps, so reruns serialize identically.
    """
    return {
        'tool': TOOL_NAME,
        'version': TOOL_VERSION,
        'config_sha256': config_digest(config),
        'defaults': defaults,
        'overrides': overrides,
        'inputs': dict(sorted((inputs or {}).items())),
    }


def write_json(obj: dict, path: str) -> str:
    """Write JSON with sorted keys and a trailing newline."""
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write('\n')
    return path
