"""Run manifests: provenance for every output directory.

One manifest per output directory records the configuration hash, the
seed, the package version, timestamps, and the emitted files with their
digests.  Reruns with identical manifest inputs (config hash + seed)
reproduce byte-identical CSVs; the timestamp lives only here.
"""

from __future__ import annotations

import datetime
import hashlib
import json
import os

from . import __version__

MANIFEST_NAME = "manifest.json"


def config_hash(config_text: str) -> str:
    return hashlib.sha256(config_text.encode("utf-8")).hexdigest()


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir: str, config_text: str, seed: int,
                   outputs: list[str]) -> str:
    entry = {
        "config_hash": config_hash(config_text),
        "seed": int(seed),
        "version": __version__,
        "created_utc": datetime.datetime.now(datetime.timezone.utc)
                       .replace(microsecond=0).isoformat(),
        "outputs": [{"name": os.path.basename(p), "sha256": file_sha256(p)}
                    for p in outputs],
    }
    path = os.path.join(out_dir, MANIFEST_NAME)
    with open(path, "w") as fh:
        json.dump(entry, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_manifest(out_dir: str) -> dict:
    with open(os.path.join(out_dir, MANIFEST_NAME)) as fh:
        return json.load(fh)
