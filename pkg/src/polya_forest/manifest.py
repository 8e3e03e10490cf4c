"""Run manifests written next to every output file."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__

SCHEMA = 1


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None = None
    tool_version: str = __version__
    schema: int = SCHEMA
    started: str = field(default_factory=now)
    finished: str | None = None
    stage_times: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)

    def add_output(self, path) -> None:
        self.outputs[Path(path).name] = sha256_file(path)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))

    def write(self, output_path) -> Path:
        """Finish the manifest and write it as ``<output>.manifest.json``."""
        self.finished = now()
        path = manifest_path(output_path)
        path.write_text(self.to_json(), encoding="utf-8")
        return path


def manifest_path(output_path) -> Path:
    p = Path(output_path)
    return p.with_name(p.name + ".manifest.json")


def read_manifest(output_path) -> RunManifest:
    return RunManifest.from_json(manifest_path(output_path).read_text(encoding="utf-8"))
