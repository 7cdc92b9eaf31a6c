"""Run manifests: config snapshot, input/output hashes, timings, versions.

Every command emits one so any artifact can be traced to the exact inputs
and parameters that produced it, and reruns can be compared hash by hash.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field

SCHEMA_VERSION = 1


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def config_hash(config: dict) -> str:
    return sha256_text(json.dumps(config, sort_keys=True))


@dataclass
class RunManifest:
    command: str
    config: dict
    tool_version: str
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    def add_input(self, path):
        self.inputs[str(path)] = sha256_file(path)

    def add_output(self, path):
        self.outputs[str(path)] = sha256_file(path)

    def stage_done(self, name: str):
        now = time.perf_counter()
        self.timings[name] = round(now - self._t0, 4)
        self._t0 = now

    def write(self, path):
        payload = {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config": self.config,
            "config_hash": config_hash(self.config),
            "tool_version": self.tool_version,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "timings": self.timings,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
