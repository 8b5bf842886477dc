"""Run manifests: config snapshots, artifact checksums, provenance links.

Every pipeline stage writes ``<stage>.manifest.json`` next to its outputs.
An input entry records the artifact's checksum and, when a sibling
manifest lists that artifact as an output, the path of that manifest, so
any artifact can be traced back through the stages that produced it.
Artifacts themselves are deterministic functions of (inputs, config,
seed); manifests are the only files that carry timestamps.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

#: Embedded defaults for the flat key=value config file.
DEFAULT_CONFIG: dict[str, str] = {
    "seed": "0",
    "clean.min_words": "5",
    "clean.max_words": "200",
    "clean.english_threshold": "0.12",
    "base.learning_rate": "0.05",
    "base.epochs": "50",
    "base.batch_size": "64",
    "base.l2": "1e-4",
    "stack.base_fraction": "0.6",
    "stack.folds": "5",
    "stack.num_rounds": "100",
    "stack.learning_rate": "0.1",
    "stack.max_depth": "4",
    "stack.max_bins": "255",
    "stack.lambda": "1.0",
    "stack.min_gain": "1e-7",
    "stack.max_leaves": "15",
    "eval.threshold": "0.5",
}


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key=value`` lines; '#' starts a comment."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path: str | Path | None, seed_override: int | None = None) -> dict[str, str]:
    """Layer a config file (if any) over the embedded defaults."""
    config = dict(DEFAULT_CONFIG)
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        overrides = parse_config_text(text)
        unknown = set(overrides) - set(DEFAULT_CONFIG)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        config.update(overrides)
    if seed_override is not None:
        config["seed"] = str(seed_override)
    return config


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _provenance_manifest(artifact: Path) -> str | None:
    """Find a sibling stage manifest that lists the artifact as an output."""
    name = artifact.name
    for candidate in sorted(artifact.parent.glob("*.manifest.json")):
        try:
            obj = json.loads(candidate.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            continue
        outputs = obj.get("outputs", {})
        if any(Path(entry.get("path", "")).name == name for entry in outputs.values()):
            return str(candidate)
    return None


@dataclass
class RunManifest:
    stage: str
    seed: int
    config: dict[str, str]
    inputs: dict[str, dict] = field(default_factory=dict)
    outputs: dict[str, dict] = field(default_factory=dict)
    timestamp: str = ""

    def add_input(self, name: str, path: str | Path) -> None:
        path = Path(path)
        self.inputs[name] = {
            "path": str(path),
            "sha256": sha256_file(path),
            "manifest": _provenance_manifest(path),
        }

    def add_output(self, name: str, path: str | Path) -> None:
        path = Path(path)
        self.outputs[name] = {"path": str(path), "sha256": sha256_file(path)}

    def write(self, out_dir: str | Path) -> Path:
        self.timestamp = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        target = Path(out_dir) / f"{self.stage}.manifest.json"
        target.write_text(
            json.dumps(
                {
                    "stage": self.stage,
                    "timestamp": self.timestamp,
                    "seed": self.seed,
                    "config": self.config,
                    "inputs": self.inputs,
                    "outputs": self.outputs,
                },
                indent=2,
                sort_keys=True,
            )
            + "\n",
            encoding="utf-8",
        )
        return target
