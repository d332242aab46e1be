"""
Run manifest.

Every CLI run writes ``manifest.json`` (machine-readable) and
``manifest.txt`` (human-readable) into its output directory.  The JSON
holds the resolved config, the seeds, the file format versions and the
checksums of every input and output, which is enough for ``replay`` to
re-execute the run.
"""

import json
import logging
import os
from datetime import datetime
from pathlib import Path
from typing import Any

from config import dump_config
from container import file_digest

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def write_json(path: str | os.PathLike, payload: Any) -> Path:
    """Indented, key-sorted JSON (the structured twin of every table we write)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


class RunManifest:
    """
    Accumulates what a run read and wrote and persists it on :meth:`save`.
    """

    def __init__(self, verb: str, argv: list[str], config: dict, output_dir: str | os.PathLike, workers: int = 1) -> None:
        self.verb = verb
        self.argv = list(argv)
        self.config = config
        self.output_dir = Path(output_dir)
        self.workers = workers
        self.inputs: dict[str, dict[str, str]] = {}
        self.outputs: dict[str, dict[str, str]] = {}
        self.details: dict[str, Any] = {}
        self.start_time = datetime.now()
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def add_input(self, name: str, path: str | os.PathLike) -> None:
        self.inputs[name] = {"path": str(path), "blake2b": file_digest(path)}

    def add_output(self, name: str, path: str | os.PathLike) -> None:
        self.outputs[name] = {"path": str(path), "blake2b": file_digest(path)}
        logger.info("Wrote %s → %s", name, path)

    def record(self, key: str, value: Any) -> None:
        """Attach seeds, format versions or a result summary."""
        self.details[key] = value

    def save(self) -> str:
        """Write JSON + TXT manifest files.  Returns the JSON file path."""
        end_time = datetime.now()
        duration = (end_time - self.start_time).total_seconds()
        json_path = self.output_dir / MANIFEST_NAME
        txt_path = self.output_dir / "manifest.txt"

        # ── JSON ────────────────────────────────────────────────────────
        payload = {
            "verb": self.verb,
            "argv": self.argv,
            "config": self.config,
            "workers": self.workers,
            "start_time": self.start_time.isoformat(),
            "end_time": end_time.isoformat(),
            "duration_seconds": round(duration, 3),
            "inputs": self.inputs,
            "outputs": self.outputs,
            "details": self.details,
        }
        write_json(json_path, payload)

        # ── Human-readable TXT ──────────────────────────────────────────
        with open(txt_path, "w") as f:
            f.write(f"Run manifest: {self.verb}\n")
            f.write(f"Date     : {self.start_time.strftime('%Y-%m-%d %H:%M:%S')}\n")
            f.write(f"Duration : {duration:.1f}s\n")
            f.write(f"Command  : {' '.join(self.argv)}\n")
            f.write(f"Workers  : {self.workers}\n")
            f.write("=" * 64 + "\n\n")
            f.write("Resolved config:\n")
            f.write(dump_config(self.config))
            for title, files in (("Inputs", self.inputs), ("Outputs", self.outputs)):
                f.write(f"\n{title}:\n")
                for name, entry in files.items():
                    f.write(f"  {name:<12} {entry['blake2b']}  {entry['path']}\n")
            if self.details:
                f.write("\nDetails:\n")
                for key, value in self.details.items():
                    f.write(f"  {key}: {json.dumps(value, sort_keys=True)}\n")

        logger.info("Manifest saved → %s (%d inputs, %d outputs, %.1fs)",
                    json_path, len(self.inputs), len(self.outputs), duration)
        return str(json_path)


def load_manifest(path: str | os.PathLike) -> dict[str, Any]:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    with open(path) as f:
        return json.load(f)
