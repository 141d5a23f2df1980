"""
CSV and JSON artifact writers.

All artifacts of a command go through one ``ArtifactWriter`` bound to
the output directory. JSON is written with sorted keys and CSV with
round-trip float formatting, so identical runs give identical bytes.
"""
import json
import logging
from pathlib import Path

from utils.errors import LabError
from utils.paths import CSV_FLOAT_FORMAT, path_to_frame

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"


def dumps_json(document):
    return json.dumps(document, sort_keys=True, indent=2) + "\n"


class ArtifactWriter:
    """Writes files below one output directory and records their names."""

    def __init__(self, root):
        self.root = Path(root).resolve()
        self.files = []

    def target(self, name):
        target = (self.root / name).resolve()
        if self.root != target and self.root not in target.parents:
            raise LabError(f"refusing to write {name} outside {self.root}")
        target.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(target.relative_to(self.root).as_posix())
        return target

    def write_json(self, name, document):
        self.target(name).write_text(dumps_json(document), encoding="utf-8")

    def write_frame(self, name, frame):
        frame.to_csv(self.target(name), index=False, float_format=CSV_FLOAT_FORMAT)

    def write_path(self, name, path):
        self.write_frame(name, path_to_frame(path))

    def write_report(self, stem, report):
        """Report as JSON plus a flat CSV table."""
        self.write_json(f"{stem}.json", report.model_dump(mode="json"))
        self.write_frame(f"{stem}.csv", report.to_frame())

    def write_manifest(self, command, spec, seeds, counts=None, extra=None):
        """Manifest listing the spec, seeds and every file written so far."""
        document = {
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "spec": spec.reproducible_fields(),
            "seeds": seeds,
            "counts": counts or {},
            "files": sorted(set(self.files)),
        }
        if extra:
            document.update(extra)
        self.write_json(MANIFEST_NAME, document)
        logger.info("wrote %d artifacts to %s", len(set(self.files)), self.root)
        return document


def export_queue_run(writer, run, prefix=""):
    """One ``t,value`` CSV per process of a queue replication."""
    for name in ("Q", "N", "X", "B", "I", "A"):
        writer.write_path(f"{prefix}{name}.csv", getattr(run, name))


def read_manifest(root):
    return json.loads((Path(root) / MANIFEST_NAME).read_text(encoding="utf-8"))
