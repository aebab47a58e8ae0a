"""
Deterministic artifact writing.

Primary outputs (JSON results, CSV plot data, KITTI label files) depend only
on the command arguments, the run config and the seed. The creation timestamp
lives in ``manifest.json`` only.
"""
import csv
import hashlib
import json
import logging
import math
import platform
from importlib import metadata
from pathlib import Path

from django.utils import timezone

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

SIGNIFICANT_DIGITS = 10

VERSIONED_PACKAGES = ('Django', 'djangorestframework', 'numpy', 'scipy')


def round_floats(value, digits=SIGNIFICANT_DIGITS):
    """Copy of ``value`` with every float rounded to ``digits`` significant digits"""
    if isinstance(value, bool) or value is None:
        return value
    if getattr(value, 'ndim', 0) > 0:
        value = value.tolist()
    if isinstance(value, float) or hasattr(value, 'dtype') and value.dtype.kind == 'f':
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f'Cannot write non-finite value {value}')
        return float(f'{value:.{digits}g}')
    if hasattr(value, 'dtype') and value.dtype.kind in 'iu':
        return int(value)
    if hasattr(value, 'dtype') and value.dtype.kind == 'b':
        return bool(value)
    if isinstance(value, dict):
        return {str(key): round_floats(item, digits) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_floats(item, digits) for item in value]
    return value


def dumps(data):
    return json.dumps(round_floats(data), sort_keys=True, indent=2, allow_nan=False) + '\n'


def package_versions():
    versions = {'python': platform.python_version()}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


class ArtifactWriter:
    """
    Writes a command's outputs into one directory and keeps a digest of each
    file for the manifest. One writer per output directory.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.files = {}

    def _write(self, name, text):
        path = self.directory / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='\n') as handle:
            handle.write(text)
        self.files[name] = hashlib.sha256(text.encode('utf-8')).hexdigest()
        logger.debug(f'Wrote {path}')
        return path

    def json(self, name, data, versioned=True):
        if versioned:
            data = {'schema_version': SCHEMA_VERSION, **data}
        return self._write(name, dumps(data))

    def csv(self, name, header, rows):
        path = self.directory / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(header)
            for row in rows:
                writer.writerow([_csv_cell(cell) for cell in row])
        self.files[name] = hashlib.sha256(path.read_bytes()).hexdigest()
        return path

    def text(self, name, text):
        return self._write(name, text)

    def manifest(self, command, arguments, config_hash=None, seed=None):
        manifest = {
            'command': command,
            'arguments': arguments,
            'config_hash': config_hash,
            'seed': seed,
            'files': dict(sorted(self.files.items())),
            'versions': package_versions(),
            'created_at': timezone.now().isoformat(),
        }
        path = self.directory / 'manifest.json'
        path.write_text(json.dumps(manifest, sort_keys=True, indent=2, default=str) + '\n', encoding='utf-8')
        return path


def _csv_cell(cell):
    cell = round_floats(cell)
    if isinstance(cell, float):
        return repr(cell)
    return cell


def read_json(path):
    with open(path, encoding='utf-8') as handle:
        return json.load(handle)
