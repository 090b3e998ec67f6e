"""File operations utilities."""

import csv
import hashlib
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from ..config.constants import VALID_CLOUD_EXTENSIONS
from ..core.errors import ConfigError


class FileManager:
    """Handles file I/O for clouds, objects, trajectories, checkpoints and result tables."""

    # --- Point clouds ---------------------------------------------------------

    @staticmethod
    def load_cloud(path: str) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        """
        Load a point cloud from a whitespace separated text file.

        Each line holds ``x y z`` and an optional integer view id. Lines with
        fewer than three values and '#' comments are skipped. When some lines
        carry a view id, lines without one get -1.

        Args:
            path: Path to a .txt, .xyz or .pts file

        Returns:
            Tuple of (N, 3) points in meters and (N,) view ids, or None when
            no line has a fourth column
        """
        if not os.path.exists(path):
            raise ConfigError(f"Point cloud file not found: {path}")
        if os.path.splitext(path)[1].lower() not in VALID_CLOUD_EXTENSIONS:
            raise ConfigError(f"Unsupported point cloud extension: {path}")
        rows, ids = [], []
        with open(path, 'r', encoding='utf-8') as f:
            for lineno, line in enumerate(f, start=1):
                parts = line.split('#', 1)[0].replace(',', ' ').split()
                if len(parts) < 3:
                    continue
                try:
                    rows.append([float(v) for v in parts[:3]])
                    view = float(parts[3]) if len(parts) > 3 else -1.0
                except ValueError:
                    raise ConfigError(f"{path}:{lineno}: non-numeric value in '{line.strip()}'")
                if not np.isfinite(view) or view != int(view):
                    raise ConfigError(f"{path}:{lineno}: view id must be an integer, got {parts[3]}")
                ids.append(int(view))
        points = np.array(rows, dtype=float).reshape(-1, 3)
        view_ids = np.array(ids, dtype=int)
        if not np.any(view_ids >= 0):
            return points, None
        return points, view_ids

    @staticmethod
    def save_cloud(path: str, points, view_ids=None) -> None:
        """Write ``x y z`` lines, with a fourth view-id column when view_ids is given."""
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        if view_ids is not None:
            view_ids = np.asarray(view_ids, dtype=int).reshape(-1)
            if len(view_ids) != len(points):
                raise ConfigError(f"{len(view_ids)} view ids for {len(points)} points")
        os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            for i, (x, y, z) in enumerate(points):
                if view_ids is None:
                    f.write(f"{x:.6f} {y:.6f} {z:.6f}\n")
                else:
                    f.write(f"{x:.6f} {y:.6f} {z:.6f} {view_ids[i]}\n")

    @staticmethod
    def get_file_list(folder_path: str, extensions: Sequence[str]) -> List[str]:
        """
        Get sorted list of files in folder with one of the extensions.

        Args:
            folder_path: Path to folder
            extensions: List of valid extensions

        Returns:
            Sorted list of filenames
        """
        if not os.path.exists(folder_path):
            return []

        return sorted([
            f for f in os.listdir(folder_path)
            if os.path.splitext(f)[1].lower() in extensions
        ])

    # --- YAML documents -------------------------------------------------------------

    @staticmethod
    def load_yaml(path: str) -> dict:
        if not os.path.exists(path):
            raise ConfigError(f"File not found: {path}")
        with open(path, 'r', encoding='utf-8') as f:
            try:
                data = yaml.safe_load(f)
            except yaml.YAMLError as exc:
                raise ConfigError(f"Malformed YAML in {path}: {exc}")
        if not isinstance(data, dict):
            raise ConfigError(f"{path} does not contain a mapping")
        return data

    @staticmethod
    def save_yaml(path: str, data: dict) -> None:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            yaml.safe_dump(data, f, allow_unicode=True, default_flow_style=False, sort_keys=False)

    @staticmethod
    def config_hash(data: dict) -> str:
        """Stable SHA-256 of a mapping, independent of key order."""
        text = yaml.safe_dump(data, default_flow_style=True, sort_keys=True)
        return hashlib.sha256(text.encode('utf-8')).hexdigest()

    # --- Arrays -------------------------------------------------------------------------

    @staticmethod
    def save_arrays(path: str, arrays: Dict[str, np.ndarray]) -> None:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        np.savez(path, **arrays)

    @staticmethod
    def load_arrays(path: str) -> Dict[str, np.ndarray]:
        if not os.path.exists(path):
            raise ConfigError(f"Array file not found: {path}")
        with np.load(path) as data:
            return {k: data[k] for k in data.files}

    # --- Checkpoints -----------------------------------------------------------------

    @staticmethod
    def save_checkpoint(path: str, arrays: Dict[str, np.ndarray], meta: Optional[Dict[str, str]] = None) -> None:
        """
        Write named arrays as one flat little-endian float64 file plus a text manifest.

        The manifest (path + '.manifest') starts with '# key value' metadata
        lines, followed by one 'name shape offset' line per array, where shape
        is comma separated and offset counts float64 entries.

        Args:
            path: Binary checkpoint path
            arrays: Named parameter arrays
            meta: Extra key/value pairs (model type, interaction, ...)
        """
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        offset = 0
        lines = [f"# {k} {v}" for k, v in (meta or {}).items()]
        with open(path, 'wb') as f:
            for name, arr in arrays.items():
                arr = np.atleast_1d(np.ascontiguousarray(arr, dtype='<f8'))
                shape = ','.join(str(s) for s in arr.shape)
                lines.append(f"{name} {shape} {offset}")
                f.write(arr.tobytes())
                offset += arr.size
        with open(path + '.manifest', 'w', encoding='utf-8') as f:
            f.write('\n'.join(lines) + '\n')

    @staticmethod
    def load_checkpoint(path: str) -> Tuple[Dict[str, np.ndarray], Dict[str, str]]:
        """
        Read a checkpoint written by save_checkpoint.

        Returns:
            Tuple (named arrays, metadata)
        """
        manifest = path + '.manifest'
        if not os.path.exists(path) or not os.path.exists(manifest):
            raise ConfigError(f"Checkpoint not found: {path}")
        flat = np.fromfile(path, dtype='<f8')
        arrays, meta = {}, {}
        with open(manifest, 'r', encoding='utf-8') as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                if line.startswith('#'):
                    key, _, value = line[1:].strip().partition(' ')
                    meta[key] = value
                    continue
                try:
                    name, shape, offset = line.split()
                    dims = tuple(int(s) for s in shape.split(',') if s)
                    offset = int(offset)
                except ValueError:
                    raise ConfigError(f"Malformed manifest line in {manifest}: '{line}'")
                size = int(np.prod(dims)) if dims else 1
                if offset + size > flat.size:
                    raise ConfigError(f"Checkpoint {path} is truncated at '{name}'")
                arrays[name] = flat[offset:offset + size].reshape(dims).copy()
        return arrays, meta

    # --- Tables ------------------------------------------------------------------------

    @staticmethod
    def write_csv(path: str, columns: Sequence[Tuple[str, str]], rows: Sequence[Sequence]) -> None:
        """
        Write a table whose header names every column with its unit, e.g. 'mass [kg]'.

        Args:
            path: Output path
            columns: (name, unit) pairs; use '-' for dimensionless columns
            rows: Row values, floats written with 6 significant digits
        """
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f)
            writer.writerow([f"{name} [{unit}]" for name, unit in columns])
            for row in rows:
                writer.writerow([f"{v:.6g}" if isinstance(v, (float, np.floating)) else v for v in row])

    @staticmethod
    def read_csv(path: str) -> Tuple[List[str], List[List[str]]]:
        with open(path, 'r', encoding='utf-8', newline='') as f:
            rows = list(csv.reader(f))
        return rows[0], rows[1:]
