"""On-disk dataset layout: one directory per dataset.

A dataset directory holds ``manifest.json`` plus one CSV file per observation.
The manifest records the matrix shape, both group sizes, and the ordered file
lists; each CSV has exactly ``p`` rows of ``q`` comma-separated floats with no
header.  Floats are written with 17 significant digits so a write/read cycle
is lossless.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import DatasetFormatError
from .teststats import TwoSampleDataset

MANIFEST_NAME = "manifest.json"
SCHEMA_VERSION = 1
FLOAT_FMT = "%.17g"


def write_dataset(directory: str | os.PathLike, ds: TwoSampleDataset) -> str:
    """Write a dataset directory; returns the manifest path."""
    directory = os.fspath(directory)
    os.makedirs(directory, exist_ok=True)
    width = max(3, len(str(max(ds.n, ds.m))))
    treatment_files = [f"treatment_{i:0{width}d}.csv" for i in range(ds.n)]
    control_files = [f"control_{i:0{width}d}.csv" for i in range(ds.m)]
    for name, mat in zip(treatment_files, ds.treatment):
        _write_matrix(os.path.join(directory, name), mat)
    for name, mat in zip(control_files, ds.control):
        _write_matrix(os.path.join(directory, name), mat)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "p": ds.p,
        "q": ds.q,
        "n": ds.n,
        "m": ds.m,
        "treatment": treatment_files,
        "control": control_files,
    }
    path = os.path.join(directory, MANIFEST_NAME)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_matrix(path: str, mat: np.ndarray) -> None:
    np.savetxt(path, mat, fmt=FLOAT_FMT, delimiter=",", newline="\n")


def read_dataset(
    directory: str | os.PathLike, max_workers: int | None = None
) -> TwoSampleDataset:
    """Read a dataset directory back into memory.

    Raises
    ------
    DatasetFormatError
        On a missing or malformed manifest, a group-size mismatch, or the
        first member file (in manifest order) that fails to parse to a finite
        ``p x q`` matrix.  The exception's ``path`` names the offending file.
    """
    directory = os.fspath(directory)
    manifest_path = os.path.join(directory, MANIFEST_NAME)
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise DatasetFormatError(
            f"cannot read manifest: {exc}", path=manifest_path
        ) from exc
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(
            f"manifest is not valid JSON: {exc}", path=manifest_path
        ) from exc

    for key in ("p", "q", "n", "m", "treatment", "control"):
        if key not in manifest:
            raise DatasetFormatError(
                f"manifest is missing key {key!r}", path=manifest_path
            )
    try:
        p, q, n, m = (int(manifest[k]) for k in ("p", "q", "n", "m"))
    except (TypeError, ValueError) as exc:
        raise DatasetFormatError(
            f"manifest dimensions must be integers: {exc}", path=manifest_path
        ) from exc
    treatment_files = list(manifest["treatment"])
    control_files = list(manifest["control"])
    if len(treatment_files) != n or len(control_files) != m:
        raise DatasetFormatError(
            f"manifest group sizes (n={n}, m={m}) do not match file lists "
            f"({len(treatment_files)}, {len(control_files)})",
            path=manifest_path,
        )

    all_files = treatment_files + control_files
    paths = [os.path.join(directory, name) for name in all_files]

    def parse(path: str) -> "np.ndarray | DatasetFormatError":
        try:
            mat = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
        except OSError as exc:
            return DatasetFormatError(f"cannot read {path}: {exc}", path=path)
        except ValueError as exc:
            return DatasetFormatError(f"cannot parse {path}: {exc}", path=path)
        if mat.shape != (p, q):
            return DatasetFormatError(
                f"{path} has shape {mat.shape}, expected ({p}, {q})", path=path
            )
        if not np.all(np.isfinite(mat)):
            return DatasetFormatError(f"{path} contains non-finite entries", path=path)
        return mat

    workers = max_workers or min(8, os.cpu_count() or 1)
    if workers > 1 and len(paths) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parsed = list(pool.map(parse, paths))
    else:
        parsed = [parse(path) for path in paths]

    # Report the first failure in manifest order regardless of parse order.
    for item in parsed:
        if isinstance(item, DatasetFormatError):
            raise item

    try:
        return TwoSampleDataset(
            treatment=np.stack(parsed[:n]), control=np.stack(parsed[n:])
        )
    except ValueError as exc:
        raise DatasetFormatError(str(exc), path=manifest_path) from exc
