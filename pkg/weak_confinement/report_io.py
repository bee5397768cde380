#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Writers for run artifacts: per-series CSV dumps, JSON documents and the run
manifest.

CSV numbers are written with ``repr`` so that identical runs give
byte-identical files.
"""

import csv
import hashlib
import json
import logging
import typing
from pathlib import Path

logger = logging.getLogger(__name__)


def _prepare(output_path) -> Path:
    output_path_obj = Path(output_path)
    output_path_obj.parent.mkdir(parents=True, exist_ok=True)
    return output_path_obj


def write_series_csv(series_list, output_path: str):
    """
    Write decay series to a CSV file.

    Parameters
    ----------
    series_list : iterable of DecaySeries
        Series to dump, one block of rows per series.
    output_path : str
        Path to the output CSV file.

    Output Format
    -------------
    CSV columns: time,value,series_name

    Examples
    --------
    >>> write_series_csv(trajectory.series.values(), "out/l2.csv")  # doctest: +SKIP
    """
    path = _prepare(output_path)
    with open(path, "w", newline="", encoding="utf-8") as csvfile:
        writer = csv.writer(csvfile)
        writer.writerow(["time", "value", "series_name"])
        for series in series_list:
            for t, value in zip(series.times, series.values):
                writer.writerow([repr(float(t)), repr(float(value)), series.label])
    logger.debug("wrote %s", path)


def write_rows_csv(header: typing.Sequence[str], rows, output_path: str):
    """Write a header and rows; floats are written with full precision."""
    path = _prepare(output_path)
    with open(path, "w", newline="", encoding="utf-8") as csvfile:
        writer = csv.writer(csvfile)
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([repr(float(x)) if isinstance(x, float) else x for x in row])
    logger.debug("wrote %s", path)


def read_rows_csv(input_path: str) -> typing.List[typing.Dict[str, str]]:
    with open(input_path, "r", newline="", encoding="utf-8") as csvfile:
        return list(csv.DictReader(csvfile))


def write_json(document, output_path: str):
    path = _prepare(output_path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")
    logger.debug("wrote %s", path)


def read_json(input_path: str):
    with open(input_path, "r", encoding="utf-8") as f:
        return json.load(f)


def _json_default(obj):
    # numpy scalars and arrays
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def config_hash(config_document: dict) -> str:
    """
    sha1 of the canonical JSON form of a configuration document.

    Examples
    --------
    >>> config_hash({"b": 1, "a": 2}) == config_hash({"a": 2, "b": 1})
    True
    """
    canonical = json.dumps(config_document, sort_keys=True, default=_json_default)
    return hashlib.sha1(canonical.encode("utf-8")).hexdigest()


def write_manifest(
    output_dir: str,
    config_document: dict,
    version: str,
    wall_time: float,
    extra: typing.Optional[dict] = None,
) -> Path:
    """Write ``manifest.json`` beside a run's artifacts and return its path."""
    manifest = {
        "config": config_document,
        "config_sha1": config_hash(config_document),
        "version": version,
        "wall_time_seconds": round(float(wall_time), 3),
    }
    if extra:
        manifest.update(extra)
    path = Path(output_dir) / "manifest.json"
    write_json(manifest, path)
    return path


if __name__ == "__main__":
    import pytest

    pytest.main(args=[".", "--doctest-modules", "-v"])
