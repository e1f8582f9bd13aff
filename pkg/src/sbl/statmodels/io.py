"""CSV + JSON-sidecar serialization for distributions.

Table layout (LF line endings, period decimals)::

    n,log10_p[,extra columns...]
    0,-0.04575749056067514
    1,-1.0457574905606752
    ...

The sidecar sits next to the table with a ``.json`` suffix and records
``model_tag``, ``n_bar_param``, ``n_max``, ``realized_mean``, ``tail_mass``
and ``policy``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from ..errors import CorruptFileError
from .distribution import PhotonNumberDistribution


def format_float(x: float) -> str:
    """Shortest round-tripping text for a double; ``inf``/``-inf``/``nan`` spelled out."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def metadata(dist: PhotonNumberDistribution) -> dict:
    return {
        "model_tag": dist.model_tag,
        "n_bar_param": dist.n_bar_param,
        "n_max": dist.n_max,
        "realized_mean": dist.realized_mean,
        "tail_mass": format_float(dist.tail_mass),
        "policy": dist.policy,
    }


def pmf_table(dist: PhotonNumberDistribution, extra: dict | None = None) -> str:
    """Render the table as text. ``extra`` maps column name to log10 values per row."""
    extra = extra or {}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "log10_p", *extra])
    for n, w in enumerate(dist.weights):
        writer.writerow([n, format_float(w), *(format_float(col[n]) for col in extra.values())])
    return buf.getvalue()


def write_pmf(dist: PhotonNumberDistribution, path, extra: dict | None = None) -> Path:
    path = Path(path)
    path.write_text(pmf_table(dist, extra), encoding="ascii", newline="\n")
    sidecar_path(path).write_text(json.dumps(metadata(dist), indent=2) + "\n", encoding="ascii")
    return path


def read_pmf(path) -> PhotonNumberDistribution:
    """Read a table written by :func:`write_pmf`. The sidecar is optional."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="ascii") as fh:
            rows = list(csv.DictReader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise CorruptFileError(f"cannot read {path}: {exc}") from exc
    if not rows or "n" not in rows[0] or "log10_p" not in rows[0]:
        raise CorruptFileError(f"{path}: expected columns n,log10_p")
    try:
        ns = [int(r["n"]) for r in rows]
        w = np.array([float(r["log10_p"]) for r in rows])
    except ValueError as exc:
        raise CorruptFileError(f"{path}: {exc}") from exc
    if ns != list(range(len(ns))):
        raise CorruptFileError(f"{path}: rows must list n = 0, 1, 2, ... in order")

    meta = {"model_tag": "empirical", "n_bar_param": None, "tail_mass": "-inf", "policy": None}
    side = sidecar_path(path)
    if side.exists():
        meta.update(json.loads(side.read_text(encoding="ascii")))
    n_bar = meta["n_bar_param"]
    if n_bar is None:
        n_bar = float(np.dot(np.arange(w.size), np.power(10.0, w)))
    return PhotonNumberDistribution(
        meta["model_tag"], float(n_bar), w, float(meta["tail_mass"]), meta["policy"]
    )
