"""Reports, trajectory checkpoints and run manifests.

CSV floats are written with 17 significant digits so every value round-trips
exactly.  Every output carries the ``manifest_hash`` of the run that wrote it;
timestamps and wall times live only in the manifest itself.
"""

from __future__ import annotations

import csv
import io
import json
import math
import zipfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .basis import PARITY_NAMES, StokesBasis, TorusSpec, build_basis
from .errors import IoError
from .trajectory import Trajectory

REPORT_COLUMNS = ("estimator", "alpha", "N", "replicate", "value")
BASIS_COLUMNS = ("index", "n1", "n2", "parity", "lambda")
LINEAR_COLUMNS = ("mode", "empirical_mean", "analytic_mean", "z_score")

_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def fmt(x: Any) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _open_for_write(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from None


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence[Any]],
              header: Optional[dict] = None) -> None:
    path = Path(path)
    with _open_for_write(path) as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def read_csv(path) -> tuple[dict, list[str], list[list[str]]]:
    """Header comments, column names and raw string rows."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from None
    header = {}
    body = []
    for line in lines:
        if line.startswith("# "):
            k, _, v = line[2:].partition("=")
            header[k] = v
        else:
            body.append(line)
    rows = list(csv.reader(body))
    return header, rows[0], rows[1:]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, payload: dict) -> None:
    path = Path(path)
    with _open_for_write(path) as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from None


def write_report(report, path, format: str = "json", manifest_hash: str = "") -> None:
    """Write an :class:`~stochnse.experiments.McReport` as JSON or flat CSV."""
    if format == "json":
        payload = report.to_dict()
        payload.pop("wall_time", None)
        payload["manifest_hash"] = manifest_hash
        write_json(path, payload)
    elif format == "csv":
        write_csv(path, REPORT_COLUMNS, report.rows(),
                  {"manifest_hash": manifest_hash, "study": report.study})
    else:
        raise ValueError(f"unknown report format {format!r}")


def read_report_rows(path) -> list[tuple[str, float, int, int, float]]:
    header, cols, rows = read_csv(path)
    if tuple(cols) != REPORT_COLUMNS:
        raise IoError(f"{path}: unexpected columns {cols}")
    return [(r[0], float(r[1]), int(r[2]), int(r[3]), float(r[4])) for r in rows]


def write_basis(basis: StokesBasis, path, manifest_hash: str = "") -> None:
    rows = ((k + 1, int(n[0]), int(n[1]), PARITY_NAMES[p], lam)
            for k, (n, p, lam) in enumerate(zip(basis.wavevectors, basis.parity, basis.eigenvalues)))
    write_csv(path, BASIS_COLUMNS, rows,
              {"manifest_hash": manifest_hash, "basis_hash": basis.digest(), "L": fmt(basis.torus.L)})


def write_trajectory(traj: Trajectory, path, manifest_hash: str = "") -> None:
    """Checkpoint a trajectory as ``.npz`` (full record) or ``.csv`` (states only)."""
    path = Path(path)
    meta = {"manifest_hash": manifest_hash, "config_hash": traj.config.get("config_hash", ""),
            "basis_hash": traj.basis.digest(), "L": traj.basis.torus.L, "gamma": traj.gamma,
            "replicate": traj.replicate, "modes": traj.mode_count, "config": traj.config}
    if path.suffix == ".csv":
        m = traj.mode_count
        header = {k: fmt(v) for k, v in meta.items() if k != "config"}
        header["config"] = json.dumps(_jsonable(traj.config), sort_keys=True)
        rows = (np.concatenate([[t], s]) for t, s in zip(traj.times, traj.states))
        write_csv(path, ["time"] + [f"u_{k}" for k in range(1, m + 1)], rows, header)
        return
    arrays = {"times": traj.times, "states": traj.states}
    if traj.increments is not None:
        arrays["increments"] = traj.increments
    if traj.linear_states is not None:
        arrays["linear_states"] = traj.linear_states
    arrays["meta"] = np.frombuffer(json.dumps(_jsonable(meta), sort_keys=True).encode(), dtype=np.uint8)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
            for name, arr in arrays.items():
                buf = io.BytesIO()
                np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
                # fixed timestamp keeps checkpoints byte-identical across runs
                zf.writestr(zipfile.ZipInfo(f"{name}.npy", _ZIP_EPOCH), buf.getvalue())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from None


def _basis_from_meta(meta: dict) -> StokesBasis:
    return build_basis(TorusSpec(float(meta["L"])), int(meta["modes"]))


def read_trajectory(path) -> Trajectory:
    path = Path(path)
    if path.suffix == ".csv":
        header, cols, rows = read_csv(path)
        data = np.array(rows, dtype=float)
        meta = dict(header)
        meta["modes"] = len(cols) - 1
        config = json.loads(header.get("config", "{}"))
        basis = _basis_from_meta(meta)
        _check_basis(path, basis, meta)
        return Trajectory(data[:, 0], data[:, 1:], basis, float(meta["gamma"]),
                          int(meta.get("replicate", 0)), None, None, config)
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(bytes(z["meta"]).decode())
            arrays = {k: z[k] for k in z.files if k != "meta"}
    except (OSError, ValueError, KeyError) as exc:
        raise IoError(f"cannot read trajectory {path}: {exc}") from None
    basis = _basis_from_meta(meta)
    _check_basis(path, basis, meta)
    return Trajectory(arrays["times"], arrays["states"], basis, float(meta["gamma"]),
                      int(meta["replicate"]), arrays.get("increments"), arrays.get("linear_states"),
                      meta.get("config", {}))


def _check_basis(path, basis: StokesBasis, meta: dict):
    expected = meta.get("basis_hash")
    if expected and expected != basis.digest():
        raise IoError(f"{path}: basis hash {expected} does not match rebuilt basis {basis.digest()}")


def manifest(config_hash: str, master_seed: int, command: str, outputs: Sequence[str],
             resolved: Optional[dict] = None, started: Optional[datetime] = None,
             extra: Optional[dict] = None) -> dict:
    now = datetime.now(timezone.utc)
    m = {"manifest_hash": config_hash, "config_hash": config_hash, "code_version": __version__,
         "master_seed": master_seed, "command": command, "outputs": list(outputs),
         "started": (started or now).isoformat(), "finished": now.isoformat()}
    if resolved is not None:
        m["config"] = resolved
    if extra:
        m.update(extra)
    return m
