"""
Salida de una simulación: un CSV por instantánea (x,s,h,cP,v), más
manifest.json e invariants.json en el mismo directorio.

Los números se escriben en la forma decimal más corta que se relee sin
pérdida; no hay marcas de tiempo dentro de los ficheros, así que dos
ejecuciones iguales producen los mismos bytes.
"""

import json
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

COLUMNS = ["x", "s", "h", "cP", "v"]


@dataclass
class Snapshot:
    time: float
    step: int
    x: np.ndarray
    s: np.ndarray
    h: np.ndarray
    c_p: np.ndarray
    v: np.ndarray
    # paso cuyo estado se guarda, si no es step (parada por equilibrio)
    state_step: Optional[int] = None

    def __post_init__(self):
        lengths = {len(self.x), len(self.s), len(self.h), len(self.c_p), len(self.v)}
        if len(lengths) != 1:
            raise ValueError("los vectores de la instantánea deben tener la misma longitud")

    @property
    def file_name(self):
        return f"snapshot_{self.step:06d}_t{float(self.time)!r}.csv"

    def to_frame(self):
        return pd.DataFrame(
            {
                "x": np.asarray(self.x, dtype=float),
                "s": np.asarray(self.s, dtype=float),
                "h": np.asarray(self.h, dtype=float),
                "cP": np.asarray(self.c_p, dtype=float),
                "v": np.asarray(self.v, dtype=float),
            },
            columns=COLUMNS,
        )

    @classmethod
    def from_frame(cls, frame, time, step):
        return cls(
            time=time,
            step=step,
            x=frame["x"].to_numpy(),
            s=frame["s"].to_numpy(),
            h=frame["h"].to_numpy(),
            c_p=frame["cP"].to_numpy(),
            v=frame["v"].to_numpy(),
        )


def _atomic_write(path, write):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            write(handle)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_frame_csv(frame, destination):
    _atomic_write(destination, lambda handle: frame.to_csv(handle, index=False, lineterminator="\n"))


def write_snapshot_csv(snapshot, destination):
    """Escribe la instantánea en destination (fichero) de forma atómica"""
    write_frame_csv(snapshot.to_frame(), destination)


def read_snapshot_csv(path):
    frame = pd.read_csv(path, float_precision="round_trip")
    if list(frame.columns) != COLUMNS:
        raise ValueError(f"cabecera inesperada en la instantánea: {list(frame.columns)}")
    return frame.astype(float)


def write_json(data, destination):
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    _atomic_write(destination, lambda handle: handle.write(text))


def write_run_outputs(out_dir, snapshots, run_report, config_text):
    """Instantáneas, manifiesto e informe de invariantes de una ejecución"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for snapshot in snapshots:
        write_snapshot_csv(snapshot, out_dir / snapshot.file_name)
        files.append(snapshot.file_name)

    manifest = run_report.to_dict()
    manifest["snapshots"] = [
        {
            "file": name,
            "step": snap.step,
            "time": snap.time,
            "state_step": snap.step if snap.state_step is None else snap.state_step,
        }
        for name, snap in zip(files, snapshots)
    ]
    manifest["config"] = config_text
    write_json(manifest, out_dir / "manifest.json")
    write_json(run_report.invariants.to_dict(), out_dir / "invariants.json")
    logger.info("%d instantáneas escritas en %s", len(files), out_dir)
    return files
