"""Proper orthogonal decomposition of snapshot matrices.

Snapshots are stored with rows as time instants and columns as degrees of
freedom, ``X`` of shape ``(p, k)``. The modes are the leading right singular
vectors of ``X`` (the left singular vectors of the ``k x p`` transpose), and
the modal coordinates are ``Lambda = X @ modes``, i.e. ``sigma_i`` times the
corresponding left singular vector. Data are not mean-centred.
"""

from __future__ import annotations

import struct
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, InputValidationError, RankTooLarge
from .series import TimeSeries

_HEADER = struct.Struct("<QQ")


@dataclass
class SnapshotMatrix:
    data: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=float))
        if self.data.shape[0] < 2:
            raise InputValidationError("need at least two snapshots")
        if not np.all(np.isfinite(self.data)):
            raise InputValidationError("snapshot entries must be finite")
        if not self.dt > 0:
            raise InputValidationError("dt must be positive")

    @property
    def shape(self):
        return self.data.shape


@dataclass
class PodBasis:
    modes: np.ndarray
    singular_values: np.ndarray
    k_hat: int
    all_singular_values: np.ndarray | None = None

    def truncation_error(self):
        """Frobenius norm of the discarded part, ``sqrt(sum_{i>k_hat} sigma_i^2)``."""
        s = self.all_singular_values if self.all_singular_values is not None else self.singular_values
        return float(np.sqrt(np.sum(s[self.k_hat:] ** 2)))

    def save(self, path):
        """``.npz`` archive with fixed entry timestamps (byte-reproducible)."""
        arrays = {"modes": self.modes, "singular_values": self.singular_values,
                  "all_singular_values": self.all_singular_values
                  if self.all_singular_values is not None else self.singular_values}
        with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
            for name, arr in arrays.items():
                info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
                with zf.open(info, "w", force_zip64=True) as fh:
                    np.lib.format.write_array(fh, np.asarray(arr), allow_pickle=False)

    @classmethod
    def load(cls, path):
        z = np.load(path)
        return cls(z["modes"], z["singular_values"], z["modes"].shape[1], z["all_singular_values"])


def reduce(x: SnapshotMatrix, k_hat):
    """Rank-``k_hat`` POD basis and modal coordinates as a ``TimeSeries``."""
    p, k = x.shape
    if not 1 <= k_hat <= min(p, k):
        raise RankTooLarge(f"k_hat={k_hat} outside [1, {min(p, k)}]")
    _, s, vt = np.linalg.svd(x.data, full_matrices=False)
    modes = vt[:k_hat].T.copy()
    # deterministic signs: largest-magnitude entry of every mode positive
    idx = np.argmax(np.abs(modes), axis=0)
    signs = np.sign(modes[idx, np.arange(k_hat)])
    signs[signs == 0] = 1.0
    modes *= signs
    coords = x.data @ modes
    basis = PodBasis(modes, s[:k_hat].copy(), int(k_hat), s.copy())
    return basis, TimeSeries(x.t0, x.dt, coords)


def lift(basis: PodBasis, reduced):
    """Snapshot reconstruction ``Lambda @ modes^T``."""
    coords = reduced.channels if isinstance(reduced, TimeSeries) else np.atleast_2d(reduced)
    if coords.shape[1] != basis.k_hat:
        raise DimensionMismatch(f"reduced data has {coords.shape[1]} channels, basis has {basis.k_hat}")
    dt = reduced.dt if isinstance(reduced, TimeSeries) else 1.0
    t0 = reduced.t0 if isinstance(reduced, TimeSeries) else 0.0
    return SnapshotMatrix(coords @ basis.modes.T, dt, t0)


def read_snapshots(path):
    """CSV with header ``t,d1,...,dk`` or the little-endian binary layout.

    The binary layout is ``[u64 p][u64 k][f64 x p*k row-major]``; it carries
    no time column, so ``dt`` defaults to 1.
    """
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix.lower() in (".bin", ".dat", ".raw"):
        if len(raw) < _HEADER.size:
            raise InputValidationError(f"{path}: truncated header")
        p, k = _HEADER.unpack_from(raw)
        body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
        if body.size != p * k:
            raise InputValidationError(f"{path}: expected {p * k} values, found {body.size}")
        return SnapshotMatrix(body.reshape(p, k).astype(float), 1.0)
    lines = raw.decode().strip().splitlines()
    if not lines:
        raise InputValidationError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    if header[0] != "t" or len(header) < 2:
        raise InputValidationError(f"{path}: expected header t,d1,...,dk")
    data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    if data.shape[0] < 2:
        raise InputValidationError(f"{path}: need at least two snapshots")
    t = data[:, 0]
    dt = float(np.mean(np.diff(t)))
    return SnapshotMatrix(data[:, 1:], dt, float(t[0]))


def write_snapshots(x: SnapshotMatrix, path):
    path = Path(path)
    if path.suffix.lower() in (".bin", ".dat", ".raw"):
        p, k = x.shape
        path.write_bytes(_HEADER.pack(p, k) + np.ascontiguousarray(x.data, dtype="<f8").tobytes())
        return
    t = x.t0 + x.dt * np.arange(x.shape[0])
    header = "t," + ",".join(f"d{j + 1}" for j in range(x.shape[1]))
    np.savetxt(path, np.column_stack([t, x.data]), delimiter=",", header=header, comments="",
               fmt="%.17g")
