"""Sampled trajectories, forcing metadata and their on-disk formats."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateInput, InputValidationError

MIN_SAMPLES = 64
FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class ForcingConfig:
    """Harmonic excitation ``beta * cos(omega_f * t)`` (scaled per channel by the model)."""

    beta: float
    omega_f: float
    shape: str = "cosine"

    def __post_init__(self):
        if not self.omega_f > 0:
            raise InputValidationError(f"omega_f must be > 0, got {self.omega_f}")
        if not self.beta >= 0:
            raise InputValidationError(f"beta must be >= 0, got {self.beta}")
        if self.shape != "cosine":
            raise InputValidationError(f"unsupported forcing shape {self.shape!r}")

    def to_dict(self):
        return {"beta": float(self.beta), "omega_f": float(self.omega_f), "shape": self.shape}

    @classmethod
    def from_dict(cls, d):
        return cls(beta=float(d["beta"]), omega_f=float(d["omega_f"]), shape=d.get("shape", "cosine"))


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled multi-channel trajectory.

    ``channels`` holds displacements with one row per time instant and one
    column per state dimension. ``velocity`` has the same layout when the
    source supplied it (simulations always do).
    """

    t0: float
    dt: float
    channels: np.ndarray
    velocity: np.ndarray | None = None
    forcing: ForcingConfig | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.channels, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        object.__setattr__(self, "channels", x)
        if not self.dt > 0:
            raise DegenerateInput(f"dt must be positive, got {self.dt}")
        if x.shape[0] < MIN_SAMPLES:
            raise DegenerateInput(f"need at least {MIN_SAMPLES} samples, got {x.shape[0]}")
        if not np.all(np.isfinite(x)):
            raise DegenerateInput("time series contains non-finite samples")
        if self.velocity is not None:
            v = np.asarray(self.velocity, dtype=float)
            if v.ndim == 1:
                v = v[:, None]
            if v.shape != x.shape:
                raise DegenerateInput(f"velocity shape {v.shape} != displacement shape {x.shape}")
            if not np.all(np.isfinite(v)):
                raise DegenerateInput("velocity contains non-finite samples")
            object.__setattr__(self, "velocity", v)

    @property
    def n_samples(self):
        return self.channels.shape[0]

    @property
    def n_channels(self):
        return self.channels.shape[1]

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.n_samples)

    def channel(self, i):
        if not 0 <= i < self.n_channels:
            raise InputValidationError(f"channel {i} out of range (have {self.n_channels})")
        return self.channels[:, i]

    def velocities(self):
        """Velocity samples, falling back to 2nd-order finite differences.

        Returns ``(v, measured)`` where ``measured`` is False if the velocity
        had to be reconstructed.
        """
        if self.velocity is not None:
            return self.velocity, True
        return np.gradient(self.channels, self.dt, axis=0, edge_order=2), False

    def window(self, start, stop):
        """Sub-series of samples ``start:stop``."""
        v = None if self.velocity is None else self.velocity[start:stop]
        return TimeSeries(self.t0 + start * self.dt, self.dt, self.channels[start:stop], v,
                          self.forcing, dict(self.meta))


def forcing_sidecar(path):
    path = Path(path)
    return path.with_name(path.stem + ".forcing.json")


def write_timeseries(ts: TimeSeries, path):
    """Write ``t,x1..xk[,v1..vk]`` CSV plus the forcing sidecar JSON if present."""
    path = Path(path)
    k = ts.n_channels
    header = ["t"] + [f"x{i + 1}" for i in range(k)]
    cols = [ts.times[:, None], ts.channels]
    if ts.velocity is not None:
        header += [f"v{i + 1}" for i in range(k)]
        cols.append(ts.velocity)
    data = np.hstack(cols)
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt=FLOAT_FMT)
    if ts.forcing is not None:
        forcing_sidecar(path).write_text(json.dumps(ts.forcing.to_dict(), indent=2) + "\n")
    return path


def read_timeseries(path, forcing_path=None) -> TimeSeries:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputValidationError(f"{path}: empty file") from None
    if not header or header[0] != "t":
        raise InputValidationError(f"{path}: header must start with 't'")
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    vcols = [i for i, h in enumerate(header) if h.startswith("v")]
    if not xcols:
        raise InputValidationError(f"{path}: no displacement columns")
    if vcols and len(vcols) != len(xcols):
        raise InputValidationError(f"{path}: velocity columns must match displacement columns")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] < 2:
        raise InputValidationError(f"{path}: not enough rows")
    t = data[:, 0]
    steps = np.diff(t)
    dt = float(np.mean(steps))
    if not np.allclose(steps, dt, rtol=1e-6, atol=1e-12 * max(1.0, abs(t[-1]))):
        raise InputValidationError(f"{path}: samples are not uniformly spaced")
    forcing = None
    fpath = Path(forcing_path) if forcing_path else forcing_sidecar(path)
    if fpath.exists():
        forcing = ForcingConfig.from_dict(json.loads(fpath.read_text()))
    vel = data[:, vcols] if vcols else None
    return TimeSeries(float(t[0]), dt, data[:, xcols], vel, forcing)
