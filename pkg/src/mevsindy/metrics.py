"""Mean Chamfer distance between frequency-response curves."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DegenerateAxis, EmptySet, InputValidationError


def _points(p):
    p = np.ascontiguousarray(np.asarray(p, dtype=float))
    if p.ndim != 2 or p.shape[0] == 0:
        raise EmptySet("point set is empty")
    if not np.all(np.isfinite(p)):
        raise InputValidationError("point coordinates must be finite")
    return p


def chamfer(c, c_ref):
    """Directed Chamfer distance: mean over ``c`` of the distance to the nearest point of ``c_ref``."""
    c = _points(c)
    c_ref = _points(c_ref)
    if c.shape[1] != c_ref.shape[1]:
        raise InputValidationError("point sets must share their dimension")
    return float(kernels.chamfer_directed(c, c_ref))


def _minmax(ref_axis):
    lo, hi = float(np.min(ref_axis)), float(np.max(ref_axis))
    if not hi > lo:
        raise DegenerateAxis("reference axis has zero range")
    return lo, hi - lo


def _scaled(points, ref):
    out = np.empty_like(points)
    for j in range(points.shape[1]):
        lo, span = _minmax(ref[:, j])
        out[:, j] = (points[:, j] - lo) / span
    return out


def mcdrc_parts(frc, frc_ref):
    """``(d_amp, d_phase)``: directed distances after reference max-min scaling."""
    parts = []
    for get in ("amplitude_points", "phase_points"):
        p = _points(getattr(frc, get)())
        q = _points(getattr(frc_ref, get)())
        parts.append(chamfer(_scaled(p, q), _scaled(q, q)))
    return tuple(parts)


def mcdrc(frc, frc_ref):
    """Amplitude plus phase directed Chamfer distance of ``frc`` to ``frc_ref``.

    Every axis is max-min scaled with the reference curve's range; stability
    flags are ignored.
    """
    d_amp, d_phase = mcdrc_parts(frc, frc_ref)
    return d_amp + d_phase


def score_report(frc, frc_ref):
    d_amp, d_phase = mcdrc_parts(frc, frc_ref)
    return {"mcdrc": d_amp + d_phase, "d_amp": d_amp, "d_phase": d_phase}


def write_report(report, path):
    Path(path).write_text(json.dumps(report, indent=2) + "\n")
