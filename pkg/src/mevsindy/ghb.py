"""Evolutionary regression problems from harmonic envelopes.

For each retained harmonic index ``m`` (``0``, ``(n, cos)``, ``(n, sin)``)
the envelope dynamics give a target series ``y_m(t)`` and every candidate
function ``theta_j`` contributes a column ``Theta_m[:, j]``, its weighted
average over a sliding fundamental period with a leading minus sign. A
single coefficient vector must satisfy all harmonic rows at once.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels
from .errors import (IncompatibleProblems, InputValidationError, MissingLinearTerm,
                     MissingVelocityWarning, TooShort, WindowOutOfRange)
from .series import ForcingConfig, TimeSeries
from .signal import HarmonicDecomposition, half_period_samples, period_average
from .terms import Term


@dataclass(frozen=True)
class CandidateLibrary:
    terms: tuple
    spec: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(set(self.terms)) != len(self.terms):
            raise InputValidationError("library terms must be unique")

    def __len__(self):
        return len(self.terms)

    @property
    def names(self):
        return [t.name for t in self.terms]

    def index_of_linear(self, channel):
        for j, t in enumerate(self.terms):
            if t.is_linear_x(channel):
                return j
        return None

    @classmethod
    def build(cls, k, channel, max_degree=5, cross_channel_degree=3, include_forcing=True,
              include_cross_xv=False):
        """Polynomial library for the equation of ``channel`` in a ``k``-channel system.

        Pure powers of the channel's own displacement and velocity up to
        ``max_degree``; pure powers of every other channel up to
        ``cross_channel_degree``; optional mixed ``x^a v^b`` own-channel
        products and the forcing pair.
        """
        terms = []
        for p in range(1, max_degree + 1):
            terms.append(Term.monomial(k, x={channel: p}))
        for p in range(1, max_degree + 1):
            terms.append(Term.monomial(k, v={channel: p}))
        if include_cross_xv:
            for a in range(1, max_degree):
                for b in range(1, max_degree - a + 1):
                    terms.append(Term.monomial(k, x={channel: a}, v={channel: b}))
        for j in range(k):
            if j == channel:
                continue
            for p in range(1, cross_channel_degree + 1):
                terms.append(Term.monomial(k, x={j: p}))
            for p in range(1, cross_channel_degree + 1):
                terms.append(Term.monomial(k, v={j: p}))
        if include_forcing:
            terms += [Term.forcing_cos(), Term.forcing_sin()]
        spec = {"max_degree": max_degree, "cross_channel_degree": cross_channel_degree,
                "include_forcing": include_forcing, "include_cross_xv": include_cross_xv}
        return cls(tuple(terms), spec)

    @classmethod
    def from_spec(cls, k, channel, spec):
        spec = dict(spec or {})
        return cls.build(k, channel,
                         max_degree=int(spec.get("max_degree", 5)),
                         cross_channel_degree=int(spec.get("cross_channel_degree", 3)),
                         include_forcing=bool(spec.get("include_forcing", True)),
                         include_cross_xv=bool(spec.get("include_cross_xv", False)))

    @classmethod
    def load_spec(cls, path):
        return json.loads(Path(path).read_text())


def harmonic_index_set(orders):
    """Row labels in the fixed order 0, (1,cos), (1,sin), (2,cos), (2,sin), ..."""
    out = []
    for n in sorted(orders):
        if n == 0:
            out.append((0, "a"))
        else:
            out += [(n, "cos"), (n, "sin")]
    return out


@dataclass
class EvolutionaryRegressionProblem:
    """Stacked targets ``(M, T)`` and library matrices ``(M, T, p)``.

    ``segments`` lists the row counts of the member datasets when problems
    have been merged; quadratures never run across a segment boundary.
    """

    omega_hat: float
    harmonic_index_set: list
    targets: np.ndarray
    library: np.ndarray
    grid: np.ndarray
    channel: int
    terms: tuple
    dt: float
    segments: tuple = ()
    velocity_measured: bool = True
    beta: float = 1.0
    sources: tuple = ()

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=float)
        self.library = np.asarray(self.library, dtype=float)
        if not self.segments:
            self.segments = (self.targets.shape[1],)
        if self.library.shape[:2] != self.targets.shape:
            raise InputValidationError("targets and library matrices must share the grid")
        if self.library.shape[2] != len(self.terms):
            raise InputValidationError("library width does not match the term list")

    @property
    def n_terms(self):
        return len(self.terms)

    @property
    def names(self):
        return [t.name for t in self.terms]

    def stacked(self):
        """``(Theta, y)`` with all harmonic rows concatenated."""
        return self.library.reshape(-1, self.n_terms), self.targets.reshape(-1)

    def linear_index(self):
        for j, t in enumerate(self.terms):
            if t.is_linear_x(self.channel):
                return j
        return None

    def save(self, path):
        """Binary ``.npz`` bundle for offline regression."""
        np.savez(path, omega_hat=self.omega_hat, targets=self.targets, library=self.library,
                 grid=self.grid, channel=self.channel, dt=self.dt, beta=self.beta,
                 segments=np.asarray(self.segments),
                 index_set=json.dumps([list(m) for m in self.harmonic_index_set]),
                 terms=json.dumps([t.name for t in self.terms]),
                 n_channels=len(self.terms[0].x_exps) if any(t.kind == "mono" for t in self.terms) else 1,
                 velocity_measured=self.velocity_measured)

    @classmethod
    def load(cls, path):
        z = np.load(path)
        k = int(z["n_channels"])
        terms = tuple(Term.parse(k, n) for n in json.loads(str(z["terms"])))
        idx = [tuple(m) for m in json.loads(str(z["index_set"]))]
        return cls(float(z["omega_hat"]), idx, z["targets"], z["library"], z["grid"],
                   int(z["channel"]), terms, float(z["dt"]), tuple(int(s) for s in z["segments"]),
                   bool(z["velocity_measured"]), float(z["beta"]))


def periodic_average(samples, t_grid, omega_hat, weight="unit", n=1, at=None):
    """Sliding one-period trapezoid average of ``samples * weight(n w s)``.

    The window spans exactly one fundamental period, with interpolated end
    pieces for the fractional sample; the result is scaled by ``w/(2 pi)``
    for ``unit`` and ``w/pi`` for ``cos``/``sin``. Returns a full-length
    array, NaN where the window does not fit; ``at`` selects indices and
    raises :class:`WindowOutOfRange` if any of them is too close to an edge.
    """
    samples = np.asarray(samples, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    dt = t_grid[1] - t_grid[0]
    h = half_period_samples(omega_hat, dt)
    if weight == "unit":
        g, scale = samples, 1.0
    elif weight == "cos":
        g, scale = samples * np.cos(n * omega_hat * t_grid), 2.0
    elif weight == "sin":
        g, scale = samples * np.sin(n * omega_hat * t_grid), 2.0
    else:
        raise ValueError(f"unknown weight {weight!r}")
    out = scale * period_average(g, omega_hat, dt)
    if at is not None:
        at = np.asarray(at)
        if at.size and (at.min() < h or at.max() >= len(samples) - h):
            raise WindowOutOfRange("averaging window leaves the sample range")
        return out[at]
    return out


def _centered_derivatives(f, dt):
    d1 = (f[2:] - f[:-2]) / (2 * dt)
    d2 = (f[2:] - 2 * f[1:-1] + f[:-2]) / dt ** 2
    return d1, d2


def target_grid(d: HarmonicDecomposition):
    """Sample indices used for regression (valid range minus derivative trim)."""
    lo, hi = d.valid_range
    return np.arange(lo + 1, hi - 1)


def assemble_targets(d: HarmonicDecomposition):
    """Envelope-side rows ``y_m`` on :func:`target_grid`, shape ``(M, T)``."""
    lo, hi = d.valid_range
    if hi - lo < 3:
        raise TooShort("valid range too short for derivatives")
    w = d.omega_hat
    dt = d.dt
    rows = []
    for n, kind in harmonic_index_set(d.orders):
        if n == 0:
            a = d.envelopes[0].amplitude[lo:hi]
            _, a2 = _centered_derivatives(a, dt)
            rows.append(a2 + w ** 2 * a[1:-1])
            continue
        env = d.envelopes[n]
        b = env.b[lo:hi]
        c = env.c[lo:hi]
        b1, b2 = _centered_derivatives(b, dt)
        c1, c2 = _centered_derivatives(c, dt)
        k = (n * n - 1) * w ** 2
        if kind == "cos":
            rows.append(b2 + 2 * n * w * c1 - k * b[1:-1])
        else:
            rows.append(c2 - 2 * n * w * b1 - k * c[1:-1])
    return np.array(rows)


def assemble_library(ts: TimeSeries, library: CandidateLibrary, omega_hat, orders,
                     forcing: ForcingConfig | None, grid_idx):
    """Averaged library matrices ``Theta_m`` of shape ``(M, T, p)`` at ``grid_idx``.

    Forcing columns are evaluated as ``beta * cos(W t)`` (``sin``), so their
    coefficients are per unit load multiplier.

    Returns ``(matrices, velocity_measured)``.
    """
    x = ts.channels
    needs_v = any(t.uses_velocity() for t in library.terms)
    v, measured = ts.velocities()
    if needs_v and not measured:
        warnings.warn("no velocity channels; using centred differences of displacement",
                      MissingVelocityWarning, stacklevel=2)
    t = ts.times
    omega_f = forcing.omega_f if forcing is not None else 0.0
    if any(term.is_forcing for term in library.terms) and forcing is None:
        raise InputValidationError("library has forcing terms but the series has no forcing metadata")
    index = harmonic_index_set(orders)
    out = np.empty((len(index), len(grid_idx), len(library)))
    for j, term in enumerate(library.terms):
        theta = term.evaluate(x, v, t, omega_f)
        if term.is_forcing:
            # per unit load: datasets at different beta share one coefficient
            theta = theta * forcing.beta
        for m, (n, kind) in enumerate(index):
            weight = "unit" if n == 0 else kind
            out[m, :, j] = -periodic_average(theta, t, omega_hat, weight, max(n, 1), at=grid_idx)
    return out, measured


def build_problem(ts: TimeSeries, d: HarmonicDecomposition, library: CandidateLibrary,
                  forcing: ForcingConfig | None = None):
    """Targets and library of one channel on a shared grid."""
    forcing = ts.forcing if forcing is None else forcing
    idx = target_grid(d)
    y = assemble_targets(d)
    theta, measured = assemble_library(ts, library, d.omega_hat, d.orders, forcing, idx)
    beta = forcing.beta if forcing is not None else 0.0
    return EvolutionaryRegressionProblem(
        d.omega_hat, harmonic_index_set(d.orders), y, theta, ts.times[idx], d.channel,
        library.terms, ts.dt, (len(idx),), measured, beta)


def frequency_normalize(problem: EvolutionaryRegressionProblem, omega_bar):
    """Re-express the targets against reference frequency ``omega_bar``.

    The linear-displacement column equals minus the envelopes, so
    ``y + (w_hat^2 - w_bar^2) * Theta_x`` moves the split of the stiffness
    between the stored frequency and the identified correction while leaving
    the assembled stiffness unchanged.
    """
    j = problem.linear_index()
    if j is None:
        raise MissingLinearTerm("library lacks the linear displacement term of this channel")
    shift = problem.omega_hat ** 2 - omega_bar ** 2
    targets = problem.targets + shift * problem.library[:, :, j]
    return replace(problem, omega_hat=float(omega_bar), targets=targets)


def merge_problems(problems):
    """Row-wise concatenation of compatible problems (same library, rows, reference)."""
    problems = list(problems)
    if not problems:
        raise IncompatibleProblems("nothing to merge")
    first = problems[0]
    for p in problems[1:]:
        if p.terms != first.terms:
            raise IncompatibleProblems("libraries differ")
        if p.harmonic_index_set != first.harmonic_index_set:
            raise IncompatibleProblems("harmonic index sets differ")
        if p.channel != first.channel:
            raise IncompatibleProblems("channels differ")
        if not np.isclose(p.omega_hat, first.omega_hat, rtol=1e-12, atol=0):
            raise IncompatibleProblems("problems are not normalised to a common frequency")
        if not np.isclose(p.dt, first.dt, rtol=1e-9):
            raise IncompatibleProblems("sample intervals differ")
    targets = np.concatenate([p.targets for p in problems], axis=1)
    library = np.concatenate([p.library for p in problems], axis=1)
    grid = np.concatenate([p.grid for p in problems])
    segments = tuple(s for p in problems for s in p.segments)
    return replace(first, targets=targets, library=library, grid=grid, segments=segments,
                   velocity_measured=all(p.velocity_measured for p in problems),
                   beta=max(p.beta for p in problems),
                   sources=tuple(s for p in problems for s in (p.sources or (None,))))
