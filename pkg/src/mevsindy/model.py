"""Explicit polynomial oscillator models: assembly, integration, presets.

A model with ``k`` channels reads, per channel ``i``::

    x_i'' + omega_sq[i] * x_i + sum_j coef_ij * theta_j(x, x') = beta * (fc_i cos(W t) + fs_i sin(W t))

``beta`` and ``W`` are bound at simulation time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import BlowUp, InputValidationError, NonPositiveStiffness, NotConverged
from .series import ForcingConfig, TimeSeries
from .terms import Term


@dataclass
class IdentifiedModel:
    dims: int
    omega_sq: np.ndarray
    terms: list  # per channel: list of (Term, coef)
    forcing: np.ndarray  # (dims, 2): (coef_cos, coef_sin)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.omega_sq = np.asarray(self.omega_sq, dtype=float).reshape(self.dims)
        self.forcing = np.asarray(self.forcing, dtype=float).reshape(self.dims, 2)
        if len(self.terms) != self.dims:
            raise InputValidationError("need one term list per channel")
        if np.any(self.omega_sq <= 0):
            raise NonPositiveStiffness(f"omega_sq must be positive, got {self.omega_sq}")
        self._compiled = None

    # -- structure -----------------------------------------------------------
    def compiled(self):
        """Flat arrays for the integration kernels."""
        if self._compiled is None:
            k = self.dims
            chans, exps, coefs = [], [], []
            for i, lst in enumerate(self.terms):
                for term, c in lst:
                    if term.kind != "mono":
                        raise InputValidationError("forcing terms belong in IdentifiedModel.forcing")
                    chans.append(i)
                    exps.append(list(term.x_exps) + list(term.v_exps))
                    coefs.append(c)
            self._compiled = (
                np.ascontiguousarray(self.omega_sq),
                np.asarray(chans, dtype=np.int_),
                np.asarray(exps, dtype=np.int_).reshape(len(coefs), 2 * k),
                np.asarray(coefs, dtype=float),
                np.ascontiguousarray(self.forcing[:, 0]),
                np.ascontiguousarray(self.forcing[:, 1]),
            )
        return self._compiled

    @property
    def max_degree(self):
        degs = [t.degree for lst in self.terms for t, _ in lst]
        return max(degs, default=1)

    def damping(self, channel):
        """Sum of linear own-velocity coefficients of ``channel``."""
        return sum(c for t, c in self.terms[channel]
                   if t.kind == "mono" and t.degree == 1 and t.v_exps[channel] == 1)

    def dependencies(self, channel):
        """Channels whose states enter the equation of ``channel`` (transitively)."""
        seen = {channel}
        stack = [channel]
        while stack:
            i = stack.pop()
            for t, _ in self.terms[i]:
                for j in t.channels_used():
                    if j not in seen:
                        seen.add(j)
                        stack.append(j)
        return sorted(seen)

    def restrict(self, channels):
        """Sub-model on a dependency-closed channel subset (re-indexed in order)."""
        channels = list(channels)
        remap = {c: i for i, c in enumerate(channels)}
        k = len(channels)
        new_terms = []
        for c in channels:
            lst = []
            for t, coef in self.terms[c]:
                used = t.channels_used()
                if not used <= set(channels):
                    raise InputValidationError(f"channel set {channels} is not closed under coupling")
                xe = [0] * k
                ve = [0] * k
                for j in channels:
                    xe[remap[j]] = t.x_exps[j]
                    ve[remap[j]] = t.v_exps[j]
                lst.append((Term("mono", tuple(xe), tuple(ve)), coef))
            new_terms.append(lst)
        return IdentifiedModel(k, self.omega_sq[channels], new_terms, self.forcing[channels],
                               dict(self.meta))

    # -- evaluation ----------------------------------------------------------
    def accel(self, x, v, t, beta, omega):
        """Acceleration for samples ``x``, ``v`` of shape ``(..., k)``."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        t = np.asarray(t, dtype=float)
        out = -self.omega_sq * x
        drive = beta * (np.cos(omega * t)[..., None] * self.forcing[:, 0]
                        + np.sin(omega * t)[..., None] * self.forcing[:, 1])
        out = out + drive
        for i, lst in enumerate(self.terms):
            for term, c in lst:
                out[..., i] -= c * term.evaluate(x, v, t, omega)
        return out

    def state_jacobian(self, x, v):
        """d(x', v')/d(x, v) at samples of shape ``(M, k)``; returns ``(M, 2k, 2k)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        v = np.atleast_2d(np.asarray(v, dtype=float))
        m, k = x.shape
        jac = np.zeros((m, 2 * k, 2 * k))
        jac[:, np.arange(k), k + np.arange(k)] = 1.0
        jac[:, k + np.arange(k), np.arange(k)] -= self.omega_sq
        y = np.hstack([x, v])
        for i, lst in enumerate(self.terms):
            for term, c in lst:
                exps = np.array(term.x_exps + term.v_exps)
                for j in np.nonzero(exps)[0]:
                    e = exps.copy()
                    e[j] -= 1
                    d = exps[j] * np.prod(y ** e, axis=1)
                    jac[:, k + i, j] -= c * d
        return jac

    # -- serialization -------------------------------------------------------
    def to_dict(self):
        d = {
            "dims": self.dims,
            "omega_sq": [float(w) for w in self.omega_sq],
            "terms": [[{"exponents": t.exponents_dict(), "coef": float(c)} for t, c in lst]
                      for lst in self.terms],
            "forcing": [[float(a), float(b)] for a, b in self.forcing],
        }
        if self.meta:
            d["meta"] = self.meta
        return d

    @classmethod
    def from_dict(cls, d):
        k = int(d["dims"])
        terms = [[(Term.from_exponents(k, e["exponents"]), float(e["coef"])) for e in lst]
                 for lst in d["terms"]]
        return cls(k, d["omega_sq"], terms, d["forcing"], d.get("meta", {}))

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text())


# -- assembly from regression output --------------------------------------------

def assemble_ode(coeffs, terms, omega_hat, channel):
    """Turn identified coefficients of one channel into its ODE entry.

    ``coeffs`` are aligned with ``terms``. The coefficient on the channel's own
    linear displacement is the stiffness correction, so the assembled stiffness
    is ``omega_hat**2 + xi_x``. Forcing columns are regressed per unit load
    and enter the right-hand side with a minus sign.

    Returns ``(omega_sq, [(term, coef), ...], (fc, fs))``.
    """
    values = np.asarray(getattr(coeffs, "values", coeffs), dtype=float)
    xi_x = 0.0
    rest = []
    fc = fs = 0.0
    for term, c in zip(terms, values):
        if c == 0.0:
            continue
        if term.is_linear_x(channel):
            xi_x += c
        elif term.kind == "cos":
            fc = -c
        elif term.kind == "sin":
            fs = -c
        else:
            rest.append((term, float(c)))
    omega_sq = omega_hat ** 2 + xi_x
    if omega_sq <= 0:
        raise NonPositiveStiffness(
            f"assembled stiffness {omega_sq:.6g} <= 0 (omega_hat={omega_hat:.6g}, xi_x={xi_x:.6g})")
    return omega_sq, rest, (fc, fs)


# -- integration ------------------------------------------------------------------

def _check_dt(model, dt):
    wmax = math.sqrt(float(np.max(model.omega_sq)))
    limit = (2 * math.pi / wmax) / 100
    if dt > limit * (1 + 1e-12):
        raise InputValidationError(f"dt={dt:g} exceeds {limit:g} (100 samples per fastest period)")


def _integrate(model, y0, t0, dt, nsteps, stride, beta, omega):
    arrays = model.compiled()
    y0 = np.asarray(y0, dtype=float)
    if not np.all(np.isfinite(y0)):
        raise InputValidationError("initial state must be finite")
    states, done = kernels.rk4_poly(y0, float(t0), float(dt), int(nsteps), int(stride), *arrays,
                                    float(beta), float(omega))
    if done < nsteps:
        t_esc = t0 + done * dt
        raise BlowUp(f"state magnitude exceeded 1e12 at t={t_esc:.6g}", escape_time=t_esc)
    return states


def _initial_state(model, x0):
    k = model.dims
    y0 = np.zeros(2 * k) if x0 is None else np.asarray(x0, dtype=float).ravel()
    if y0.shape != (2 * k,):
        raise InputValidationError(f"x0 must have {2 * k} entries (displacements then velocities)")
    return y0


def simulate(model: IdentifiedModel, forcing: ForcingConfig | None, x0, duration, dt, t0=0.0):
    """RK4 trajectory sampled every ``dt``; both displacement and velocity channels."""
    _check_dt(model, dt)
    y0 = _initial_state(model, x0)
    nsteps = int(round(duration / dt))
    beta = forcing.beta if forcing else 0.0
    omega = forcing.omega_f if forcing else 1.0
    states = _integrate(model, y0, t0, dt, nsteps, 1, beta, omega)
    k = model.dims
    return TimeSeries(t0, dt, states[:, :k], states[:, k:], forcing)


@dataclass
class SteadyStateSummary:
    amplitude: float
    phase_lag: float
    converged: bool
    periods: int = 0
    state: np.ndarray | None = None


def first_harmonic(samples, n_per_period):
    """(cos, sin) Fourier coefficients of one period of uniformly spaced samples."""
    s = np.arange(n_per_period) * (2 * np.pi / n_per_period)
    b1 = 2.0 * np.mean(samples[:n_per_period] * np.cos(s))
    c1 = 2.0 * np.mean(samples[:n_per_period] * np.sin(s))
    return b1, c1


def phase_lag_from(b1, c1):
    """Lag of ``b1 cos + c1 sin`` behind ``cos``; positive means lagging, in (-pi, pi]."""
    lag = math.atan2(c1, b1)
    return math.pi if lag == -math.pi else lag


def steady_state_response(model, beta, omega, channel=0, x0=None, steps_per_period=400,
                          tol=1e-4, max_periods=2000, min_periods=20):
    """Steady forced response by direct integration.

    Integrates whole forcing periods until the relative period-to-period
    amplitude change, and the remaining change projected from its observed
    geometric decay, both drop below ``tol``. Raises :class:`NotConverged`
    at the cap with the last estimate attached as ``summary``.
    """
    if model.damping(channel) <= 0:
        err = NotConverged("model has no positive linear damping on this channel")
        err.summary = SteadyStateSummary(float("nan"), float("nan"), False)
        raise err
    period = 2 * math.pi / omega
    wmax = math.sqrt(float(np.max(model.omega_sq)))
    spp = max(steps_per_period, int(math.ceil(100 * wmax / omega)))
    dt = period / spp
    y = _initial_state(model, x0)
    amps = []
    summary = None
    for p in range(max_periods):
        # absolute time p * period keeps the forcing phase aligned with cos(W t)
        states = _integrate(model, y, p * period, dt, spp, 1, beta, omega)
        y = states[-1]
        xs = states[:-1, channel]
        amp = 0.5 * (xs.max() - xs.min())
        amps.append(amp)
        b1, c1 = first_harmonic(xs, spp)
        summary = SteadyStateSummary(float(amp), phase_lag_from(b1, c1), False, p + 1, y.copy())
        if p + 1 < min_periods:
            continue
        scale = max(amp, 1e-300)
        change = abs(amps[-1] - amps[-2]) / scale
        window = np.abs(np.diff(amps[-11:])) / scale
        lo, hi = window[0], window[-1]
        if lo > 0 and hi > 0:
            rho = min((hi / lo) ** (1.0 / (len(window) - 1)), 0.999)
        else:
            rho = 0.0
        projected = window.max() * rho / (1 - rho) if rho > 0 else window.max()
        if change < tol and projected < tol:
            summary.converged = True
            return summary
    err = NotConverged(f"steady state not reached within {max_periods} periods")
    err.summary = summary
    raise err


# -- presets ------------------------------------------------------------------------

def table1_model(c=1e-2, alpha1=1e-2, alpha2=1e-4, omega=2.0):
    """Damped oscillator with quadratic and cubic stiffness, unit forcing shape."""
    terms = [[
        (Term.monomial(1, v={0: 1}), c),
        (Term.monomial(1, x={0: 2}), alpha1),
        (Term.monomial(1, x={0: 3}), alpha2),
    ]]
    return IdentifiedModel(1, [omega ** 2], terms, [[1.0, 0.0]], {"preset": "table1"})


def linear_model(omega=2.0, c=1e-2):
    terms = [[(Term.monomial(1, v={0: 1}), c)]] if c else [[]]
    return IdentifiedModel(1, [omega ** 2], terms, [[1.0, 0.0]], {"preset": "linear"})


def beam_model():
    """Three-mode reduced beam resonator."""
    m = lambda **kw: Term.monomial(3, **kw)  # noqa: E731
    terms = [
        [(m(x={0: 3}), 2.730e-6), (m(v={0: 1}), 1.100e-2)],
        [(m(x={0: 1}), -1.468e-6), (m(x={0: 3}), 5.453e-9), (m(v={0: 1}), 2.450e-5)],
        [(m(x={0: 2}), 2.402e-6), (m(v={0: 2}), -1.574e-5)],
    ]
    return IdentifiedModel(3, [2.998e-1, 3.006e-1, 3.006e-1], terms,
                           [[1.902, 0.0], [4.202e-3, 0.0], [0.0, 0.0]], {"preset": "beam"})


def mirror_model():
    """Three-mode reduced micromirror."""
    m = lambda **kw: Term.monomial(3, **kw)  # noqa: E731
    terms = [
        [(m(x={0: 3}), -1.180e-11), (m(v={0: 1}), 1.865e-4)],
        [(m(x={0: 2}), -1.103e-7), (m(v={0: 2}), 3.912e-5)],
        [(m(x={0: 2}), -9.127e-7), (m(v={0: 2}), 2.392e-5)],
    ]
    return IdentifiedModel(3, [3.383e-2, 3.374e-2, 3.374e-2], terms,
                           [[1.076e-1, 0.0], [0.0, 0.0], [0.0, 0.0]], {"preset": "mirror"})


PRESETS = {
    "table1": table1_model,
    "beam": beam_model,
    "mirror": mirror_model,
    "linear": linear_model,
}
