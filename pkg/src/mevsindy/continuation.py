"""Harmonic-balance continuation of forced periodic orbits.

Periodic responses are represented by truncated Fourier series in the
forcing phase ``tau = Omega t``. The algebraic harmonic-balance residual is
solved by Newton iteration and followed in ``Omega`` by pseudo-arclength
continuation, which passes through folds. Orbit stability comes from
Floquet multipliers of the variational equations along the orbit.

Arclength is measured in scaled coordinates: Fourier coefficients divided
by an amplitude scale and the continuation parameter divided by the span
of the requested range, so both axes contribute comparably to a step.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import InputValidationError, NewtonDiverged, SeedFailed
from .model import IdentifiedModel

DEFAULT_ORDER = 5
NEWTON_TOL = 1e-9
NEWTON_MAX_ITER = 25
FD_STEP = 1e-7
STABILITY_TOL = 1e-6
AMPLITUDE_GRID = 512


@dataclass
class PeriodicOrbit:
    """Period-1 orbit ``x_i(tau) = a0 + sum_h b_h cos(h tau) + c_h sin(h tau)``.

    ``harmonics`` has shape ``(k, 2H+1)`` with columns ``a0, b1..bH, c1..cH``.
    """

    omega: float
    harmonics: np.ndarray
    order: int = DEFAULT_ORDER
    beta: float = 1.0
    iterations: int = 0

    def __post_init__(self):
        self.harmonics = np.atleast_2d(np.asarray(self.harmonics, dtype=float))
        if self.harmonics.shape[1] != 2 * self.order + 1:
            raise InputValidationError("harmonics must have 2H+1 columns")

    @property
    def dims(self):
        return self.harmonics.shape[0]

    def coefficients(self, channel, n):
        """``(b_n, c_n)`` of ``channel``; ``n = 0`` gives ``(a0, 0)``."""
        h = self.harmonics[channel]
        if n == 0:
            return h[0], 0.0
        return h[n], h[self.order + n]

    def sample(self, n_points, channel=None):
        """Displacement on ``n_points`` equispaced phases over one period."""
        basis = _basis(self.order, n_points)
        x = basis @ self.harmonics.T
        return x if channel is None else x[:, channel]

    def amplitude(self, channel, n_points=AMPLITUDE_GRID):
        """Half peak-to-peak of ``channel`` over one period."""
        x = self.sample(n_points, channel)
        return 0.5 * float(x.max() - x.min())

    def phase_lag(self, channel):
        """First-harmonic lag behind ``cos(Omega t)`` in (-pi, pi]."""
        b1, c1 = self.coefficients(channel, 1)
        lag = math.atan2(c1, b1)
        return math.pi if lag == -math.pi else lag


def _basis(order, n_points):
    tau = 2 * np.pi * np.arange(n_points) / n_points
    h = np.arange(1, order + 1)
    return np.hstack([np.ones((n_points, 1)), np.cos(np.outer(tau, h)), np.sin(np.outer(tau, h))])


def collocation_count(model: IdentifiedModel, order):
    """``max(4H+1, 2 deg H + 1)`` points keep polynomial products alias free."""
    return max(4 * order + 1, 2 * model.max_degree * order + 1)


class _HarmonicBalance:
    """Precomputed collocation operators for one model and truncation order."""

    def __init__(self, model: IdentifiedModel, order=DEFAULT_ORDER):
        self.model = model
        self.order = order
        self.n_col = collocation_count(model, order)
        tau = 2 * np.pi * np.arange(self.n_col) / self.n_col
        self.tau = tau
        self.basis = _basis(order, self.n_col)
        h = np.arange(1, order + 1)
        # d/dtau maps (b_h, c_h) -> (h c_h, -h b_h)
        zeros = np.zeros((self.n_col, 1))
        self.dbasis = np.hstack([zeros, -np.sin(np.outer(tau, h)) * h, np.cos(np.outer(tau, h)) * h])
        self.ddbasis = np.hstack([zeros, -np.cos(np.outer(tau, h)) * h ** 2,
                                  -np.sin(np.outer(tau, h)) * h ** 2])
        weights = np.full(2 * order + 1, 2.0 / self.n_col)
        weights[0] = 1.0 / self.n_col
        self.project = (self.basis * weights).T  # (2H+1, n_col)
        self.size = model.dims * (2 * order + 1)

    def residual(self, u, omega, beta):
        """Galerkin residual for coefficient vectors ``u`` of shape ``(..., size)``."""
        k = self.model.dims
        coef = u.reshape(u.shape[:-1] + (k, 2 * self.order + 1))
        x = np.einsum("jh,...ih->...ji", self.basis, coef)
        v = omega * np.einsum("jh,...ih->...ji", self.dbasis, coef)
        a = omega ** 2 * np.einsum("jh,...ih->...ji", self.ddbasis, coef)
        t = self.tau / omega
        r = a - self.model.accel(x, v, t, beta, omega)
        res = np.einsum("hj,...ji->...ih", self.project, r)
        return res.reshape(u.shape)

    def jacobian(self, u, omega, beta, param=None):
        """Forward-difference Jacobian; appends d/dparam as a last column if asked."""
        n = self.size
        steps = FD_STEP * (1.0 + np.abs(u))
        pert = u[None, :] + np.diag(steps)
        r0 = self.residual(u, omega, beta)
        cols = (self.residual(pert, omega, beta) - r0) / steps[:, None]
        jac = cols.T
        if param is None:
            return r0, jac
        if param == "omega":
            dp = FD_STEP * (1.0 + abs(omega))
            rp = self.residual(u, omega + dp, beta)
        else:
            dp = FD_STEP * (1.0 + abs(beta))
            rp = self.residual(u, omega, beta + dp)
        return r0, np.hstack([jac, ((rp - r0) / dp).reshape(n, 1)])


def hb_residual(model: IdentifiedModel, orbit: PeriodicOrbit):
    """Harmonic-balance residual of ``orbit``, length ``k (2H+1)``.

    The equations of motion are evaluated at equispaced collocation phases
    and projected onto ``{1, cos h tau, sin h tau}``.
    """
    hb = _HarmonicBalance(model, orbit.order)
    return hb.residual(orbit.harmonics.ravel(), orbit.omega, orbit.beta)


@dataclass(frozen=True)
class Arclength:
    """Pseudo-arclength constraint ``t . (w - w_prev) = ds`` in scaled coordinates."""

    prev: np.ndarray
    tangent: np.ndarray
    ds: float


def _tol_for(hb, beta):
    force = float(np.max(np.abs(hb.model.forcing))) * abs(beta)
    return NEWTON_TOL * max(1.0, force)


def _newton_fixed(hb, u, omega, beta, tol, max_iter=NEWTON_MAX_ITER):
    for it in range(max_iter + 1):
        r, jac = hb.jacobian(u, omega, beta)
        if not np.all(np.isfinite(r)):
            break
        if np.linalg.norm(r) < tol:
            return u, it
        if it == max_iter:
            break
        try:
            du = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            break
        u = u + _damp(hb, u, du, omega, beta, r)
    raise NewtonDiverged("Newton iteration did not converge at fixed parameter")


def _damp(hb, u, du, omega, beta, r, param=None, extra=None):
    # simple backtracking on the residual norm
    base = np.linalg.norm(r)
    lam = 1.0
    for _ in range(6):
        trial = u + lam * du
        if param is None:
            rt = hb.residual(trial, omega, beta)
        else:
            rt = extra(trial)
        if np.all(np.isfinite(rt)) and np.linalg.norm(rt) < base * (1 - 1e-4 * lam):
            return lam * du
        lam *= 0.5
    return du


def newton_correct(model: IdentifiedModel, guess: PeriodicOrbit, constraint=None, scale=None):
    """Correct ``guess`` to a harmonic-balance solution.

    ``constraint`` is ``None`` for a fixed-``Omega`` solve or an
    :class:`Arclength` instance in the scaled coordinates ``scale = (u_scale,
    omega_scale)``. Raises :class:`NewtonDiverged` when the residual does not
    drop below tolerance within the iteration cap.
    """
    hb = _HarmonicBalance(model, guess.order)
    u = guess.harmonics.ravel().copy()
    tol = _tol_for(hb, guess.beta)
    if constraint is None:
        u, it = _newton_fixed(hb, u, guess.omega, guess.beta, tol)
        return PeriodicOrbit(guess.omega, u.reshape(guess.harmonics.shape), guess.order, guess.beta, it)
    if constraint.ds == 0:
        w = constraint.prev
        us, ws = scale
        return PeriodicOrbit(float(w[-1] * ws), (w[:-1] * us).reshape(guess.harmonics.shape),
                             guess.order, guess.beta, 0)
    w0 = np.concatenate([u / scale[0], [guess.omega / scale[1]]])
    w, it = _newton_arclength(hb, w0, guess.beta, "omega", constraint, scale, tol)
    return PeriodicOrbit(float(w[-1] * scale[1]), (w[:-1] * scale[0]).reshape(guess.harmonics.shape),
                         guess.order, guess.beta, it)


def _unscale(w, scale, param, fixed):
    u = w[:-1] * scale[0]
    p = w[-1] * scale[1]
    if param == "omega":
        return u, p, fixed
    return u, fixed, p


def _newton_arclength(hb, w, fixed, param, con, scale, tol, max_iter=NEWTON_MAX_ITER):
    us, ps = scale
    n = hb.size

    def full_residual(wt):
        u, om, be = _unscale(wt, scale, param, fixed)
        r = hb.residual(u, om, be)
        return np.concatenate([r, [con.tangent @ (wt - con.prev) - con.ds]])

    for it in range(max_iter + 1):
        u, om, be = _unscale(w, scale, param, fixed)
        r, jac = hb.jacobian(u, om, be, param)
        if not np.all(np.isfinite(r)):
            break
        g = con.tangent @ (w - con.prev) - con.ds
        if np.linalg.norm(r) < tol and abs(g) < 1e-10:
            return w, it
        if it == max_iter:
            break
        big = np.empty((n + 1, n + 1))
        big[:n, :n] = jac[:, :n] * us
        big[:n, n] = jac[:, n] * ps
        big[n] = con.tangent
        try:
            dw = np.linalg.solve(big, -np.concatenate([r, [g]]))
        except np.linalg.LinAlgError:
            break
        w = w + _damp(hb, w, dw, None, None, np.concatenate([r, [g]]), param, full_residual)
    raise NewtonDiverged("arclength corrector did not converge")


def stability(model: IdentifiedModel, orbit: PeriodicOrbit, steps=None):
    """Floquet multipliers of ``orbit``; stable iff all ``|mu| < 1 + 1e-6``.

    The variational equations are integrated by RK4 over one period with the
    state Jacobian sampled along the harmonic-balance orbit.
    """
    omega = orbit.omega
    wmax = math.sqrt(float(np.max(model.omega_sq)))
    if steps is None:
        steps = max(256, int(math.ceil(300 * wmax / omega)))
    n_pts = 2 * steps
    tau = 2 * np.pi * np.arange(n_pts + 1) / n_pts
    hcols = np.arange(1, orbit.order + 1)
    basis = np.hstack([np.ones((n_pts + 1, 1)), np.cos(np.outer(tau, hcols)),
                       np.sin(np.outer(tau, hcols))])
    dbasis = np.hstack([np.zeros((n_pts + 1, 1)), -np.sin(np.outer(tau, hcols)) * hcols,
                        np.cos(np.outer(tau, hcols)) * hcols])
    x = basis @ orbit.harmonics.T
    v = omega * (dbasis @ orbit.harmonics.T)
    a_grid = np.ascontiguousarray(model.state_jacobian(x, v))
    phi = kernels.rk4_linear_propagate(a_grid, 2 * np.pi / omega / steps)
    mult = np.linalg.eigvals(phi)
    return bool(np.all(np.abs(mult) < 1 + STABILITY_TOL)), mult


@dataclass
class FrcPointSet:
    """Frequency-response points of one branch at fixed load multiplier."""

    omega: np.ndarray
    amplitude: np.ndarray
    phase: np.ndarray
    stable: np.ndarray
    beta: float
    channel: int = 0
    order: int = DEFAULT_ORDER
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        self.amplitude = np.asarray(self.amplitude, dtype=float)
        self.phase = np.asarray(self.phase, dtype=float)
        self.stable = np.asarray(self.stable, dtype=bool)

    def __len__(self):
        return len(self.omega)

    def amplitude_points(self):
        return np.column_stack([self.omega, self.amplitude])

    def phase_points(self):
        return np.column_stack([self.omega, self.phase])

    def peak_omega(self):
        return float(self.omega[int(np.argmax(self.amplitude))])

    def folds(self):
        """Indices where the direction of travel in ``Omega`` reverses."""
        d = np.sign(np.diff(self.omega))
        return [i + 1 for i in range(len(d) - 1) if d[i] != 0 and d[i + 1] != 0 and d[i] != d[i + 1]]

    def sidecar(self):
        out = {"beta": float(self.beta), "channel": int(self.channel), "order": int(self.order)}
        out.update(self.meta)
        return out

    def write(self, path):
        """CSV ``omega,amplitude,phase,stable`` plus a ``.json`` sidecar."""
        path = Path(path)
        with open(path, "w") as fh:
            fh.write("omega,amplitude,phase,stable\n")
            for row in zip(self.omega, self.amplitude, self.phase, self.stable):
                fh.write(f"{row[0]:.17g},{row[1]:.17g},{row[2]:.17g},{int(row[3])}\n")
        path.with_suffix(".json").write_text(json.dumps(self.sidecar(), indent=2) + "\n")

    @classmethod
    def read(cls, path):
        path = Path(path)
        text = path.read_text().strip().splitlines()
        if not text or text[0].strip() != "omega,amplitude,phase,stable":
            raise InputValidationError(f"{path}: expected header omega,amplitude,phase,stable")
        rows = [line.split(",") for line in text[1:] if line.strip()]
        if not rows:
            raise InputValidationError(f"{path}: no points")
        data = np.array([[float(r[0]), float(r[1]), float(r[2])] for r in rows])
        stable = np.array([bool(int(float(r[3]))) for r in rows])
        side = path.with_suffix(".json")
        meta = json.loads(side.read_text()) if side.exists() else {}
        beta = float(meta.pop("beta", float("nan")))
        channel = int(meta.pop("channel", 0))
        order = int(meta.pop("order", DEFAULT_ORDER))
        return cls(data[:, 0], data[:, 1], data[:, 2], stable, beta, channel, order, meta)


def _linear_seed(model, beta, omega, order):
    """First-harmonic response of the linearised model (velocity coupling kept)."""
    k = model.dims
    stiff = np.diag(model.omega_sq).astype(complex)
    damp = np.zeros((k, k))
    for i, lst in enumerate(model.terms):
        for t, c in lst:
            if t.degree != 1:
                continue
            j = int(np.argmax(np.array(t.x_exps) + np.array(t.v_exps)))
            if t.x_exps[j]:
                stiff[i, j] += c
            else:
                damp[i, j] += c
    dyn = stiff - omega ** 2 * np.eye(k) + 1j * omega * damp
    force = beta * (model.forcing[:, 0] - 1j * model.forcing[:, 1])
    try:
        z = np.linalg.solve(dyn, force)
    except np.linalg.LinAlgError:
        z = np.zeros(k, dtype=complex)
    h = np.zeros((k, 2 * order + 1))
    h[:, 1] = z.real
    h[:, order + 1] = -z.imag
    return h


def amplitude_scale(model, beta, omega_range):
    """Order of magnitude of the response used to scale arclength."""
    peak = 0.0
    for om in np.linspace(omega_range[0], omega_range[1], 201):
        h = _linear_seed(model, beta, om, 1)
        peak = max(peak, float(np.max(np.hypot(h[:, 1], h[:, 2]))))
    wres = np.sqrt(model.omega_sq)
    for om in wres[(wres > omega_range[0]) & (wres < omega_range[1])]:
        h = _linear_seed(model, beta, om, 1)
        if np.all(np.isfinite(h)):
            peak = max(peak, float(np.max(np.hypot(h[:, 1], h[:, 2]))))
    return peak if np.isfinite(peak) and peak > 0 else 1.0


def _tangent(hb, w, fixed, param, scale, prev_tangent=None):
    u, om, be = _unscale(w, scale, param, fixed)
    _, jac = hb.jacobian(u, om, be, param)
    n = hb.size
    jac = np.hstack([jac[:, :n] * scale[0], jac[:, n:] * scale[1]])
    # null vector of the n x (n+1) Jacobian
    _, _, vt = np.linalg.svd(jac)
    t = vt[-1]
    if prev_tangent is not None:
        if t @ prev_tangent < 0:
            t = -t
    elif t[-1] < 0:
        t = -t
    return t / np.linalg.norm(t)


def trace_branch(model: IdentifiedModel, fixed, param_range, ds0=0.01, channel=0,
                 order=DEFAULT_ORDER, param="omega", max_points=2000, u_scale=None):
    """Pseudo-arclength trace in ``param`` (``"omega"`` or ``"beta"``).

    ``fixed`` is the value of the other parameter. Returns a list of
    ``PeriodicOrbit`` and a statistics dict.
    """
    lo, hi = float(param_range[0]), float(param_range[1])
    if not hi > lo:
        raise InputValidationError("parameter range must be increasing")
    if ds0 <= 0:
        raise InputValidationError("ds0 must be positive")
    hb = _HarmonicBalance(model, order)
    if param == "omega":
        beta_of, omega_of = (lambda p: fixed), (lambda p: p)
    elif param == "beta":
        beta_of, omega_of = (lambda p: p), (lambda p: fixed)
    else:
        raise InputValidationError(f"unknown continuation parameter {param!r}")
    if u_scale is None:
        if param == "omega":
            u_scale = amplitude_scale(model, fixed, (lo, hi))
        else:
            u_scale = amplitude_scale(model, hi, (fixed, fixed))
    scale = (u_scale, hi - lo)
    tol = _tol_for(hb, max(abs(lo), abs(hi)) if param == "beta" else fixed)
    seed = _linear_seed(model, beta_of(lo), omega_of(lo), order).ravel()
    try:
        seed, _ = _newton_fixed(hb, seed, omega_of(lo), beta_of(lo), tol)
    except NewtonDiverged as exc:
        raise SeedFailed(f"no converged orbit at the start of the range: {exc}") from exc
    w = np.concatenate([seed / scale[0], [lo / scale[1]]])
    orbits = [w]
    iters = [0]
    tangent = _tangent(hb, w, fixed, param, scale)
    ds = ds0
    ds_min, ds_max = ds0 / 64, 8 * ds0
    stats = {"rejected": 0, "budget_exhausted": False, "step_underflow": False}
    while True:
        if len(orbits) >= max_points:
            stats["budget_exhausted"] = True
            break
        pred = w + ds * tangent
        con = Arclength(w, tangent, ds)
        try:
            w_new, it = _newton_arclength(hb, pred, fixed, param, con, scale, tol)
            step = w_new - w
            dist = np.linalg.norm(step)
            ok = dist < 2.5 * ds and step @ tangent > 0.5 * dist
        except NewtonDiverged:
            ok = False
        if not ok:
            stats["rejected"] += 1
            ds *= 0.5
            if ds < ds_min:
                stats["step_underflow"] = True
                break
            continue
        new_tangent = _tangent(hb, w_new, fixed, param, scale, tangent)
        w, tangent = w_new, new_tangent
        orbits.append(w)
        iters.append(it)
        p = w[-1] * scale[1]
        if p > hi or p < lo:
            break
        if it <= 3:
            ds = min(ds * 1.3, ds_max)
    out = []
    for w_i, it in zip(orbits, iters):
        u, om, be = _unscale(w_i, scale, param, fixed)
        out.append(PeriodicOrbit(float(om), u.reshape(model.dims, 2 * order + 1), order, float(be), it))
    stats.update({"points": len(out), "u_scale": float(u_scale), "param_scale": float(hi - lo),
                  "ds0": float(ds0), "mean_newton_iterations": float(np.mean(iters))})
    return out, stats


def trace_frc(model: IdentifiedModel, beta, omega_range, ds0=0.01, channel=0, order=DEFAULT_ORDER,
              max_points=2000, with_stability=True):
    """Frequency-response curve of ``channel`` at load multiplier ``beta``.

    Only the channels the requested one depends on are continued. Points
    outside ``omega_range`` are dropped; the phase lag is unwrapped along
    the branch.
    """
    closure = model.dependencies(channel)
    sub = model.restrict(closure)
    ch = closure.index(channel)
    orbits, stats = trace_branch(sub, beta, omega_range, ds0, ch, order, "omega", max_points)
    lo, hi = omega_range
    keep = [o for o in orbits if lo - 1e-12 <= o.omega <= hi + 1e-12]
    om = np.array([o.omega for o in keep])
    amp = np.array([o.amplitude(ch) for o in keep])
    phase = np.unwrap(np.array([o.phase_lag(ch) for o in keep]))
    if with_stability:
        stable = np.array([stability(sub, o)[0] for o in keep], dtype=bool)
    else:
        stable = np.ones(len(keep), dtype=bool)
    stats.update({"channels_traced": [int(c) for c in closure],
                  "phase_convention": "first-harmonic lag behind cos(Omega t), unwrapped along the branch",
                  "amplitude_definition": "half peak-to-peak over one period"})
    return FrcPointSet(om, amp, phase, stable, float(beta), int(channel), int(order), stats)


def orbit_from_frc_point(model, frc, index):
    """Re-solve the orbit of an FRC point at fixed Omega (diagnostics)."""
    closure = model.dependencies(frc.channel)
    sub = model.restrict(closure)
    guess = PeriodicOrbit(float(frc.omega[index]), _linear_seed(sub, frc.beta, frc.omega[index], frc.order),
                          frc.order, frc.beta)
    return newton_correct(sub, guess)
