"""Joint two-phase sparse regression over stacked evolutionary equations.

Phase 1 solves an L1-penalised least-squares problem by accelerated proximal
gradient on unit-RMS columns. Phase 2 scores each selected term by its
contribution to the targets, prunes the negligible ones and refits the
survivors by ordinary least squares, repeating until the support is stable.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (EmptySupport, InputValidationError, NotConverged, RankDeficientWarning,
                     ResidualTooLarge)

DEFAULT_LAMBDA_FACTOR = 1e-4
DELTA_FACTOR = 1e-3


@dataclass(frozen=True)
class RegressionConfig:
    """Solver settings.

    ``lam`` is the absolute L1 weight on standardised columns; ``None`` means
    ``lambda_factor * max|Theta_s^T y|``. ``lambda_grid`` enables a log-spaced
    scan that keeps the sparsest support whose refit residual is acceptable.
    ``pruning`` selects the phase-2 schedule: ``"greedy"`` drops the single
    lowest-scoring term below the cutoff per pass, ``"batch"`` drops every
    such term per pass, ``"once"`` performs one batch cut. ``protect_linear`` keeps the channel's own linear displacement term in
    the support, since its coefficient is the stiffness correction.
    """

    lam: float | None = None
    lambda_factor: float = DEFAULT_LAMBDA_FACTOR
    residual_tolerance: float = 1e-1
    contribution_cutoff: float = 5e-2
    max_iterations: int = 200000
    convergence_tol: float = 1e-8
    pruning: str = "greedy"
    protect_linear: bool = True
    lambda_grid: bool = False
    grid_points: int = 10

    def __post_init__(self):
        if self.lam is not None and self.lam < 0:
            raise InputValidationError("lambda must be non-negative")
        if not 0 < self.residual_tolerance < 1 or not 0 < self.contribution_cutoff < 1:
            raise InputValidationError("residual_tolerance and contribution_cutoff must lie in (0, 1)")
        if self.pruning not in ("greedy", "batch", "once"):
            raise InputValidationError(f"unknown pruning schedule {self.pruning!r}")
        if self.max_iterations < 100:
            raise InputValidationError("max_iterations must be at least 100")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise InputValidationError(f"unknown regression settings: {sorted(unknown)}")
        return cls(**d)


@dataclass
class IdentifiedCoefficients:
    values: np.ndarray
    support: list
    contributions: np.ndarray
    residual: float
    names: list = field(default_factory=list)
    lam: float = 0.0
    pruned: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "coefficients": {n: float(v) for n, v in zip(self.names, self.values)},
            "support": [self.names[j] for j in self.support],
            "contributions": {n: float(c) for n, c in zip(self.names, self.contributions)},
            "residual": float(self.residual),
            "lambda": float(self.lam),
            "pruned": [[self.names[j] for j in step] for step in self.pruned],
            "diagnostics": list(self.diagnostics),
            "config": dict(self.config),
            "standardization": "columns scaled to unit RMS, not centred",
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")


def _as_system(problem):
    if isinstance(problem, tuple):
        theta, y = problem
        return np.asarray(theta, dtype=float), np.asarray(y, dtype=float)
    return problem.stacked()


def _standardize(theta):
    scale = np.sqrt(np.mean(theta ** 2, axis=0))
    live = scale > 0
    return theta[:, live] / scale[live], scale, live


def lambda_max(problem):
    """Smallest ``lam`` for which the phase-1 solution is identically zero."""
    theta, y = _as_system(problem)
    ts, _, _ = _standardize(theta)
    return 2.0 * float(np.max(np.abs(ts.T @ y))) if ts.size else 0.0


def default_lambda(problem, factor=DEFAULT_LAMBDA_FACTOR):
    return 0.5 * factor * lambda_max(problem)


def lasso_solve(problem, lam, config: RegressionConfig | None = None):
    """Minimise ``||y - Theta xi||^2 + lam ||xi_s||_1`` on standardised columns.

    FISTA with gradient-based adaptive restart. ``xi_s`` are the coefficients
    of the unit-RMS columns; the returned vector is in the original scale.
    Constant-zero columns get a zero coefficient.
    """
    config = config or RegressionConfig()
    theta, y = _as_system(problem)
    n_rows, p = theta.shape
    if n_rows < p:
        raise InputValidationError(f"stacked system has {n_rows} rows for {p} unknowns")
    ts, scale, live = _standardize(theta)
    out = np.zeros(p)
    if ts.shape[1] == 0:
        return out
    gram = ts.T @ ts
    rhs = ts.T @ y
    lip = 2.0 * float(np.linalg.eigvalsh(gram)[-1])
    step = 1.0 / lip
    thresh = lam * step
    z = np.zeros(ts.shape[1])
    w = z.copy()
    tk = 1.0
    for _ in range(config.max_iterations):
        grad = 2.0 * (gram @ w - rhs)
        u = w - step * grad
        z_new = np.sign(u) * np.maximum(np.abs(u) - thresh, 0.0)
        diff = z_new - z
        denom = max(np.linalg.norm(z_new), 1e-300)
        if np.linalg.norm(diff) <= config.convergence_tol * denom or not np.any(z_new) and not np.any(z):
            z = z_new
            break
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        if np.dot(w - z_new, diff) > 0:
            # momentum points uphill: restart
            t_new = 1.0
            w = z_new
        else:
            w = z_new + ((tk - 1.0) / t_new) * diff
        z, tk = z_new, t_new
    else:
        raise NotConverged(f"proximal gradient did not converge in {config.max_iterations} iterations")
    out[live] = z / scale[live]
    _check_rank(ts[:, z != 0], int(np.count_nonzero(z)))
    return out


def _check_rank(sub, size):
    if size and np.linalg.matrix_rank(sub) < size:
        warnings.warn("stacked matrix rank is below the support size", RankDeficientWarning,
                      stacklevel=3)


def _row_blocks(problem):
    """Per-harmonic ``(y_m, Theta_m, grid)`` pieces split at segment boundaries."""
    if isinstance(problem, tuple):
        theta, y = _as_system(problem)
        grid = np.arange(len(y), dtype=float)
        yield y, theta, grid
        return
    bounds = np.cumsum((0,) + tuple(problem.segments))
    for m in range(problem.targets.shape[0]):
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            yield problem.targets[m, lo:hi], problem.library[m, lo:hi], problem.grid[lo:hi]


def contributions(problem, xi):
    """Max-normalised contribution score of each term.

    ``c_j = sum_m int (Theta_mj xi_j)^2 / (y_m^2 + delta_m^2) dt`` with
    ``delta_m`` a small fraction of the RMS of ``y_m`` guarding zero
    crossings; the trapezoid rule runs within each merged segment.
    """
    xi = np.asarray(xi, dtype=float)
    scores = np.zeros(len(xi))
    if not np.any(xi):
        return scores
    for y, theta, grid in _row_blocks(problem):
        if len(y) < 2:
            continue
        delta = DELTA_FACTOR * np.sqrt(np.mean(y ** 2))
        denom = y ** 2 + delta ** 2
        if not np.all(denom > 0):
            continue
        ratio = (theta * xi) ** 2 / denom[:, None]
        scores += np.trapezoid(ratio, grid, axis=0)
    top = scores.max()
    return scores / top if top > 0 else scores


def refit(problem, support):
    """Unregularised joint least squares restricted to ``support``.

    Solved on unit-RMS columns so that monomials of very different magnitude
    do not fall below the rank cutoff.
    """
    theta, y = _as_system(problem)
    out = np.zeros(theta.shape[1])
    support = [j for j in support if np.any(theta[:, j])]
    if support:
        sub, scale, _ = _standardize(theta[:, support])
        _check_rank(sub, len(support))
        out[support] = np.linalg.lstsq(sub, y, rcond=None)[0] / scale
    return out


def relative_residual(problem, xi):
    theta, y = _as_system(problem)
    ny = np.linalg.norm(y)
    return float(np.linalg.norm(y - theta @ xi) / ny) if ny > 0 else float("inf")


def _protected(problem, config):
    if config.protect_linear and not isinstance(problem, tuple):
        j = problem.linear_index()
        return set() if j is None else {j}
    return set()


def _prune(problem, xi, config):
    keep_always = _protected(problem, config)
    support = sorted(set(np.flatnonzero(xi)) | keep_always)
    if not support:
        raise EmptySupport("phase 1 selected no terms")
    xi = refit(problem, support)
    path = []
    while True:
        scores = contributions(problem, xi)
        weak = [j for j in support if scores[j] < config.contribution_cutoff and j not in keep_always]
        if not weak:
            break
        if config.pruning == "greedy":
            weak = [min(weak, key=lambda j: (scores[j], j))]
        trial = [j for j in support if j not in weak]
        if not trial:
            raise EmptySupport("no term survived the contribution cutoff")
        xi_trial = refit(problem, trial)
        if (relative_residual(problem, xi_trial) > config.residual_tolerance
                and relative_residual(problem, xi) <= config.residual_tolerance):
            # the cut would break an acceptable fit: stop here
            break
        support, xi = trial, xi_trial
        path.append(weak)
        if config.pruning == "once":
            break
    return xi, support, contributions(problem, xi), path


def prune_and_refit(problem, xi, config: RegressionConfig | None = None):
    """Phase 2: contribution pruning with least-squares refit to a fixed point.

    Terms scoring below ``contribution_cutoff`` are removed (one per pass in
    the greedy schedule) and the survivors refit. A removal that would lift
    an admissible relative residual above ``residual_tolerance`` is refused
    and ends the loop.
    """
    config = config or RegressionConfig()
    xi, support, scores, path = _prune(problem, np.asarray(xi, dtype=float), config)
    res = relative_residual(problem, xi)
    if res > config.residual_tolerance:
        raise ResidualTooLarge(
            f"relative joint residual {res:.3g} exceeds {config.residual_tolerance:g}")
    names = list(getattr(problem, "names", [f"t{j}" for j in range(len(xi))]))
    return IdentifiedCoefficients(xi, support, scores, res, names, pruned=path,
                                  diagnostics=_diagnostics(problem, support),
                                  config=config.to_dict())


def _diagnostics(problem, support):
    terms = getattr(problem, "terms", None)
    if terms is None:
        return []
    nonlinear = [j for j in support if not terms[j].is_forcing and terms[j].degree > 1]
    return [] if nonlinear else ["LimitedNonlinearity"]


def identify(problem, config: RegressionConfig | None = None):
    """Two-phase regression: lasso, contributions, prune and refit."""
    config = config or RegressionConfig()
    theta, y = _as_system(problem)
    if not np.any(y):
        raise EmptySupport("targets are identically zero")
    if config.lambda_grid:
        return _identify_grid(problem, config)
    lam = config.lam if config.lam is not None else default_lambda(problem, config.lambda_factor)
    xi = lasso_solve(problem, lam, config)
    result = prune_and_refit(problem, xi, config)
    result.lam = float(lam)
    return result


def _identify_grid(problem, config):
    lmax = lambda_max(problem)
    best = None
    errors = []
    for lam in np.logspace(-6, -1, config.grid_points) * lmax:
        try:
            xi = lasso_solve(problem, lam, config)
            res = prune_and_refit(problem, xi, config)
        except (EmptySupport, ResidualTooLarge) as exc:
            errors.append(exc)
            continue
        res.lam = float(lam)
        key = (len(res.support), res.residual)
        if best is None or key < (len(best.support), best.residual):
            best = res
    if best is None:
        raise errors[-1] if errors else EmptySupport("lambda scan found no admissible support")
    return best


def with_config(config: RegressionConfig, **changes):
    return replace(config, **changes)
