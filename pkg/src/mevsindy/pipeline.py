"""End-to-end identification: envelopes, evolutionary problems, regression, ODE assembly."""

from __future__ import annotations

import numpy as np

from .errors import InputValidationError
from .ghb import CandidateLibrary, build_problem, frequency_normalize, merge_problems
from .model import IdentifiedModel, assemble_ode
from .signal import decompose, detect_harmonics, estimate_fundamental
from .sparse import RegressionConfig, identify


def channel_problem(series, channel, library, orders=None):
    """Evolutionary problem of ``channel`` from one or more trajectories.

    With several trajectories each problem is frequency-normalised to the
    mean of the estimated fundamentals and the rows are merged.
    """
    series = list(series)
    if not series:
        raise InputValidationError("no trajectories supplied")
    omegas = [estimate_fundamental(ts, channel) for ts in series]
    if orders is None:
        found = set()
        for ts, w in zip(series, omegas):
            found.update(detect_harmonics(ts, channel, w))
        orders = sorted(found)
    problems = []
    for ts, w in zip(series, omegas):
        d = decompose(ts, channel, orders=orders, omega_hat=w)
        problems.append(build_problem(ts, d, library))
    if len(problems) == 1:
        return problems[0]
    omega_bar = float(np.mean(omegas))
    return merge_problems([frequency_normalize(p, omega_bar) for p in problems])


def identify_channel(series, channel, library_spec=None, config=None, orders=None):
    """``(omega_sq, terms, forcing_pair, coefficients, problem)`` for one channel."""
    k = series[0].n_channels
    library = CandidateLibrary.from_spec(k, channel, library_spec)
    problem = channel_problem(series, channel, library, orders)
    coeffs = identify(problem, config or RegressionConfig())
    omega_sq, rest, forcing = assemble_ode(coeffs, problem.terms, problem.omega_hat, channel)
    return omega_sq, rest, forcing, coeffs, problem


def identify_model(series, channels=None, library_spec=None, config=None, orders=None):
    """Identify an explicit model from trajectories sharing channel layout.

    ``channels`` lists the equations to identify (default: all); channels
    not identified but referenced are an error. Returns ``(model, report)``.
    """
    series = list(series)
    if not series:
        raise InputValidationError("no trajectories supplied")
    k = series[0].n_channels
    if any(ts.n_channels != k for ts in series):
        raise InputValidationError("trajectories have different channel counts")
    channels = list(range(k)) if channels is None else sorted(set(channels))
    pending = list(channels)
    done = {}
    report = {"channels": {}}
    while pending:
        ch = pending.pop(0)
        if ch in done:
            continue
        omega_sq, rest, forcing, coeffs, problem = identify_channel(
            series, ch, library_spec, config, orders)
        done[ch] = (omega_sq, rest, forcing)
        for term, _ in rest:
            for j in term.channels_used():
                if j not in done and j not in pending:
                    pending.append(j)
        entry = coeffs.to_dict()
        entry.update({
            "omega_hat": float(problem.omega_hat),
            "orders": sorted({int(n) for n, _ in problem.harmonic_index_set}),
            "omega_sq": float(omega_sq),
            "forcing": {"cos": float(forcing[0]), "sin": float(forcing[1])},
            "velocity_measured": bool(problem.velocity_measured),
        })
        known = [ts.forcing.beta for ts in series if ts.forcing is not None]
        if known:
            entry["recovered_forcing_amplitude"] = [float(b * np.hypot(*forcing)) for b in known]
            entry["known_beta"] = [float(b) for b in known]
        report["channels"][str(ch)] = entry
    ids = sorted(done)
    remap = {c: i for i, c in enumerate(ids)}
    kk = len(ids)
    terms = []
    for c in ids:
        lst = []
        for term, coef in done[c][1]:
            xe = [0] * kk
            ve = [0] * kk
            for j in range(k):
                if term.x_exps[j]:
                    xe[remap[j]] = term.x_exps[j]
                if term.v_exps[j]:
                    ve[remap[j]] = term.v_exps[j]
            lst.append((type(term)("mono", tuple(xe), tuple(ve)), coef))
        terms.append(lst)
    model = IdentifiedModel(kk, [done[c][0] for c in ids], terms, [done[c][2] for c in ids],
                            {"source_channels": ids})
    report["source_channels"] = ids
    return model, report
