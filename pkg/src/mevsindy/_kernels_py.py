"""Pure-Python (numpy) versions of the hot kernels.

Signatures and results match the compiled ``_ckernels`` module; this module is
used when the extension is not built or ``MEVSINDY_PURE_PYTHON=1`` is set.
"""

import numpy as np

BLOWUP = 1e12


def _poly_rhs(y, t, k, omega_sq, term_channel, term_exps, term_coef, fc, fs, beta, omega):
    x = y[:k]
    v = y[k:]
    acc = -omega_sq * x
    if term_coef.size:
        mono = np.prod(y[None, :] ** term_exps, axis=1) * term_coef
        acc = acc - np.bincount(term_channel, weights=mono, minlength=k)
    acc = acc + beta * (fc * np.cos(omega * t) + fs * np.sin(omega * t))
    return np.concatenate([v, acc])


def rk4_poly(y0, t0, dt, nsteps, stride, omega_sq, term_channel, term_exps, term_coef,
             fc, fs, beta, omega):
    """Classical RK4 on the first-order polynomial oscillator system.

    Returns ``(states, n_done)``; ``states`` has one row per ``stride`` steps
    (the initial state first). ``n_done < nsteps`` signals that the state left
    the ``1e12`` ball at step ``n_done``.
    """
    k = omega_sq.shape[0]
    y = np.array(y0, dtype=float)
    nrec = nsteps // stride + 1
    out = np.empty((nrec, 2 * k))
    out[0] = y
    args = (k, omega_sq, term_channel, term_exps, term_coef, fc, fs, beta, omega)
    h2 = 0.5 * dt
    rec = 1
    for step in range(nsteps):
        t = t0 + step * dt
        k1 = _poly_rhs(y, t, *args)
        k2 = _poly_rhs(y + h2 * k1, t + h2, *args)
        k3 = _poly_rhs(y + h2 * k2, t + h2, *args)
        k4 = _poly_rhs(y + dt * k3, t + dt, *args)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.abs(y) < BLOWUP):
            return out[:rec], step + 1
        if (step + 1) % stride == 0:
            out[rec] = y
            rec += 1
    return out[:rec], nsteps


def sliding_trapezoid(g, h):
    """Trapezoid sums of ``g`` over every window of ``2h+1`` samples (unit spacing)."""
    g = np.asarray(g, dtype=float)
    n = g.shape[0] - 2 * h
    if n <= 0:
        return np.empty(0)
    c = np.concatenate([[0.0], np.cumsum(g)])
    full = c[2 * h + 1:] - c[:n]
    return full - 0.5 * (g[: n] + g[2 * h: 2 * h + n])


def chamfer_directed(p, q):
    """Mean over rows of ``p`` of the Euclidean distance to the nearest row of ``q``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    best = np.empty(p.shape[0])
    for start in range(0, p.shape[0], 512):
        blk = p[start:start + 512]
        d2 = ((blk[:, None, :] - q[None, :, :]) ** 2).sum(axis=2)
        best[start:start + 512] = np.sqrt(d2.min(axis=1))
    return float(best.mean())


def rk4_linear_propagate(a_grid, dt):
    """Fundamental matrix of ``Phi' = A(t) Phi`` after ``(len(a_grid)-1)//2`` RK4 steps.

    ``a_grid`` samples ``A`` at every half step.
    """
    a_grid = np.asarray(a_grid, dtype=float)
    d = a_grid.shape[1]
    phi = np.eye(d)
    nsteps = (a_grid.shape[0] - 1) // 2
    for s in range(nsteps):
        a0, am, a1 = a_grid[2 * s], a_grid[2 * s + 1], a_grid[2 * s + 2]
        k1 = a0 @ phi
        k2 = am @ (phi + 0.5 * dt * k1)
        k3 = am @ (phi + 0.5 * dt * k2)
        k4 = a1 @ (phi + dt * k3)
        phi = phi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return phi
