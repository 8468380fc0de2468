"""Candidate-function descriptors shared by the library and the ODE models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, order=True)
class Term:
    """One basis function.

    ``kind`` is ``"mono"``, ``"cos"`` or ``"sin"``. For monomials ``x_exps``
    and ``v_exps`` hold per-channel exponents on displacement and velocity.
    The trigonometric kinds stand for ``cos(Omega t)`` / ``sin(Omega t)``.
    """

    kind: str
    x_exps: tuple = ()
    v_exps: tuple = ()

    @classmethod
    def monomial(cls, k, x=None, v=None):
        xe = [0] * k
        ve = [0] * k
        for ch, e in (x or {}).items():
            xe[ch] = e
        for ch, e in (v or {}).items():
            ve[ch] = e
        return cls("mono", tuple(xe), tuple(ve))

    @classmethod
    def forcing_cos(cls):
        return cls("cos")

    @classmethod
    def forcing_sin(cls):
        return cls("sin")

    @property
    def is_forcing(self):
        return self.kind in ("cos", "sin")

    @property
    def degree(self):
        return sum(self.x_exps) + sum(self.v_exps)

    def is_linear_x(self, channel):
        if self.kind != "mono" or self.degree != 1:
            return False
        return self.x_exps[channel] == 1

    def uses_velocity(self):
        return self.kind == "mono" and any(self.v_exps)

    def channels_used(self):
        if self.kind != "mono":
            return set()
        return {i for i, e in enumerate(self.x_exps) if e} | {i for i, e in enumerate(self.v_exps) if e}

    @property
    def name(self):
        if self.kind == "cos":
            return "cos(Omega t)"
        if self.kind == "sin":
            return "sin(Omega t)"
        parts = []
        for sym, exps in (("x", self.x_exps), ("v", self.v_exps)):
            for i, e in enumerate(exps):
                if e == 1:
                    parts.append(f"{sym}{i + 1}")
                elif e > 1:
                    parts.append(f"{sym}{i + 1}^{e}")
        return "*".join(parts) if parts else "1"

    def exponents_dict(self):
        out = {}
        for sym, exps in (("x", self.x_exps), ("v", self.v_exps)):
            for i, e in enumerate(exps):
                if e:
                    out[f"{sym}{i + 1}"] = int(e)
        return out

    @classmethod
    def from_exponents(cls, k, exponents):
        xe = [0] * k
        ve = [0] * k
        for key, e in exponents.items():
            sym, idx = key[0], int(key[1:]) - 1
            if sym == "x":
                xe[idx] = int(e)
            elif sym == "v":
                ve[idx] = int(e)
            else:
                raise ValueError(f"bad exponent key {key!r}")
        return cls("mono", tuple(xe), tuple(ve))

    @classmethod
    def parse(cls, k, name):
        """Inverse of :attr:`name`."""
        if name == "cos(Omega t)":
            return cls.forcing_cos()
        if name == "sin(Omega t)":
            return cls.forcing_sin()
        exps = {}
        for part in name.split("*"):
            base, _, e = part.partition("^")
            exps[base] = int(e) if e else 1
        return cls.from_exponents(k, exps)

    def evaluate(self, x, v, t, omega):
        """Evaluate on samples ``x``, ``v`` of shape ``(..., k)`` at times ``t``."""
        if self.kind == "cos":
            return np.cos(omega * np.asarray(t, dtype=float)) * np.ones(np.shape(x)[:-1])
        if self.kind == "sin":
            return np.sin(omega * np.asarray(t, dtype=float)) * np.ones(np.shape(x)[:-1])
        out = np.ones(np.shape(x)[:-1])
        for i, e in enumerate(self.x_exps):
            if e:
                out = out * x[..., i] ** e
        for i, e in enumerate(self.v_exps):
            if e:
                out = out * v[..., i] ** e
        return out
