"""Test functions, centered occupation fields, and the pairings built from them.

The centered field w_x^i = 1(sigma_x = i) - u_x^i compares one configuration
against a density field.  Paired with a test function it yields the
density-scale error functional (n^-d weighting) and the fluctuation
functional (n^-d/2 weighting); the quadratic form of the generator is
evaluated on configurations directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gcp import SpinConfig, rates_from_scratch
from .hydro import DensityField, ModelParams
from .lattice import TorusLattice


class TestFunction:
    """Named smooth function on the unit torus with a known sup norm."""

    __test__ = False  # keep pytest from collecting the math term as a suite

    def __init__(self, name, params, evaluate, norm_inf, values=None):
        self.name = name
        self.params = dict(params)
        self._evaluate = evaluate
        self.norm_inf = float(norm_inf)
        self._values = values

    def __repr__(self):
        return f"TestFunction({self.name!r}, {self.params!r})"

    def values_on(self, lattice: TorusLattice) -> np.ndarray:
        if self._values is not None:
            if len(self._values) != lattice.n_sites:
                raise ValueError("tabulated test function does not match lattice size")
            return self._values
        return np.asarray(self._evaluate(lattice.positions()), dtype=float)

    def norm_l2n(self, lattice: TorusLattice) -> float:
        """Discrete L2 norm: sqrt(n^-d sum_x f(x/n)^2)."""
        v = self.values_on(lattice)
        return float(np.sqrt(np.mean(v ** 2)))

    @classmethod
    def constant(cls, c=1.0):
        c = float(c)
        return cls("constant", {"c": c},
                   lambda pts: np.full(pts.shape[0], c), abs(c))

    @classmethod
    def cos_mode(cls, mode=1):
        mode = np.atleast_1d(np.asarray(mode, dtype=float))
        return cls("cos", {"mode": mode.tolist()},
                   lambda pts: np.cos(2.0 * np.pi * (pts @ np.broadcast_to(mode, (pts.shape[1],)))),
                   1.0)

    @classmethod
    def sin_mode(cls, mode=1):
        mode = np.atleast_1d(np.asarray(mode, dtype=float))
        return cls("sin", {"mode": mode.tolist()},
                   lambda pts: np.sin(2.0 * np.pi * (pts @ np.broadcast_to(mode, (pts.shape[1],)))),
                   1.0)

    @classmethod
    def bump(cls, center=0.0, width=0.25):
        """Smooth periodic bump exp((cos(2 pi (x - c)) - 1) / w^2), peak value 1."""
        width = float(width)
        if width <= 0:
            raise ValueError("bump width must be > 0")
        center = np.atleast_1d(np.asarray(center, dtype=float))

        def ev(pts):
            c = np.broadcast_to(center, (pts.shape[1],))
            return np.exp((np.cos(2.0 * np.pi * (pts - c)) - 1.0).sum(axis=1) / width ** 2)

        return cls("bump", {"center": center.tolist(), "width": width}, ev, 1.0)

    @classmethod
    def tabulated(cls, values):
        values = np.asarray(values, dtype=float)
        return cls("tabulated", {"n_sites": len(values)}, None,
                   float(np.max(np.abs(values))) if values.size else 0.0, values)

    @classmethod
    def from_config(cls, cfg):
        cfg = dict(cfg)
        name = cfg.pop("name", None)
        table = {"constant": cls.constant, "cos": cls.cos_mode, "sin": cls.sin_mode,
                 "bump": cls.bump, "tabulated": cls.tabulated}
        if name not in table:
            raise ValueError(f"unknown test function {name!r}")
        return table[name](**cfg)


@dataclass
class CenteredField:
    """w_x^i = 1(sigma_x = i) - u_x^i; per-site rows sum to zero."""

    lattice: TorusLattice
    k: int
    w: np.ndarray  # (N, k+1)


def centered_field(config: SpinConfig, u: DensityField) -> CenteredField:
    if config.lattice != u.lattice or config.k != u.k:
        raise ValueError("configuration and density field live on different systems")
    ind = np.zeros_like(u.u)
    ind[np.arange(config.lattice.n_sites), config.sigma] = 1.0
    return CenteredField(config.lattice, config.k, ind - u.u)


def lln_error(w: CenteredField, f: TestFunction, i) -> float:
    """Density-scale pairing n^-d sum_x w_x^i f(x/n)."""
    return float(np.mean(w.w[:, i] * f.values_on(w.lattice)))


def fluctuation(w: CenteredField, f: TestFunction, i) -> float:
    """Fluctuation-scale pairing n^-d/2 sum_x w_x^i f(x/n), computed directly."""
    vals = w.w[:, i] * f.values_on(w.lattice)
    return float(vals.sum() / np.sqrt(w.lattice.n_sites))


def carre_du_champ(config: SpinConfig, params: ModelParams, f: TestFunction, i, j) -> float:
    """Quadratic form of the generator on a pair of fluctuation observables.

    Each jump at site x raises sigma_x by one (mod k+1), so the state-i
    indicator changes by 1(sigma_x = i-1) - 1(sigma_x = i); the form weights
    the product of those changes by the jump rate and f(x/n)^2.
    """
    kp1 = params.k + 1
    _, rate = rates_from_scratch(config, params)
    sigma = config.sigma
    di = (sigma == (i - 1) % kp1).astype(float) - (sigma == i % kp1)
    dj = (sigma == (j - 1) % kp1).astype(float) - (sigma == j % kp1)
    fv = f.values_on(config.lattice)
    return float(np.mean(rate * di * dj * fv ** 2))
