"""Catalog of initial per-state density profiles on the unit torus.

Every profile takes values in the interior of the probability simplex over
states {0..k}, with a closed-form interior margin used when validating
experiment configs.
"""

from __future__ import annotations

import numpy as np


class InitialProfile:
    """Smooth map from torus points to probability vectors over {0..k}."""

    def __init__(self, name, k, params, evaluate, interior_margin):
        self.name = name
        self.k = int(k)
        self.params = dict(params)
        self._evaluate = evaluate
        self.interior_margin = float(interior_margin)

    def __repr__(self):
        return f"InitialProfile({self.name!r}, k={self.k})"

    def evaluate(self, points) -> np.ndarray:
        """(N, d) torus points -> (N, k+1) probability vectors."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = self._evaluate(points)
        return np.asarray(out, dtype=float)

    @classmethod
    def constant(cls, values):
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("constant profile needs a vector of >= 2 state probabilities")
        if abs(values.sum() - 1.0) > 1e-12:
            raise ValueError("constant profile values must sum to 1")
        margin = float(min(values.min(), 1.0 - values.max()))

        def ev(points):
            return np.tile(values, (points.shape[0], 1))

        return cls("constant", values.size - 1, {"values": values.tolist()}, ev, margin)

    @classmethod
    def cosine_simplex(cls, base, delta, mode=1):
        """base + delta * cos(2 pi m.x): a single-mode perturbation of a flat profile.

        delta must sum to zero so the result stays on the simplex.
        """
        base = np.asarray(base, dtype=float)
        delta = np.asarray(delta, dtype=float)
        if base.shape != delta.shape or base.ndim != 1:
            raise ValueError("base and delta must be vectors of equal length")
        if abs(base.sum() - 1.0) > 1e-12:
            raise ValueError("base must sum to 1")
        if abs(delta.sum()) > 1e-12:
            raise ValueError("delta must sum to 0")
        mode = np.atleast_1d(np.asarray(mode, dtype=float))
        lo = base - np.abs(delta)
        hi = base + np.abs(delta)
        margin = float(min(lo.min(), 1.0 - hi.max()))

        def ev(points):
            m = np.broadcast_to(mode, (points.shape[1],))
            phase = np.cos(2.0 * np.pi * (points @ m))
            return base[None, :] + phase[:, None] * delta[None, :]

        return cls("cosine-simplex", base.size - 1,
                   {"base": base.tolist(), "delta": delta.tolist(),
                    "mode": np.atleast_1d(mode).tolist()},
                   ev, margin)

    @classmethod
    def from_config(cls, cfg):
        cfg = dict(cfg)
        name = cfg.pop("name", None)
        if name == "constant":
            return cls.constant(cfg["values"])
        if name == "cosine-simplex":
            return cls.cosine_simplex(cfg["base"], cfg["delta"], cfg.get("mode", 1))
        raise ValueError(f"unknown profile name {name!r}")
