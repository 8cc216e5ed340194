"""Monte Carlo soundness checks for the moment-generating-function bounds the
statistical analysis leans on.

Every check is one-sided: an empirical exponential moment is compared against
its claimed bound with a four-standard-error slack.  These are sanity tests of
the constants (the 1/4 index of centered bounded variables, the value 3 for
quadratic exponentials, the 1024 in the bilinear bound), not proofs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# beyond theta ~ 4 the exponential-moment estimator variance explodes
DEFAULT_THETAS = tuple(np.geomspace(0.1, 4.0, 9))


@dataclass
class SubGaussianSample:
    """Sampler for a centered bounded variable with range [-b, a-b]."""

    name: str
    range_length: float          # a; the claimed psi2 bound is a/2
    offset: float                # b
    draw: object                 # callable (rng, size) -> samples

    @property
    def psi2_bound(self) -> float:
        return 0.5 * self.range_length

    def sample(self, rng, size) -> np.ndarray:
        x = np.asarray(self.draw(rng, size), dtype=float)
        lo, hi = -self.offset, self.range_length - self.offset
        if np.min(x) < lo - 1e-12 or np.max(x) > hi + 1e-12:
            raise ValueError(f"sampler {self.name!r} left its declared range "
                             f"[{lo}, {hi}]")
        return x


def zero_sample() -> SubGaussianSample:
    return SubGaussianSample("zero", 1.0, 0.5, lambda rng, size: np.zeros(size))


def centered_indicator(u=0.5) -> SubGaussianSample:
    u = float(u)
    if not 0.0 < u < 1.0:
        raise ValueError("indicator parameter must lie in (0, 1)")
    return SubGaussianSample(f"indicator({u})", 1.0, u,
                             lambda rng, size: (rng.random(size) < u) - u)


def rademacher() -> SubGaussianSample:
    return SubGaussianSample("rademacher", 2.0, 1.0,
                             lambda rng, size: rng.integers(0, 2, size) * 2.0 - 1.0)


@dataclass
class CheckResult:
    name: str
    parameter: float       # the theta or gamma the bound was tested at
    empirical: float
    bound: float
    slack: float           # 4 * SE of the empirical value
    passed: bool

    def row(self):
        return (self.name, self.parameter, self.empirical, self.bound,
                self.slack, int(self.passed))


def _log_mean_exp(values):
    """log mean(e^v) with its delta-method standard error."""
    m = np.mean(np.exp(values))
    se = np.std(np.exp(values), ddof=1) / math.sqrt(len(values))
    return math.log(m), se / m


def check_hoeffding(sample: SubGaussianSample, thetas=DEFAULT_THETAS,
                    replicas=10_000, rng=None) -> list:
    """log E[e^{theta X}] <= theta^2 a^2 / 8 for centered X with range a."""
    if replicas < 10_000:
        raise ValueError("hoeffding check needs at least 1e4 replicas")
    rng = rng or np.random.default_rng(0)
    x = sample.sample(rng, replicas)
    out = []
    for theta in thetas:
        emp, se = _log_mean_exp(theta * x)
        bound = theta ** 2 * sample.range_length ** 2 / 8.0
        out.append(CheckResult(f"hoeffding[{sample.name}]", float(theta),
                               emp, bound, 4.0 * se, emp <= bound + 4.0 * se))
    return out


def check_quad(sample: SubGaussianSample, replicas=10_000, rng=None) -> CheckResult:
    """E[e^{gamma X^2}] <= 3 at gamma = 1 / (4 psi2^2) with psi2 = a/2."""
    if replicas < 10_000:
        raise ValueError("quadratic check needs at least 1e4 replicas")
    rng = rng or np.random.default_rng(0)
    gamma = 1.0 / (4.0 * sample.psi2_bound ** 2)
    x = sample.sample(rng, replicas)
    vals = np.exp(gamma * x ** 2)
    emp = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(replicas))
    return CheckResult(f"quad[{sample.name}]", gamma, emp, 3.0, 4.0 * se,
                       emp <= 3.0 + 4.0 * se)


def check_hanson_wright(size, g, replicas=10_000, rng=None,
                        sample: SubGaussianSample = None) -> CheckResult:
    """E[exp(gamma sum_{i != j} g_ij X_i Y_j)] <= 3 at the bilinear threshold
    gamma = (1024 sum sigma_i^2 sigma_j^2 g_ij^2)^{-1/2}."""
    if replicas < 10_000:
        raise ValueError("bilinear check needs at least 1e4 replicas")
    rng = rng or np.random.default_rng(0)
    sample = sample or rademacher()
    g = np.asarray(g, dtype=float)
    if g.shape != (size, size):
        raise ValueError(f"coefficient matrix must be {size}x{size}")
    if np.any(np.diag(g) != 0.0):
        raise ValueError("coefficient matrix must have zero diagonal")
    s2 = sample.psi2_bound ** 2
    denom = 1024.0 * s2 * s2 * float(np.sum(g ** 2))
    gamma = 1.0 / math.sqrt(denom) if denom > 0 else 1.0
    x = sample.sample(rng, (replicas, size))
    y = sample.sample(rng, (replicas, size))
    quad = np.einsum("ri,ij,rj->r", x, g, y)
    vals = np.exp(gamma * quad)
    emp = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(replicas))
    return CheckResult("hanson-wright", gamma, emp, 3.0, 4.0 * se,
                       emp <= 3.0 + 4.0 * se)


def check_psi2_additivity(s1: SubGaussianSample, s2: SubGaussianSample,
                          thetas=DEFAULT_THETAS, replicas=10_000, rng=None) -> list:
    """For independent X, Y: log E[e^{theta (X+Y)}] <= theta^2 (psi_X^2 + psi_Y^2)/2."""
    rng = rng or np.random.default_rng(0)
    x = s1.sample(rng, replicas)
    y = s2.sample(rng, replicas)
    cap = (s1.psi2_bound ** 2 + s2.psi2_bound ** 2) / 2.0
    out = []
    for theta in thetas:
        emp, se = _log_mean_exp(theta * (x + y))
        bound = theta ** 2 * cap
        out.append(CheckResult(f"psi2-sum[{s1.name}+{s2.name}]", float(theta),
                               emp, bound, 4.0 * se, emp <= bound + 4.0 * se))
    return out


def donsker_varadhan_two_point(mu, density, g, gamma):
    """Both sides of the variational entropy bound on a two-point space.

    Returns (lhs, rhs) of: int g f dmu <= gamma^-1 (int f log f dmu
    + log int e^{gamma g} dmu); everything is computed exactly.
    """
    mu = np.asarray(mu, dtype=float)
    f = np.asarray(density, dtype=float)
    g = np.asarray(g, dtype=float)
    if mu.shape != (2,) or f.shape != (2,) or g.shape != (2,):
        raise ValueError("two-point check needs length-2 vectors")
    if abs(float(mu.sum()) - 1.0) > 1e-12 or np.any(mu <= 0):
        raise ValueError("mu must be a strictly positive probability vector")
    if abs(float((f * mu).sum()) - 1.0) > 1e-12 or np.any(f < 0):
        raise ValueError("density must be nonnegative with unit mu-mass")
    lhs = float(np.sum(g * f * mu))
    with np.errstate(divide="ignore", invalid="ignore"):
        flogf = np.where(f > 0, f * np.log(np.maximum(f, 1e-300)), 0.0)
    ent = float(np.sum(flogf * mu))
    rhs = (ent + math.log(float(np.sum(np.exp(gamma * g) * mu)))) / gamma
    return lhs, rhs
