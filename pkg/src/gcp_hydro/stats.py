"""Noise covariance tables, predicted fluctuation variances, and Monte Carlo
summaries.

The per-site covariance matrix gamma_x collects the jump-driven quadratic
variation of the fluctuation field: every jump moves one unit of occupation
between cyclically adjacent states, which fixes the tridiagonal-plus-corner
band structure and zero row sums.  Predicted variances propagate the initial
covariance through the adjoint flow and accumulate the gamma form along the
trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hydro import DensityField, ModelParams, Trajectory


def gamma_field(u: DensityField, params: ModelParams) -> np.ndarray:
    """Per-site symmetric (k+1, k+1) covariance tables, shape (N, k+1, k+1).

    Entries follow the jump bookkeeping: the top state feeds the recovery
    rate a, every lower state feeds the kernel intensity; for k = 1 the two
    adjacency clauses target the same off-diagonal entry and add up.
    """
    u.validate()
    k = u.k
    uu = u.u
    conv = params.kernel.conv(uu[:, k])
    n = uu.shape[0]
    g = np.zeros((n, k + 1, k + 1))
    g[:, k, k] = params.a * uu[:, k] + conv * uu[:, k - 1]
    g[:, 0, 0] = params.a * uu[:, k] + conv * uu[:, 0]
    for i in range(1, k):
        g[:, i, i] = conv * (uu[:, i - 1] + uu[:, i])
    for i in range(k + 1):
        j = (i + 1) % (k + 1)
        val = -params.a * uu[:, k] if i == k else -conv * uu[:, i]
        g[:, i, j] += val
        g[:, j, i] += val
    return g


def gamma_quadratic(u: DensityField, params: ModelParams, vec) -> np.ndarray:
    """Per-site values <gamma_x v_x, v_x> for a per-site vector field v."""
    g = gamma_field(u, params)
    return np.einsum("xij,xi,xj->x", g, vec, vec)


def predicted_initial_cov(u0: DensityField, f, g, i, j) -> float:
    """Initial-field covariance: lattice Riemann sum of the product-measure
    indicator covariance paired with the two test functions."""
    fv = f.values_on(u0.lattice)
    gv = g.values_on(u0.lattice)
    ui = u0.u[:, i]
    if i == j:
        return float(np.mean(fv * gv * ui * (1.0 - ui)))
    return float(-np.mean(fv * gv * ui * u0.u[:, j]))


def initial_cov_vector(u0, gvec, hvec) -> float:
    """Initial covariance extended bilinearly to per-site vector test data."""
    uu = u0.u if isinstance(u0, DensityField) else np.asarray(u0)
    gu = np.sum(gvec * uu, axis=1)
    hu = np.sum(hvec * uu, axis=1)
    return float(np.mean(np.sum(gvec * hvec * uu, axis=1) - gu * hu))


def predicted_variance_mild(f, i, t, u_traj: Trajectory, params: ModelParams) -> float:
    """Variance of the time-t fluctuation pairing predicted by the mild solution.

    Runs the adjoint flow from the terminal datum f e_i back to time zero,
    takes the initial covariance of the transported datum, and adds the
    trapezoid-accumulated gamma quadratic form along the trajectory.
    """
    from .hydro import backward_fp

    idx = u_traj.index_of(t)
    sub = Trajectory(u_traj.lattice, u_traj.k, u_traj.times[:idx + 1],
                     u_traj.u[:idx + 1])
    terminal = np.zeros((u_traj.lattice.n_sites, u_traj.k + 1))
    terminal[:, i] = f.values_on(u_traj.lattice)
    bw = backward_fp(terminal, sub, params)
    var0 = initial_cov_vector(u_traj.u[0], bw.g[0], bw.g[0])
    if idx == 0:
        return var0
    q = np.empty(idx + 1)
    for m in range(idx + 1):
        um = DensityField(u_traj.lattice, u_traj.k, u_traj.u[m])
        q[m] = float(np.mean(gamma_quadratic(um, params, bw.g[m])))
    return var0 + float(np.trapezoid(q, dx=sub.step))


@dataclass
class RateFit:
    """Ordinary least squares of log error against log size."""

    log_n: np.ndarray
    log_error: np.ndarray
    slope: float
    intercept: float
    slope_se: float


def rate_fit(pairs) -> RateFit:
    pairs = list(pairs)
    if len(pairs) < 3:
        raise ValueError("rate fit needs at least 3 (n, error) points")
    n = np.array([float(p[0]) for p in pairs])
    e = np.array([float(p[1]) for p in pairs])
    if np.any(e <= 0.0):
        raise ValueError("rate fit needs strictly positive errors")
    x, y = np.log(n), np.log(e)
    xc = x - x.mean()
    slope = float(np.dot(xc, y) / np.dot(xc, xc))
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    dof = max(len(pairs) - 2, 1)
    slope_se = float(np.sqrt(np.dot(resid, resid) / dof / np.dot(xc, xc)))
    return RateFit(x, y, slope, intercept, slope_se)


@dataclass
class McSummary:
    """Moment summary of one scalar Monte Carlo observable."""

    n_replicas: int
    mean: float
    variance: float
    std_error: float
    skewness: float
    excess_kurtosis: float
    skewness_se: float
    kurtosis_se: float


def _moment_stats(s1, s2, s3, s4, n):
    """Skewness and excess kurtosis from raw power sums (vectorized)."""
    mean = s1 / n
    m2 = s2 / n - mean ** 2
    m3 = s3 / n - 3.0 * mean * s2 / n + 2.0 * mean ** 3
    m4 = s4 / n - 4.0 * mean * s3 / n + 6.0 * mean ** 2 * s2 / n - 3.0 * mean ** 4
    skew = m3 / m2 ** 1.5
    kurt = m4 / m2 ** 2 - 3.0
    return skew, kurt


def normality_diagnostics(samples) -> McSummary:
    """Sample moments with jackknife standard errors for the shape statistics."""
    x = np.asarray(samples, dtype=float)
    n = len(x)
    if n < 500:
        raise ValueError("normality diagnostics need at least 500 samples")
    var = float(np.var(x, ddof=1))
    if var <= 0.0:
        raise ValueError("degenerate samples: zero variance")
    s1, s2, s3, s4 = (np.sum(x ** p) for p in (1, 2, 3, 4))
    skew, kurt = _moment_stats(s1, s2, s3, s4, n)
    # leave-one-out statistics from the same power sums
    skew_i, kurt_i = _moment_stats(s1 - x, s2 - x ** 2, s3 - x ** 3, s4 - x ** 4, n - 1)
    jack = (n - 1) / n
    skew_se = float(np.sqrt(jack * np.sum((skew_i - skew_i.mean()) ** 2)))
    kurt_se = float(np.sqrt(jack * np.sum((kurt_i - kurt_i.mean()) ** 2)))
    return McSummary(n, float(np.mean(x)), var, float(np.sqrt(var / n)),
                     float(skew), float(kurt), skew_se, kurt_se)
