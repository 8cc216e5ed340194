"""Method-of-lines integration of the per-state density dynamics.

The lattice system couples the (k+1)-vector u_x at every site through the
normalized kernel convolution of the top-state density:

    du_x/dt = A u_x + (J^n * u^k)_x M u_x

with A the recover-to-zero generator and M the raise-one-state stencil.
Alongside the forward solver this module provides the adjoint (backward)
flow used to predict fluctuation variances, a fine-lattice reference run,
and a discretization-convergence study.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import TorusLattice, KernelSpec, DiscreteKernel, discretize

MASS_TOL = 1e-9


def build_A(a, k) -> np.ndarray:
    """Recovery generator: state k decays at rate a and lands at state 0."""
    A = np.zeros((k + 1, k + 1))
    A[0, k] = a
    A[k, k] = -a
    return A


def build_M(k) -> np.ndarray:
    """Kernel-drive stencil: mass moves from state i to i+1 for i < k."""
    M = np.zeros((k + 1, k + 1))
    for i in range(1, k + 1):
        M[i, i - 1] = 1.0
    for i in range(0, k):
        M[i, i] = -1.0
    return M


def colsum_norm(m) -> float:
    """Max absolute column sum, the operator-norm surrogate used for step control."""
    return float(np.max(np.abs(m).sum(axis=0))) if m.size else 0.0


class ModelParams:
    """Static description of the dynamics: recovery rate a, top state k, kernel."""

    def __init__(self, a, k, kernel: DiscreteKernel):
        if a <= 0:
            raise ValueError("recovery rate a must be > 0")
        if k < 1:
            raise ValueError("threshold state k must be >= 1")
        self.a = float(a)
        self.k = int(k)
        self.kernel = kernel
        self.A = build_A(self.a, self.k)
        self.M = build_M(self.k)

    @property
    def lattice(self) -> TorusLattice:
        return self.kernel.lattice

    def lipschitz_scale(self) -> float:
        """||A|| + ||J||_{1,n} ||M||, the growth rate entering step-size control."""
        return colsum_norm(self.A) + self.kernel.norm_1n * colsum_norm(self.M)

    def default_step(self) -> float:
        return min(1e-2, 0.1 / max(self.lipschitz_scale(), 1e-12))


@dataclass
class DensityField:
    """Per-site probability vectors over states {0..k}."""

    lattice: TorusLattice
    k: int
    u: np.ndarray  # (N, k+1)

    def validate(self, atol=MASS_TOL):
        if self.u.shape != (self.lattice.n_sites, self.k + 1):
            raise ValueError(f"density array has shape {self.u.shape}, expected "
                             f"({self.lattice.n_sites}, {self.k + 1})")
        if not np.all(np.isfinite(self.u)):
            raise ValueError("density field has non-finite entries")
        if np.any(self.u < -atol):
            raise ValueError("density field has negative components")
        if np.max(np.abs(self.u.sum(axis=1) - 1.0)) > atol:
            raise ValueError("per-site state probabilities do not sum to 1")
        return self

    def copy(self) -> "DensityField":
        return DensityField(self.lattice, self.k, self.u.copy())


def profile_field(profile, lattice: TorusLattice) -> DensityField:
    """Sample an initial profile at the embedded lattice points x/n."""
    u = profile.evaluate(lattice.positions())
    return DensityField(lattice, profile.k, u).validate()


@dataclass
class Trajectory:
    """Density trajectory on a uniform time grid."""

    lattice: TorusLattice
    k: int
    times: np.ndarray        # (T+1,)
    u: np.ndarray            # (T+1, N, k+1)
    renormalizations: int = 0

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def index_of(self, t) -> int:
        i = int(round((t - self.times[0]) / self.step)) if self.step else 0
        if i < 0 or i >= len(self.times) or abs(self.times[i] - t) > 1e-9:
            raise ValueError(f"time {t} is not on the trajectory grid")
        return i

    def field_at(self, t) -> DensityField:
        return DensityField(self.lattice, self.k, self.u[self.index_of(t)])

    def final(self) -> DensityField:
        return DensityField(self.lattice, self.k, self.u[-1])


def drift(u, params: ModelParams) -> np.ndarray:
    """Right-hand side A u_x + (J^n * u^k)_x M u_x, per site."""
    U = u.u if isinstance(u, DensityField) else np.asarray(u, dtype=float)
    conv = params.kernel.conv(U[:, params.k])
    out = U @ params.A.T + conv[:, None] * (U @ params.M.T)
    if not np.all(np.isfinite(out)):
        raise ValueError("drift produced non-finite values")
    return out


def _grid(t_end, h):
    if h <= 0:
        raise ValueError("step h must be > 0")
    if t_end < 0:
        raise ValueError("t_end must be >= 0")
    steps = max(int(round(t_end / h)), 1) if t_end > 0 else 0
    return steps, (t_end / steps if steps else h)


def integrate(u0: DensityField, params: ModelParams, t_end, h=None) -> Trajectory:
    """Classical fixed-step RK4 for the density system on {0, h, ..., t_end}.

    Per-site mass is monitored each step; deviations beyond the tolerance are
    renormalized and counted rather than silently absorbed.  Negative
    components beyond the tolerance abort with a step-size failure.
    """
    u0.validate()
    if u0.k != params.k or u0.lattice != params.lattice:
        raise ValueError("initial field does not match model parameters")
    if h is None:
        h = params.default_step()
    steps, h = _grid(t_end, h)
    out = np.empty((steps + 1,) + u0.u.shape)
    out[0] = u0.u
    renorms = 0
    u = u0.u.copy()
    for m in range(steps):
        k1 = drift(u, params)
        k2 = drift(u + 0.5 * h * k1, params)
        k3 = drift(u + 0.5 * h * k2, params)
        k4 = drift(u + h * k3, params)
        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(u)):
            raise ValueError(f"non-finite state at step {m + 1}; reduce h")
        if np.min(u) < -MASS_TOL:
            raise ValueError(f"positivity floor violated at step {m + 1} "
                             f"(min component {np.min(u):.3e}); reduce h")
        sums = u.sum(axis=1)
        if np.max(np.abs(sums - 1.0)) > MASS_TOL:
            u = u / sums[:, None]
            renorms += 1
        out[m + 1] = u
    times = np.linspace(0.0, steps * h, steps + 1)
    return Trajectory(u0.lattice, u0.k, times, out, renormalizations=renorms)


def reference_continuum(profile, spec: KernelSpec, a, k, t_end, n_ref, d=1, h=None) -> Trajectory:
    """Fine-lattice run standing in for the continuum solution.

    n_ref should be at least 4x the largest lattice under study; the study
    lattices must divide n_ref so restriction is plain subsampling.
    """
    lattice = TorusLattice(d, n_ref)
    params = ModelParams(a, k, discretize(spec, lattice))
    return integrate(profile_field(profile, lattice), params, t_end, h=h)


def restrict(fine: DensityField, coarse: TorusLattice) -> DensityField:
    """Subsample a fine-lattice field onto a coarser lattice with n | n_ref."""
    ratio, rem = divmod(fine.lattice.n, coarse.n)
    if rem != 0 or fine.lattice.d != coarse.d:
        raise ValueError(f"coarse side {coarse.n} must divide fine side {fine.lattice.n}")
    idx = fine.lattice.index(coarse.coords(np.arange(coarse.n_sites)) * ratio)
    return DensityField(coarse, fine.k, fine.u[idx])


@dataclass
class ConvergenceTable:
    """Sup-norm errors against the reference run, with a log-log slope fit."""

    sizes: list
    errors: list
    fit: object  # stats.RateFit, or None when errors sit at the noise floor

    def rows(self):
        return list(zip(self.sizes, self.errors))


def convergence_study(n_list, spec: KernelSpec, profile, a, k, t_end,
                      n_ref=None, d=1, h=None, error_floor=1e-13) -> ConvergenceTable:
    """Integrate on each lattice in n_list and compare against a fine reference."""
    n_list = sorted(int(n) for n in n_list)
    if len(n_list) < 3:
        raise ValueError("convergence study needs at least 3 lattice sizes")
    if n_ref is None:
        n_ref = 4 * n_list[-1]
    for n in n_list:
        if n_ref % n != 0:
            raise ValueError(f"study size n={n} must divide the reference size {n_ref}")
    ref = reference_continuum(profile, spec, a, k, t_end, n_ref, d=d, h=h).final()
    errors = []
    for n in n_list:
        lattice = TorusLattice(d, n)
        params = ModelParams(a, k, discretize(spec, lattice))
        final = integrate(profile_field(profile, lattice), params, t_end, h=h).final()
        diff = final.u - restrict(ref, lattice).u
        errors.append(float(np.max(np.abs(diff))))
    fit = None
    if min(errors) > error_floor:
        from .stats import rate_fit
        fit = rate_fit(list(zip(n_list, errors)))
    return ConvergenceTable(list(n_list), errors, fit)


def trajectory_header(k) -> tuple:
    return ("t", "site") + tuple(f"u{i}" for i in range(k + 1))


def trajectory_rows(traj: Trajectory):
    """Long-format rows (t, site, u0..uk) for CSV export."""
    for m, t in enumerate(traj.times):
        for x in range(traj.lattice.n_sites):
            yield (float(t), x) + tuple(float(v) for v in traj.u[m, x])


def write_trajectory_csv(traj: Trajectory, path):
    from .io_utils import write_csv
    write_csv(path, trajectory_header(traj.k), trajectory_rows(traj))


@dataclass
class BackwardTestField:
    """Adjoint flow P_s f on [0, t]: g[m] approximates P_{times[m]} f."""

    lattice: TorusLattice
    k: int
    times: np.ndarray     # (T+1,), same grid as the forward trajectory
    g: np.ndarray         # (T+1, N, k+1); g[-1] is the terminal datum

    def at(self, s) -> np.ndarray:
        i = int(round((s - self.times[0]) / (self.times[1] - self.times[0])))
        if abs(self.times[i] - s) > 1e-9:
            raise ValueError(f"time {s} is not on the backward grid")
        return self.g[i]


def backward_fp(f_terminal, u_traj: Trajectory, params: ModelParams) -> BackwardTestField:
    """Solve the adjoint equation backward from g_t = f on the trajectory grid.

        ds g + A* g + (J^n * u^k_s) M* g + (J^n* * <g, M u_s>) e_k = 0

    Coefficients at the RK4 midpoints use cubic Hermite interpolation of the
    forward trajectory, keeping the fourth-order accuracy of the march.
    """
    f = np.asarray(f_terminal, dtype=float)
    if f.shape != u_traj.u.shape[1:]:
        raise ValueError(f"terminal field has shape {f.shape}, trajectory states "
                         f"have shape {u_traj.u.shape[1:]}")
    if not np.all(np.isfinite(f)):
        raise ValueError("terminal field has non-finite entries")
    times = u_traj.times
    steps = len(times) - 1
    h = u_traj.step
    A, M, kern, k = params.A, params.M, params.kernel, params.k

    def rhs(u_nodes, g):
        # ds g = -(A* g + conv(u^k) M* g + conv_adjoint(<g, M u>) e_k)
        conv = kern.conv(u_nodes[:, k])
        inner = np.sum(g * (u_nodes @ M.T), axis=1)
        out = g @ A + conv[:, None] * (g @ M)
        out[:, k] += kern.conv_adjoint(inner)
        return -out

    out = np.empty((steps + 1,) + f.shape)
    out[steps] = f
    g = f.copy()
    if steps:
        du = np.array([drift(u_traj.u[m], params) for m in range(steps + 1)])
    for m in range(steps - 1, -1, -1):
        u0, u1 = u_traj.u[m], u_traj.u[m + 1]
        umid = 0.5 * (u0 + u1) + (h / 8.0) * (du[m] - du[m + 1])
        k1 = rhs(u1, g)
        k2 = rhs(umid, g - 0.5 * h * k1)
        k3 = rhs(umid, g - 0.5 * h * k2)
        k4 = rhs(u0, g - h * k3)
        g = g - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[m] = g
    return BackwardTestField(u_traj.lattice, u_traj.k, times.copy(), out)
