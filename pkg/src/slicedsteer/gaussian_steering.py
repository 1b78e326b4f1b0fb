"""Closed-form machinery for steering between Gaussian laws.

The ideal sliced controller is affine for Gaussian marginals,
``v(t, x) = K(t, Sigma) x + eta(t, Sigma)``, with

    K(t, Sigma) = lambda(t) [ int sqrt(th' Sf th / th' Sigma th) th th' dsigma - I/n ],
    lambda(t)  = 1 / (T - t).

The covariance obeys ``Sigma' = K Sigma + Sigma K'`` and the mean
``m' = -(lambda/n)(m - m_f)``. Both are integrated in the logarithmic time
``tau = -log(T - t)``, where ``lambda dt = dtau`` and the right-hand side no
longer depends on time explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .errors import DomainError, ExtrapolationError, HorizonError, IntegrationError
from .sliced_core import (
    DirectionSet,
    GaussianLaw,
    ot_map_1d,
    project_gaussian,
    sample_directions,
)


@dataclass(frozen=True, eq=False)
class SteeringProblem:
    initial: GaussianLaw
    target: GaussianLaw
    T: float = 1.0

    def __post_init__(self):
        if self.initial.n != self.target.n:
            raise DomainError("initial and target dimensions differ")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise DomainError(f"horizon must be positive, got {self.T!r}")

    @property
    def n(self) -> int:
        return self.initial.n

    def lam(self, t: float) -> float:
        if t >= self.T:
            raise HorizonError(f"gain undefined at t={t!r} >= T={self.T!r}")
        return 1.0 / (self.T - t)

    def tau(self, t):
        return -np.log(self.T - np.asarray(t, dtype=float))

    def time_from_tau(self, tau):
        return self.T - np.exp(-np.asarray(tau, dtype=float))


def benchmark_problem(T: float = 1.0) -> SteeringProblem:
    """The two-dimensional Gaussian pair used in the numerical experiments."""
    return SteeringProblem(
        GaussianLaw([-2.0, 2.0], [[1.0, 0.2], [0.2, 0.5]]),
        GaussianLaw([-8.0, 4.0], [[0.1, 0.0], [0.0, 0.04]]),
        T,
    )


@dataclass(frozen=True, eq=False)
class AffineController:
    gain: np.ndarray
    offset: np.ndarray
    t: float

    def __call__(self, x):
        return np.asarray(x, dtype=float) @ self.gain.T + self.offset


# ---------------------------------------------------------------------------
# Gain and offset
# ---------------------------------------------------------------------------


def _check_spd(S: np.ndarray, what: str = "Sigma") -> None:
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise DomainError(f"{what} is not positive definite") from None


def ratio_moment(Sigma, target_Sigma, dirs: DirectionSet) -> np.ndarray:
    """Quadrature of ``sqrt(th' Sf th / th' Sigma th) th th'``, symmetrized."""
    Sigma = np.asarray(Sigma, dtype=float)
    target_Sigma = np.asarray(target_Sigma, dtype=float)
    _check_spd(Sigma)
    D = dirs.directions
    d = np.einsum("mi,ij,mj->m", D, Sigma, D)
    g = np.einsum("mi,ij,mj->m", D, target_Sigma, D)
    R = np.einsum("m,mi,mj->ij", dirs.weights * np.sqrt(g / d), D, D)
    return 0.5 * (R + R.T)


def normalized_gain(Sigma, target_Sigma, dirs: DirectionSet) -> np.ndarray:
    """``K / lambda``: time-free part of the gain."""
    n = dirs.n
    return ratio_moment(Sigma, target_Sigma, dirs) - np.eye(n) / n


def gain_matrix(t: float, Sigma, target_Sigma, T: float, dirs: DirectionSet) -> np.ndarray:
    if t >= T:
        raise HorizonError(f"gain undefined at t={t!r} >= T={T!r}")
    return normalized_gain(Sigma, target_Sigma, dirs) / (T - t)


def offset_vector(t: float, Sigma, m, problem: SteeringProblem, dirs: DirectionSet, gain=None) -> np.ndarray:
    """Offset ``eta`` chosen so that ``K m + eta = -(lambda/n)(m - m_f)`` exactly."""
    K = gain_matrix(t, Sigma, problem.target.covariance, problem.T, dirs) if gain is None else gain
    m = np.asarray(m, dtype=float)
    lam = problem.lam(t)
    return -K @ m - (lam / problem.n) * (m - problem.target.mean)


def affine_controller(t: float, Sigma, m, problem: SteeringProblem, dirs: DirectionSet) -> AffineController:
    K = gain_matrix(t, Sigma, problem.target.covariance, problem.T, dirs)
    eta = offset_vector(t, Sigma, m, problem, dirs, gain=K)
    if not (np.all(np.isfinite(K)) and np.all(np.isfinite(eta))):
        raise IntegrationError("non-finite affine controller", time=t)
    return AffineController(K, eta, t)


# ---------------------------------------------------------------------------
# Mean and covariance flow
# ---------------------------------------------------------------------------


def mean_trajectory(problem: SteeringProblem, t: float) -> np.ndarray:
    """Closed form ``m_f + ((T - t)/T)^(1/n) (m_0 - m_f)``."""
    T = problem.T
    if not (0 <= t <= T):
        raise DomainError(f"t={t!r} outside [0, {T!r}]")
    mf = problem.target.mean
    if t == T:
        return mf.copy()
    return mf + ((T - t) / T) ** (1.0 / problem.n) * (problem.initial.mean - mf)


def covariance_rhs_tau(Sigma, target_Sigma, dirs: DirectionSet) -> np.ndarray:
    """Right-hand side ``dSigma/dtau = Kbar Sigma + Sigma Kbar'``."""
    Kb = normalized_gain(Sigma, target_Sigma, dirs)
    return Kb @ Sigma + Sigma @ Kb.T


def _rk4_step(Sigma, dtau, target_Sigma, dirs):
    f = lambda S: covariance_rhs_tau(S, target_Sigma, dirs)  # noqa: E731
    k1 = f(Sigma)
    k2 = f(Sigma + 0.5 * dtau * k1)
    k3 = f(Sigma + 0.5 * dtau * k2)
    k4 = f(Sigma + dtau * k3)
    out = Sigma + (dtau / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return 0.5 * (out + out.T)


def propagate_covariance(problem: SteeringProblem, dirs: DirectionSet, Sigma, t_from: float, t_to: float, steps: int):
    """RK4 transport of ``Sigma`` between two times (either direction) in tau."""
    Sigma = np.asarray(Sigma, dtype=float)
    tau0, tau1 = problem.tau(t_from), problem.tau(t_to)
    dtau = (tau1 - tau0) / steps
    S = Sigma.copy()
    for i in range(steps):
        try:
            S = _rk4_step(S, dtau, problem.target.covariance, dirs)
            np.linalg.cholesky(S)
        except (DomainError, np.linalg.LinAlgError):
            t_fail = float(problem.time_from_tau(tau0 + (i + 1) * dtau))
            raise IntegrationError(f"covariance lost positive definiteness near t={t_fail:.6g}", time=t_fail) from None
    return S


@dataclass(frozen=True, eq=False)
class GaussianFlow:
    """Mean and covariance on an increasing time grid ending at ``T - epsilon``."""

    problem: SteeringProblem
    taus: np.ndarray
    times: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def covariance_at(self, t: float) -> np.ndarray:
        """Covariance at ``t`` by linear interpolation in tau; ``t = T`` snaps to the target."""
        if t == self.problem.T:
            return self.problem.target.covariance.copy()
        if t < 0 or t > self.t_end * (1 + 1e-15) + 1e-300:
            raise ExtrapolationError(f"t={t!r} outside flow grid [0, {self.t_end!r}]")
        tau = float(self.problem.tau(min(t, self.t_end)))
        j = int(np.clip(np.searchsorted(self.taus, tau) - 1, 0, len(self.taus) - 2))
        a = (tau - self.taus[j]) / (self.taus[j + 1] - self.taus[j])
        S = (1 - a) * self.covariances[j] + a * self.covariances[j + 1]
        return 0.5 * (S + S.T)

    def mean_at(self, t: float) -> np.ndarray:
        if t > self.t_end and t != self.problem.T:
            raise ExtrapolationError(f"t={t!r} outside flow grid [0, {self.t_end!r}]")
        return mean_trajectory(self.problem, t)


def integrate_covariance(
    problem: SteeringProblem,
    dirs: DirectionSet,
    steps: int = 4000,
    epsilon: float | None = None,
    resample_seed: int | None = None,
) -> GaussianFlow:
    """Integrate the covariance ODE with fixed-step RK4 on an equispaced tau grid
    from ``tau = -log T`` to ``tau = -log epsilon`` (``epsilon`` defaults to 1e-6 T).

    With ``resample_seed`` set, a fresh Monte Carlo direction set of the same
    size is drawn at every step instead of reusing ``dirs``.
    """
    if steps < 10:
        raise DomainError("need at least 10 integration steps")
    T = problem.T
    eps = 1e-6 * T if epsilon is None else float(epsilon)
    if not (0 < eps < T):
        raise DomainError(f"epsilon must lie in (0, T), got {eps!r}")
    if dirs.n != problem.n:
        raise DomainError("direction set and problem dimensions differ")
    tau0, tau1 = -math.log(T), -math.log(eps)
    taus = np.linspace(tau0, tau1, steps + 1)
    dtau = taus[1] - taus[0]
    Sf = problem.target.covariance
    covs = np.empty((steps + 1, problem.n, problem.n))
    covs[0] = problem.initial.covariance
    rng = np.random.default_rng(resample_seed) if resample_seed is not None else None
    S = covs[0].copy()
    for i in range(steps):
        step_dirs = dirs
        if rng is not None:
            step_dirs = sample_directions(problem.n, len(dirs), "monte-carlo", seed=int(rng.integers(2**63)))
        t_fail = float(T - math.exp(-taus[i + 1]))
        try:
            S = _rk4_step(S, dtau, Sf, step_dirs)
            np.linalg.cholesky(S)
        except (DomainError, np.linalg.LinAlgError):
            raise IntegrationError(f"covariance lost positive definiteness near t={t_fail:.6g}", time=t_fail) from None
        if not np.all(np.isfinite(S)):
            raise IntegrationError(f"non-finite covariance near t={t_fail:.6g}", time=t_fail)
        covs[i + 1] = S
    times = T - np.exp(-taus)
    times[0] = 0.0
    means = np.array([mean_trajectory(problem, float(t)) for t in times])
    return GaussianFlow(problem, taus, times, means, covs)


# ---------------------------------------------------------------------------
# Velocities
# ---------------------------------------------------------------------------


def ideal_velocity(t: float, x, flow: GaussianFlow, problem: SteeringProblem, dirs: DirectionSet) -> np.ndarray:
    """Ideal sliced controller ``K(t, Sigma(t)) x + eta(t, Sigma(t))``; ``x`` may be (n,) or (N, n)."""
    if t > flow.t_end:
        raise ExtrapolationError(f"t={t!r} beyond flow grid end {flow.t_end!r}")
    Sigma = flow.covariance_at(t)
    return affine_controller(t, Sigma, flow.mean_at(t), problem, dirs)(x)


def direct_sliced_velocity(t: float, x, m, Sigma, problem: SteeringProblem, dirs: DirectionSet) -> np.ndarray:
    """Slice-by-slice evaluation ``-lambda sum_j w_j (th'x - T_th(th'x)) th`` using
    the one-dimensional maps between projected Gaussians."""
    x = np.asarray(x, dtype=float)
    current = GaussianLaw(m, 0.5 * (np.asarray(Sigma) + np.asarray(Sigma).T))
    lam = problem.lam(t)
    v = np.zeros_like(x, dtype=float)
    for theta, w in zip(dirs.directions, dirs.weights):
        tmap = ot_map_1d(project_gaussian(current, theta), project_gaussian(problem.target, theta))
        s = x @ theta
        v = v + w * np.multiply.outer(s - tmap(s), theta)
    return -lam * v


def sw2_rate(t: float, m, Sigma, problem: SteeringProblem, dirs: DirectionSet) -> float:
    """Analytic ``d/dt SW2^2 = -2 lambda (tr(Kbar Sigma Kbar') + |m - m_f|^2 / n^2)``."""
    Kb = normalized_gain(Sigma, problem.target.covariance, dirs)
    dm = np.asarray(m, dtype=float) - problem.target.mean
    inner = np.trace(Kb @ Sigma @ Kb.T) + float(dm @ dm) / problem.n**2
    return -2.0 * problem.lam(t) * inner


def _control_second_moments(flow: GaussianFlow, dirs: DirectionSet) -> np.ndarray:
    """``E|Kbar x + etabar|^2`` at every grid point of the flow."""
    p = flow.problem
    out = np.empty(len(flow.taus))
    for i, (m, S) in enumerate(zip(flow.means, flow.covariances)):
        Kb = normalized_gain(S, p.target.covariance, dirs)
        dm = m - p.target.mean
        out[i] = np.trace(Kb @ S @ Kb.T) + float(dm @ dm) / p.n**2
    return out


def ideal_energy(
    problem: SteeringProblem, dirs: DirectionSet, steps: int = 4000, epsilon: float | None = None, flow: GaussianFlow | None = None
) -> float:
    """Expected control energy ``E int_0^{T-eps} |u|^2 dt`` of the ideal sliced controller.

    Evaluated as ``int lambda E|Kbar x + etabar|^2 dtau`` with Simpson's rule on
    the tau grid of :func:`integrate_covariance`. For n >= 2 this grows without
    bound as ``epsilon -> 0``.
    """
    flow = integrate_covariance(problem, dirs, steps, epsilon) if flow is None else flow
    lam = np.exp(flow.taus)
    return float(simpson(lam * _control_second_moments(flow, dirs), x=flow.taus))


def weighted_energy(
    problem: SteeringProblem, dirs: DirectionSet, steps: int = 4000, epsilon: float | None = None, flow: GaussianFlow | None = None
) -> float:
    """Horizon-weighted energy ``E int_0^{T-eps} (T - t) |u|^2 dt = int E|Kbar x + etabar|^2 dtau``.

    Tends to ``SW2(rho_0, rho_f)^2 / 2`` as ``epsilon -> 0``.
    """
    flow = integrate_covariance(problem, dirs, steps, epsilon) if flow is None else flow
    return float(simpson(_control_second_moments(flow, dirs), x=flow.taus))


# ---------------------------------------------------------------------------
# Minimum-energy baseline
# ---------------------------------------------------------------------------


def sym_sqrt(S) -> np.ndarray:
    """Symmetric square root by eigendecomposition, eigenvalues floored at 1e-14 tr(S)."""
    S = 0.5 * (np.asarray(S, dtype=float) + np.asarray(S, dtype=float).T)
    try:
        w, V = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"eigendecomposition failed: {exc}") from exc
    w = np.maximum(w, 1e-14 * np.trace(S))
    return (V * np.sqrt(w)) @ V.T


def brenier_map_gaussian(problem: SteeringProblem) -> tuple[np.ndarray, np.ndarray]:
    """Optimal affine map ``x -> A x + b`` pushing the initial Gaussian to the target."""
    S0, Sf = problem.initial.covariance, problem.target.covariance
    r0 = sym_sqrt(S0)
    r0_inv = np.linalg.inv(r0)
    A = r0_inv @ sym_sqrt(r0 @ Sf @ r0) @ r0_inv
    A = 0.5 * (A + A.T)
    b = problem.target.mean - A @ problem.initial.mean
    return A, b


def _interp_matrix(t: float, T: float, A: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    return ((T - t) / T) * np.eye(n) + (t / T) * A


def min_energy_velocity(t: float, x, problem: SteeringProblem, brenier=None) -> np.ndarray:
    """Velocity of the displacement interpolation ``x(t) = ((T-t)/T) z + (t/T) (A z + b)``.

    Each particle moves on a straight line at constant speed ``(A z + b - z)/T``.
    """
    T = problem.T
    if not (0 <= t < T):
        raise DomainError(f"t={t!r} outside [0, T)")
    A, b = brenier_map_gaussian(problem) if brenier is None else brenier
    x = np.asarray(x, dtype=float)
    B = _interp_matrix(t, T, A)
    rhs = (x - (t / T) * b).T
    try:
        z = np.linalg.solve(B, rhs).T
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"singular interpolation matrix at t={t!r}") from exc
    return (z @ (A - np.eye(A.shape[0])).T + b) / T


def min_energy_moments(problem: SteeringProblem, t: float, brenier=None) -> tuple[np.ndarray, np.ndarray]:
    """Exact mean and covariance of the displacement interpolation at time ``t``."""
    A, b = brenier_map_gaussian(problem) if brenier is None else brenier
    B = _interp_matrix(t, problem.T, A)
    m = B @ problem.initial.mean + (t / problem.T) * b
    S = B @ problem.initial.covariance @ B.T
    return m, 0.5 * (S + S.T)
