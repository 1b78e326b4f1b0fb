"""Numerical certification of the Gaussian steering results.

Each check returns a :class:`CheckReport` whose status is recomputable from its
stored numbers. Reports serialize to plain JSON objects.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import erfinv

from .gaussian_steering import (
    SteeringProblem,
    gain_matrix,
    ideal_energy,
    integrate_covariance,
    mean_trajectory,
    propagate_covariance,
    sw2_rate,
    weighted_energy,
)
from .sliced_core import DirectionSet, GaussianLaw, sw2


@dataclass(frozen=True)
class CheckReport:
    name: str
    status: str  # "pass" | "fail" | "inconclusive"
    measured: float
    expected: float
    tolerance: float
    relative: bool = False
    details: str = ""

    @property
    def error(self) -> float:
        err = abs(self.measured - self.expected)
        if self.relative:
            err /= abs(self.expected) if self.expected != 0 else 1.0
        return err

    def within_tolerance(self) -> bool:
        return self.error <= self.tolerance

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        return asdict(self)


def _status(ok: bool) -> str:
    return "pass" if ok else "fail"


def reports_to_json(reports, path=None) -> str:
    """JSON array of report objects; floats are written with full double precision."""
    text = json.dumps([r.to_dict() for r in reports], indent=2)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return text


# ---------------------------------------------------------------------------
# Time derivative of SW2^2
# ---------------------------------------------------------------------------


def _sw2_at(problem, dirs, t, Sigma):
    return sw2(GaussianLaw(mean_trajectory(problem, t), Sigma), problem.target, dirs)


def _central_difference(problem, dirs, t, Sigma, delta, substeps=4):
    Sp = propagate_covariance(problem, dirs, Sigma, t, t + delta, substeps)
    Sm = propagate_covariance(problem, dirs, Sigma, t, t - delta, substeps)
    return (_sw2_at(problem, dirs, t + delta, Sp) - _sw2_at(problem, dirs, t - delta, Sm)) / (2 * delta)


def check_sw2_derivative(
    problem: SteeringProblem,
    dirs: DirectionSet,
    times=None,
    fd_step: float | None = None,
    steps: int = 4000,
    tolerance: float = 1e-4,
) -> CheckReport:
    """Compare the analytic rate of ``t -> SW2(rho(t), rho_f)^2`` with central
    differences along the Gaussian flow, and check the rate is nonpositive on
    the whole flow grid.

    ``Sigma(t)`` at each probe time is integrated exactly to ``t`` (not
    interpolated); the +-fd_step neighbours are propagated from it with RK4.
    A Richardson pair (step and half step) flags the check as inconclusive
    when the two differences disagree by more than half the tolerance.
    """
    T = problem.T
    times = [f * T for f in (0.1, 0.3, 0.5, 0.7)] if times is None else list(times)
    delta = 1e-5 * T if fd_step is None else fd_step
    worst = 0.0
    inconclusive = False
    lines = []
    for t in times:
        n_steps = max(50, math.ceil((problem.tau(t) - problem.tau(0.0)) / 1e-3))
        Sigma = propagate_covariance(problem, dirs, problem.initial.covariance, 0.0, t, n_steps)
        analytic = sw2_rate(t, mean_trajectory(problem, t), Sigma, problem, dirs)
        d1 = _central_difference(problem, dirs, t, Sigma, delta)
        d2 = _central_difference(problem, dirs, t, Sigma, delta / 2)
        fd = (4 * d2 - d1) / 3
        # relative for O(1) rates, absolute near a vanishing rate
        scale = max(abs(analytic), 1.0)
        rel = abs(fd - analytic) / scale
        if abs(d1 - d2) / scale > tolerance / 2:
            inconclusive = True
        worst = max(worst, rel)
        lines.append(f"t={t:.6g}: analytic={analytic:.12g} fd={fd:.12g} rel={rel:.3g}")

    flow = integrate_covariance(problem, dirs, steps)
    rates = np.array([sw2_rate(float(t), m, S, problem, dirs) for t, m, S in zip(flow.times, flow.means, flow.covariances)])
    max_rate = float(rates.max())
    lines.append(f"max analytic rate on flow grid = {max_rate:.3g} (must be <= 0)")
    ok = worst <= tolerance and max_rate <= 0.0
    status = "inconclusive" if (inconclusive and not ok) else _status(ok)
    return CheckReport("sw2_derivative", status, worst, 0.0, tolerance, False, "; ".join(lines))


# ---------------------------------------------------------------------------
# Convergence and energy
# ---------------------------------------------------------------------------


def check_convergence(
    problem: SteeringProblem, dirs: DirectionSet, steps: int = 4000, epsilon: float | None = None, tolerance: float = 1e-3
) -> CheckReport:
    """Covariance and mean residuals at ``T - epsilon``.

    The mean residual should equal ``(epsilon/T)^(1/n) |m_0 - m_f|`` exactly;
    the covariance residual is compared against ``tolerance``.
    """
    eps = 1e-6 * problem.T if epsilon is None else epsilon
    flow = integrate_covariance(problem, dirs, steps, eps)
    sigma_res = float(np.linalg.norm(flow.covariances[-1] - problem.target.covariance))
    mean_res = float(np.linalg.norm(flow.means[-1] - problem.target.mean))
    mean_expected = (eps / problem.T) ** (1.0 / problem.n) * float(np.linalg.norm(problem.initial.mean - problem.target.mean))
    mean_ok = abs(mean_res - mean_expected) <= 1e-9 * max(1.0, mean_expected)
    details = (
        f"covariance residual |Sigma(T-eps) - Sigma_f|_F = {sigma_res:.6g}; "
        f"mean residual = {mean_res:.12g} (closed form {mean_expected:.12g}); eps = {eps:.3g}"
    )
    return CheckReport("convergence", _status(sigma_res <= tolerance and mean_ok), sigma_res, 0.0, tolerance, False, details)


def check_energy_identity(
    problem: SteeringProblem, dirs: DirectionSet, steps: int = 4000, epsilon: float | None = None, rtol: float = 0.005
) -> CheckReport:
    """Expected control energy of the ideal controller against ``SW2(rho_0, rho_f)^2 / 2``."""
    energy = ideal_energy(problem, dirs, steps, epsilon)
    half = 0.5 * sw2(problem.initial, problem.target, dirs)
    rel = abs(energy - half) / half if half else abs(energy)
    ok = rel <= rtol if half else energy <= rtol
    details = f"E int |u|^2 dt = {energy:.12g}; SW2^2/2 = {half:.12g}"
    return CheckReport("energy_identity", _status(ok), energy, half, rtol, True, details)


def check_weighted_energy_identity(
    problem: SteeringProblem, dirs: DirectionSet, steps: int = 4000, epsilon: float | None = None, rtol: float = 0.005
) -> CheckReport:
    """Horizon-weighted energy ``E int (T - t)|u|^2 dt`` against ``SW2(rho_0, rho_f)^2 / 2``."""
    energy = weighted_energy(problem, dirs, steps, epsilon)
    half = 0.5 * sw2(problem.initial, problem.target, dirs)
    rel = abs(energy - half) / half if half else abs(energy)
    ok = rel <= rtol if half else energy <= rtol
    details = f"E int (T-t)|u|^2 dt = {energy:.12g}; SW2^2/2 = {half:.12g}"
    return CheckReport("weighted_energy_identity", _status(ok), energy, half, rtol, True, details)


# ---------------------------------------------------------------------------
# Fixed point of the gain
# ---------------------------------------------------------------------------


def random_spd_perturbations(target_Sigma, count: int, seed: int, min_distance: float = 0.1):
    """Seeded SPD matrices at Frobenius distance >= ``min_distance`` from ``target_Sigma``."""
    rng = np.random.default_rng(seed)
    n = target_Sigma.shape[0]
    out = []
    while len(out) < count:
        B = rng.standard_normal((n, n))
        S = target_Sigma + 0.5 * B @ B.T + 1e-3 * np.eye(n)
        if rng.random() < 0.5:
            # shrink towards a smaller but still SPD matrix as well
            S = 0.5 * (S + S.T) * rng.uniform(0.2, 1.0)
        S = 0.5 * (S + S.T)
        if np.linalg.norm(S - target_Sigma) >= min_distance and np.linalg.eigvalsh(S)[0] > 0:
            out.append(S)
    return out


def check_fixed_point(
    target: GaussianLaw,
    dirs: DirectionSet,
    t: float = 0.0,
    T: float = 1.0,
    tolerance: float = 1e-10,
    probes: int = 20,
    seed: int = 0,
) -> CheckReport:
    """The gain vanishes at the target covariance, and (numerical probe, not a
    proof) stays away from zero on seeded SPD perturbations."""
    Sf = target.covariance
    k_norm = float(np.linalg.norm(gain_matrix(t, Sf, Sf, T, dirs)))
    probe_norms = [float(np.linalg.norm(gain_matrix(t, S, Sf, T, dirs))) for S in random_spd_perturbations(Sf, probes, seed)]
    floor = 10 * max(tolerance, k_norm)
    min_probe = min(probe_norms) if probe_norms else math.inf
    ok = k_norm <= tolerance and min_probe > floor
    details = (
        f"|K(t, Sigma_f)|_F = {k_norm:.3g}; min gain norm over {len(probe_norms)} perturbations = {min_probe:.6g} "
        f"(floor {floor:.3g}); converse probe is a numerical sanity check, not a proof"
    )
    return CheckReport("fixed_point", _status(ok), k_norm, 0.0, tolerance, False, details)


# ---------------------------------------------------------------------------
# Independent brute-force oracle
# ---------------------------------------------------------------------------


def oracle_sw2_bruteforce(mu: GaussianLaw, nu: GaussianLaw, M_angles: int = 4096, grid: int = 100_000) -> float:
    """Squared sliced distance in the plane by a full-circle angular sweep and a
    midpoint quantile grid built from ``erfinv``; no closed-form 1-D Gaussian
    distance is used."""
    if mu.n != 2 or nu.n != 2:
        raise ValueError("brute-force oracle is planar only")
    phi = 2 * np.pi * (np.arange(M_angles) + 0.5) / M_angles
    dirs = np.column_stack([np.cos(phi), np.sin(phi)])
    z = (np.arange(grid) + 0.5) / grid
    std_q = np.sqrt(2.0) * erfinv(2 * z - 1)
    total = 0.0
    for chunk in np.array_split(np.arange(M_angles), max(1, M_angles // 64)):
        D = dirs[chunk]
        q_mu = (D @ mu.mean)[:, None] + np.sqrt(np.sum((D @ mu.covariance) * D, axis=1))[:, None] * std_q[None]
        q_nu = (D @ nu.mean)[:, None] + np.sqrt(np.sum((D @ nu.covariance) * D, axis=1))[:, None] * std_q[None]
        total += float(np.sum(np.mean((q_mu - q_nu) ** 2, axis=1)))
    return total / M_angles


# ---------------------------------------------------------------------------
# Property suite for the sliced distance and 1-D maps
# ---------------------------------------------------------------------------


def random_gaussian_pairs(n: int, count: int, seed: int):
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(count):
        laws = []
        for _ in range(2):
            B = rng.standard_normal((n, n))
            laws.append(GaussianLaw(rng.normal(0, 2, n), B @ B.T + 0.1 * np.eye(n)))
        pairs.append(tuple(laws))
    return pairs


def check_metric_properties(dirs: DirectionSet, count: int = 20, seed: int = 0, tolerance: float = 1e-10) -> CheckReport:
    """Symmetry, nonnegativity and identity of indiscernibles of SW2 on random Gaussian pairs."""
    worst_sym = 0.0
    worst_self = 0.0
    min_dist = math.inf
    for mu, nu in random_gaussian_pairs(dirs.n, count, seed):
        a, b = sw2(mu, nu, dirs), sw2(nu, mu, dirs)
        worst_sym = max(worst_sym, abs(a - b))
        worst_self = max(worst_self, sw2(mu, mu, dirs), sw2(nu, nu, dirs))
        min_dist = min(min_dist, a, b)
    measured = max(worst_sym, worst_self)
    ok = measured <= tolerance and min_dist > tolerance
    details = f"max |SW(mu,nu)-SW(nu,mu)| = {worst_sym:.3g}; max SW(mu,mu) = {worst_self:.3g}; min SW over distinct pairs = {min_dist:.6g}"
    return CheckReport("sw2_metric_properties", _status(ok), measured, 0.0, tolerance, False, details)


def check_map_monotonicity(count: int = 20, seed: int = 0, grid: int = 1000) -> CheckReport:
    """Every 1-D transport map is nondecreasing on a grid over the source's 0.001-0.999 quantile range."""
    from .sliced_core import Empirical, GaussianParams, ot_map_1d, quantile

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        laws = [
            GaussianParams(float(rng.normal()), float(rng.uniform(0.1, 4))),
            Empirical.from_samples(rng.standard_t(3, size=int(rng.integers(2, 200)))),
        ]
        for src in laws:
            for tgt in laws:
                lo, hi = quantile(src, 0.001), quantile(src, 0.999)
                vals = ot_map_1d(src, tgt)(np.linspace(lo, hi, grid))
                worst = max(worst, float(np.max(-np.diff(vals), initial=0.0)))
    return CheckReport("map_monotonicity", _status(worst <= 0.0), worst, 0.0, 0.0, False, "largest decrease between consecutive grid points")
