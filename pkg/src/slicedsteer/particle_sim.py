"""Discrete-time ensemble simulation under sliced and baseline controllers.

Particles follow the zero-order-hold single integrator ``x_{k+1} = x_k + h u_k``
with ``h = T / T_d``. Controllers:

* ``iterative-sliced``: one random direction per step, gain ``1/(T - t_k)``;
* ``receding-horizon``: same correction with the constant step ``1/T``;
* ``orthogonal-basis``: receding-horizon correction along all axes of a random
  orthonormal basis at once (iterative distribution transfer);
* ``ideal-affine``: ``K x + eta`` from the Gaussian covariance flow;
* ``min-energy``: displacement interpolation with the Gaussian Brenier map.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ConfigurationError
from .gaussian_steering import (
    GaussianFlow,
    SteeringProblem,
    affine_controller,
    brenier_map_gaussian,
    integrate_covariance,
    min_energy_velocity,
)
from .sliced_core import (
    GaussianLaw,
    ParticleEnsemble,
    check_direction,
    project,
    random_unit_vectors,
    sample_directions,
    sw2,
    transport_samples,
)

CONTROLLERS = ("iterative-sliced", "receding-horizon", "orthogonal-basis", "ideal-affine", "min-energy")

Target = Union[GaussianLaw, ParticleEnsemble]


@dataclass(frozen=True)
class DirectionSpec:
    M: int = 512
    scheme: str = "deterministic-angular"
    seed: int | None = 0

    def build(self, n: int):
        return sample_directions(n, self.M, self.scheme, self.seed)


@dataclass(frozen=True)
class SimConfig:
    T: float = 1.0
    T_d: int = 1000
    N: int = 5000
    seed: int = 0
    controller: str = "iterative-sliced"
    dirs: DirectionSpec | None = None
    record_every: int = 1
    flow_steps: int = 4000
    epsilon: float | None = None
    # n=2 only: golden-ratio angular sequence instead of i.i.d. directions
    low_discrepancy: bool = False
    track_sw2: bool = False

    def __post_init__(self):
        if not isinstance(self.T_d, (int, np.integer)) or self.T_d < 1:
            raise ConfigurationError(f"T_d must be an integer >= 1, got {self.T_d!r}")
        if not isinstance(self.N, (int, np.integer)) or self.N < 2:
            raise ConfigurationError(f"N must be an integer >= 2, got {self.N!r}")
        if not self.T > 0:
            raise ConfigurationError(f"T must be positive, got {self.T!r}")
        if self.controller not in CONTROLLERS:
            raise ConfigurationError(f"unknown controller {self.controller!r}; choose from {CONTROLLERS}")
        if self.record_every < 1:
            raise ConfigurationError("record_every must be >= 1")
        if self.controller == "ideal-affine" and self.dirs is None:
            raise ConfigurationError("ideal-affine controller requires direction settings (dirs)")

    @property
    def h(self) -> float:
        return self.T / self.T_d


@dataclass
class SimResult:
    snapshots: list[ParticleEnsemble]
    energy: float
    weighted_energy: float
    per_step_sw2: list[float] | None = None
    config: SimConfig | None = field(default=None, repr=False)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    def paths(self) -> np.ndarray:
        """Array of shape (snapshots, N, n)."""
        return np.stack([s.points for s in self.snapshots])


# ---------------------------------------------------------------------------
# Single steps
# ---------------------------------------------------------------------------


def _target_projection(target: Target, theta):
    return project(target, theta)


def _direction_correction(points: np.ndarray, target: Target, theta: np.ndarray) -> np.ndarray:
    """Per-particle ``th'x - T_th(th'x)`` for the current empirical projection."""
    s = points @ theta
    return s - transport_samples(s, _target_projection(target, theta))


def _iterative_control(points, k, T_d, h, target, theta) -> np.ndarray:
    remaining = (T_d - k) * h  # T - t_k
    return -np.multiply.outer(_direction_correction(points, target, theta) / remaining, theta)


def _receding_control(points, T, h, target, theta) -> np.ndarray:
    # the displacement -(1/T)(...)theta is applied in one step, i.e. u = displacement / h
    return -np.multiply.outer(_direction_correction(points, target, theta) / (T * h), theta)


def _basis_control(points, T, h, target, basis) -> np.ndarray:
    u = np.zeros_like(points)
    for theta in basis:
        u -= np.multiply.outer(_direction_correction(points, target, theta) / (T * h), theta)
    return u


def iterative_step(ens: ParticleEnsemble, k: int, config: SimConfig, target: Target, theta) -> ParticleEnsemble:
    """Apply the iterative sliced controller along ``theta`` at step ``k``.

    At ``k = T_d - 1`` each projected coordinate lands on its mapped value.
    """
    if not 0 <= k < config.T_d:
        raise ConfigurationError(f"step k={k} outside [0, {config.T_d})")
    theta = check_direction(theta)
    h = config.h
    u = _iterative_control(ens.points, k, config.T_d, h, target, theta)
    return ParticleEnsemble(ens.points + h * u, (k + 1) * h)


def receding_horizon_step(ens: ParticleEnsemble, k: int, config: SimConfig, target: Target, theta) -> ParticleEnsemble:
    """``x <- x - (1/T)(th'x - T_th(th'x)) th``: a gradient step of size 1/T."""
    theta = check_direction(theta)
    h = config.h
    u = _receding_control(ens.points, config.T, h, target, theta)
    return ParticleEnsemble(ens.points + h * u, (k + 1) * h)


def random_orthonormal_basis(rng: np.random.Generator, n: int) -> np.ndarray:
    """Rows form a Haar-distributed orthonormal basis."""
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    Q = Q * np.sign(np.diag(R))
    return Q.T


def _check_basis(basis: np.ndarray, n: int) -> np.ndarray:
    basis = np.asarray(basis, dtype=float)
    if basis.shape != (n, n) or np.max(np.abs(basis @ basis.T - np.eye(n))) > 1e-10:
        raise ConfigurationError("slicing directions must form an orthonormal basis")
    return basis


def orthogonal_basis_step(ens: ParticleEnsemble, k: int, config: SimConfig, target: Target, basis=None) -> ParticleEnsemble:
    """Receding-horizon correction summed over the rows of an orthonormal basis.

    Without ``basis`` a random rotation is drawn from a generator keyed on
    ``(config.seed, k)``.
    """
    if basis is None:
        basis = random_orthonormal_basis(np.random.default_rng((config.seed, k)), ens.n)
    basis = _check_basis(basis, ens.n)
    h = config.h
    u = _basis_control(ens.points, config.T, h, target, basis)
    return ParticleEnsemble(ens.points + h * u, (k + 1) * h)


# ---------------------------------------------------------------------------
# Full runs
# ---------------------------------------------------------------------------


def _direction_schedule(config: SimConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    if config.low_discrepancy:
        if n != 2:
            raise ConfigurationError("low-discrepancy direction schedule is only defined for n=2")
        golden = (np.sqrt(5.0) - 1.0) / 2.0
        phi = np.pi * ((rng.random() + golden * np.arange(config.T_d)) % 1.0)
        return np.column_stack([np.cos(phi), np.sin(phi)])
    return random_unit_vectors(rng, config.T_d, n)


def initial_ensemble(config: SimConfig, problem: SteeringProblem) -> ParticleEnsemble:
    ens_seed, _ = np.random.SeedSequence(config.seed).spawn(2)
    rng = np.random.default_rng(ens_seed)
    return ParticleEnsemble(problem.initial.sample(config.N, rng), 0.0)


def run(
    config: SimConfig,
    problem: SteeringProblem,
    target: Target | None = None,
    initial: ParticleEnsemble | None = None,
    flow: GaussianFlow | None = None,
) -> SimResult:
    """Simulate ``T_d`` steps of the configured controller.

    The initial ensemble is drawn from ``problem.initial`` (unless given) and the
    target defaults to ``problem.target``. Energy accumulates ``h mean_i |u_i|^2``
    per step; ``weighted_energy`` accumulates the exact held-control integral of
    ``(T - t)|u|^2``.
    """
    if abs(config.T - problem.T) > 1e-12 * problem.T:
        raise ConfigurationError(f"config horizon {config.T} differs from problem horizon {problem.T}")
    target = problem.target if target is None else target
    n = problem.n
    ens = initial_ensemble(config, problem) if initial is None else initial
    _, dir_seed = np.random.SeedSequence(config.seed).spawn(2)
    dir_rng = np.random.default_rng(dir_seed)
    T, T_d, h = config.T, config.T_d, config.h

    # all random directions are drawn before stepping, in a fixed order
    schedule = None
    bases = None
    if config.controller in ("iterative-sliced", "receding-horizon"):
        schedule = _direction_schedule(config, n, dir_rng)
    elif config.controller == "orthogonal-basis":
        bases = [random_orthonormal_basis(dir_rng, n) for _ in range(T_d)]

    dirs = config.dirs.build(n) if config.dirs is not None else None
    if config.controller == "ideal-affine" and flow is None:
        flow = integrate_covariance(problem, dirs, config.flow_steps, config.epsilon)
    brenier = brenier_map_gaussian(problem) if config.controller == "min-energy" else None
    track = config.track_sw2 and dirs is not None

    X = np.array(ens.points, dtype=float)
    snapshots = [ParticleEnsemble(X.copy(), 0.0)]
    sw_series = [sw2(snapshots[0], target, dirs)] if track else None
    energy = 0.0
    weighted = 0.0
    for k in range(T_d):
        t_k = k * h
        c = config.controller
        if c == "iterative-sliced":
            u = _iterative_control(X, k, T_d, h, target, schedule[k])
        elif c == "receding-horizon":
            u = _receding_control(X, T, h, target, schedule[k])
        elif c == "orthogonal-basis":
            u = _basis_control(X, T, h, target, bases[k])
        elif c == "ideal-affine":
            ctrl = affine_controller(t_k, flow.covariance_at(min(t_k, flow.t_end)), flow.mean_at(min(t_k, flow.t_end)), problem, dirs)
            u = ctrl(X)
        else:
            u = min_energy_velocity(t_k, X, problem, brenier)
        sq = float(np.mean(np.einsum("ij,ij->i", u, u)))
        energy += h * sq
        weighted += h * (T - t_k - 0.5 * h) * sq
        X = X + h * u
        if (k + 1) % config.record_every == 0 or k + 1 == T_d:
            snap = ParticleEnsemble(X.copy(), (k + 1) * h)
            snapshots.append(snap)
            if track:
                sw_series.append(sw2(snap, target, dirs))
    return SimResult(snapshots, energy, weighted, sw_series, config)


def empirical_energy(result: SimResult) -> float:
    """Accumulated ``sum_k h mean_i |u_{k,i}|^2`` stored by :func:`run`."""
    return result.energy


def chord_deviation(paths: np.ndarray) -> np.ndarray:
    """Per-particle maximum distance of a recorded path from the chord joining its endpoints.

    ``paths`` has shape (snapshots, N, n).
    """
    start, end = paths[0], paths[-1]
    d = end - start
    L = np.linalg.norm(d, axis=1)
    safe = np.where(L > 0, L, 1.0)
    e = d / safe[:, None]
    rel = paths - start[None]
    along = np.einsum("sij,ij->si", rel, e)
    perp = rel - along[..., None] * e[None]
    dev = np.linalg.norm(perp, axis=2)
    dev = np.where(L[None] > 0, dev, np.linalg.norm(rel, axis=2))
    return dev.max(axis=0)


def time_chord_deviation(paths: np.ndarray, times) -> np.ndarray:
    """Per-particle maximum distance between ``x(t)`` and the constant-velocity
    chord ``x(0) + (t/t_end)(x(t_end) - x(0))`` over the recorded times.

    Zero for straight, uniformly traversed paths (the displacement interpolation);
    positive for paths that bend in space or change speed.
    """
    times = np.asarray(times, dtype=float)
    frac = (times - times[0]) / (times[-1] - times[0])
    chord = paths[0][None] + frac[:, None, None] * (paths[-1] - paths[0])[None]
    return np.linalg.norm(paths - chord, axis=2).max(axis=0)
