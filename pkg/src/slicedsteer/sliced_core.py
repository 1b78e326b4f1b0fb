"""Projections, one-dimensional laws and transport maps, and the sliced
Wasserstein distance.

All distances are returned squared. Laws in the ambient space are either a
:class:`GaussianLaw` (exact) or a :class:`ParticleEnsemble` (empirical); their
projections onto a unit direction are :class:`GaussianParams` or
:class:`Empirical` one-dimensional laws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import ndtri

from .errors import ConfigurationError, DomainError

UNIT_TOL = 1e-12

SCHEMES = ("deterministic-angular", "monte-carlo")


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def check_direction(theta) -> np.ndarray:
    """Return ``theta`` as a float vector, raising if it is not a unit vector."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1:
        raise DomainError(f"direction must be a vector, got shape {theta.shape}")
    if abs(np.linalg.norm(theta) - 1.0) > UNIT_TOL:
        raise DomainError(f"direction is not unit length (norm={np.linalg.norm(theta)!r})")
    return theta


# ---------------------------------------------------------------------------
# Direction sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DirectionSet:
    """Quadrature on the unit sphere: ``directions`` has shape (M, n)."""

    directions: np.ndarray
    weights: np.ndarray
    scheme: str
    seed: int | None = None

    def __post_init__(self):
        dirs = _frozen(self.directions)
        w = _frozen(self.weights)
        if dirs.ndim != 2 or w.shape != (dirs.shape[0],):
            raise ConfigurationError("directions must be (M, n) with M weights")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "deterministic-angular" and dirs.shape[1] != 2:
            raise ConfigurationError("deterministic-angular quadrature exists only for n=2")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigurationError("weights must be nonnegative and sum to 1")
        if np.max(np.abs(np.linalg.norm(dirs, axis=1) - 1.0)) > UNIT_TOL:
            raise ConfigurationError("directions must be unit vectors")
        object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.directions.shape[1]

    def __len__(self) -> int:
        return self.directions.shape[0]

    def second_moment(self) -> np.ndarray:
        """Quadrature value of the integral of theta theta^T (exactly I/n in the limit)."""
        return np.einsum("m,mi,mj->ij", self.weights, self.directions, self.directions)

    def rotated(self, Q) -> "DirectionSet":
        """Directions mapped by an orthogonal matrix; weights unchanged."""
        Q = np.asarray(Q, dtype=float)
        dirs = self.directions @ Q.T
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        scheme = self.scheme if self.n == 2 else "monte-carlo"
        return DirectionSet(dirs, self.weights, scheme, self.seed)


def sample_directions(
    n: int, M: int, scheme: str = "deterministic-angular", seed: int | None = None
) -> DirectionSet:
    """Build a direction quadrature on the unit sphere of R^n.

    ``deterministic-angular`` (n=2 only) places M midpoints on the half circle
    ``phi_j = (j + 1/2) pi / M``; every integrand used here is even in theta, so
    the half circle is enough. ``monte-carlo`` normalizes M standard Gaussian
    draws from a generator seeded with ``seed``.
    """
    if n < 1 or M < 1:
        raise ConfigurationError(f"need n >= 1 and M >= 1, got n={n}, M={M}")
    if scheme == "deterministic-angular":
        if n != 2:
            raise ConfigurationError(f"deterministic-angular requires n=2, got n={n}")
        phi = (np.arange(M) + 0.5) * np.pi / M
        dirs = np.column_stack([np.cos(phi), np.sin(phi)])
    elif scheme == "monte-carlo":
        rng = np.random.default_rng(seed)
        g = rng.standard_normal((M, n))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        # zero-norm draws have probability zero; redraw anyway to keep the contract
        while np.any(norms == 0):
            bad = norms[:, 0] == 0
            g[bad] = rng.standard_normal((int(bad.sum()), n))
            norms = np.linalg.norm(g, axis=1, keepdims=True)
        dirs = g / norms
    else:
        raise ConfigurationError(f"unknown scheme {scheme!r}")
    return DirectionSet(dirs, np.full(M, 1.0 / M), scheme, seed)


def random_unit_vectors(rng: np.random.Generator, count: int, n: int) -> np.ndarray:
    """``count`` i.i.d. uniform directions on the sphere, consumed from ``rng``."""
    g = rng.standard_normal((count, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# One-dimensional laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianParams:
    mean: float
    variance: float

    def __post_init__(self):
        if not (self.variance > 0 and math.isfinite(self.variance)):
            raise DomainError(f"Gaussian variance must be positive, got {self.variance!r}")
        if not math.isfinite(self.mean):
            raise DomainError("Gaussian mean must be finite")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True, eq=False)
class Empirical:
    """Uniform-weight empirical law stored as nondecreasing samples."""

    sorted_samples: np.ndarray

    def __post_init__(self):
        s = _frozen(self.sorted_samples)
        if s.ndim != 1 or s.size == 0:
            raise DomainError("empirical law needs a nonempty 1-D sample vector")
        if np.any(np.diff(s) < 0):
            raise DomainError("empirical samples must be sorted nondecreasing")
        object.__setattr__(self, "sorted_samples", s)

    @classmethod
    def from_samples(cls, samples) -> "Empirical":
        return cls(np.sort(np.asarray(samples, dtype=float)))

    @property
    def size(self) -> int:
        return self.sorted_samples.size

    def midpoint_cdf(self, s):
        """CDF with midpoint ranks (i - 1/2)/N, linear between samples and
        clamped to [1/(2N), 1 - 1/(2N)] outside the sample range."""
        N = self.size
        ranks = (np.arange(1, N + 1) - 0.5) / N
        return np.interp(s, self.sorted_samples, ranks)


Dist1D = Union[GaussianParams, Empirical]


def _quantiles(d: Dist1D, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if isinstance(d, GaussianParams):
        return d.mean + d.std * ndtri(p)
    N = d.size
    idx = np.clip(np.ceil(p * N).astype(np.int64) - 1, 0, N - 1)
    return d.sorted_samples[idx]


def quantile(d: Dist1D, p):
    """Left-continuous quantile ``inf{s : F(s) >= p}``.

    For an empirical law this is the ``ceil(p N)``-th smallest sample. Accepts a
    scalar or array of probabilities in the open interval (0, 1).
    """
    p_arr = np.asarray(p, dtype=float)
    if np.any(~((p_arr > 0) & (p_arr < 1))):
        raise DomainError("quantile level must lie in (0, 1)")
    q = _quantiles(d, p_arr)
    return float(q) if np.ndim(q) == 0 else q


# ---------------------------------------------------------------------------
# Monotone maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AffineMap:
    slope: float
    intercept: float

    def __post_init__(self):
        if not self.slope > 0:
            raise DomainError("affine transport map needs a positive slope")

    def __call__(self, s):
        return self.slope * np.asarray(s, dtype=float) + self.intercept


@dataclass(frozen=True, eq=False)
class QuantileComposedMap:
    """``s -> F_target^{-1}(F_source(s))`` with a midpoint-rank source CDF."""

    source: Dist1D
    target: Dist1D

    def _source_cdf(self, s):
        if isinstance(self.source, Empirical):
            return self.source.midpoint_cdf(s)
        from scipy.special import ndtr

        return ndtr((np.asarray(s, dtype=float) - self.source.mean) / self.source.std)

    def __call__(self, s):
        p = np.asarray(self._source_cdf(s), dtype=float)
        if isinstance(self.source, GaussianParams):
            # keep Gaussian-source tails finite for an unbounded target
            eps = np.finfo(float).eps
            p = np.clip(p, eps, 1 - eps)
        return _quantiles(self.target, p)


Map1D = Union[AffineMap, QuantileComposedMap]


def ot_map_1d(source: Dist1D, target: Dist1D) -> Map1D:
    """Optimal monotone transport map between two one-dimensional laws."""
    if isinstance(source, GaussianParams) and isinstance(target, GaussianParams):
        slope = math.sqrt(target.variance / source.variance)
        return AffineMap(slope, target.mean - slope * source.mean)
    return QuantileComposedMap(source, target)


def transport_samples(samples, target: Dist1D) -> np.ndarray:
    """Image of each sample under the optimal map from its empirical law to ``target``.

    Equivalent to ``ot_map_1d(Empirical.from_samples(samples), target)(samples)``
    for distinct samples, computed by ranking so ties are matched one to one.
    The result is in the original sample order.
    """
    samples = np.asarray(samples, dtype=float)
    N = samples.size
    order = np.argsort(samples, kind="stable")
    levels = (np.arange(1, N + 1) - 0.5) / N
    out = np.empty(N)
    out[order] = _quantiles(target, levels)
    return out


# ---------------------------------------------------------------------------
# Ambient laws and projections
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GaussianLaw:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        m = _frozen(np.atleast_1d(self.mean))
        S = _frozen(np.atleast_2d(self.covariance))
        n = m.size
        if m.ndim != 1 or S.shape != (n, n):
            raise DomainError(f"mean/covariance shapes disagree: {m.shape} vs {S.shape}")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(S))):
            raise DomainError("Gaussian parameters must be finite")
        if np.max(np.abs(S - S.T)) > 1e-12 * max(1.0, np.max(np.abs(S))):
            raise DomainError("covariance must be symmetric")
        if np.linalg.eigvalsh(S)[0] <= 0:
            raise DomainError("covariance must be positive definite")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "covariance", S)

    @property
    def n(self) -> int:
        return self.mean.size

    def sample(self, N: int, rng: np.random.Generator) -> np.ndarray:
        L = np.linalg.cholesky(self.covariance)
        return self.mean + rng.standard_normal((N, self.n)) @ L.T


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    points: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        X = _frozen(self.points)
        if X.ndim != 2 or X.shape[0] < 2:
            raise DomainError(f"ensemble needs an (N, n) array with N >= 2, got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise DomainError("ensemble coordinates must be finite")
        if self.time < 0:
            raise DomainError("ensemble time must be nonnegative")
        object.__setattr__(self, "points", X)

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def mean(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def covariance(self) -> np.ndarray:
        return np.cov(self.points, rowvar=False, bias=True).reshape(self.n, self.n)


def project_gaussian(law: GaussianLaw, theta) -> GaussianParams:
    theta = check_direction(theta)
    if theta.size != law.n:
        raise DomainError("direction and law dimensions differ")
    return GaussianParams(float(theta @ law.mean), float(theta @ law.covariance @ theta))


def project_ensemble(ens: ParticleEnsemble, theta) -> Empirical:
    theta = check_direction(theta)
    if theta.size != ens.n:
        raise DomainError("direction and ensemble dimensions differ")
    return Empirical.from_samples(ens.points @ theta)


def project(law, theta) -> Dist1D:
    if isinstance(law, GaussianLaw):
        return project_gaussian(law, theta)
    if isinstance(law, ParticleEnsemble):
        return project_ensemble(law, theta)
    raise TypeError(f"cannot project {type(law).__name__}")


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------


def _default_grid(*dists) -> int:
    sizes = [d.size for d in dists if isinstance(d, Empirical)]
    return max(sizes) if sizes else 1000


def w2_1d(mu: Dist1D, nu: Dist1D, quantile_grid: int | None = None) -> float:
    """Squared 1-D Wasserstein distance.

    Gaussian pairs use ``(m1 - m2)^2 + (s1 - s2)^2``. Other pairs integrate the
    squared quantile difference with the midpoint rule on ``quantile_grid``
    levels; the default grid (the larger sample size) is exact for equal-size
    empirical pairs.
    """
    if isinstance(mu, GaussianParams) and isinstance(nu, GaussianParams):
        return (mu.mean - nu.mean) ** 2 + (mu.std - nu.std) ** 2
    G = _default_grid(mu, nu) if quantile_grid is None else int(quantile_grid)
    if G < 1:
        raise DomainError("quantile_grid must be >= 1")
    z = (np.arange(1, G + 1) - 0.5) / G
    diff = _quantiles(mu, z) - _quantiles(nu, z)
    return float(np.mean(diff**2))


def _projected_quantiles(law, dirs: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Quantile table of shape (G, M) for each direction column."""
    if isinstance(law, GaussianLaw):
        means = dirs @ law.mean
        stds = np.sqrt(np.einsum("mi,ij,mj->m", dirs, law.covariance, dirs))
        return means[None, :] + ndtri(z)[:, None] * stds[None, :]
    proj = np.sort(law.points @ dirs.T, axis=0)
    N = proj.shape[0]
    idx = np.clip(np.ceil(z * N).astype(np.int64) - 1, 0, N - 1)
    return proj[idx]


def sliced_w2_per_direction(mu, nu, dirs: DirectionSet, quantile_grid: int | None = None) -> np.ndarray:
    """Vector of squared 1-D distances, one per quadrature direction."""
    for law in (mu, nu):
        if law.n != dirs.n:
            raise DomainError("law and direction set dimensions differ")
    D = dirs.directions
    if isinstance(mu, GaussianLaw) and isinstance(nu, GaussianLaw):
        dm = D @ (mu.mean - nu.mean)
        s1 = np.sqrt(np.einsum("mi,ij,mj->m", D, mu.covariance, D))
        s2 = np.sqrt(np.einsum("mi,ij,mj->m", D, nu.covariance, D))
        return dm**2 + (s1 - s2) ** 2
    sizes = [law.size for law in (mu, nu) if isinstance(law, ParticleEnsemble)]
    G = max(sizes) if quantile_grid is None else int(quantile_grid)
    if G < 1:
        raise DomainError("quantile_grid must be >= 1")
    z = (np.arange(1, G + 1) - 0.5) / G
    out = np.empty(len(dirs))
    chunk = max(1, 2_000_000 // max(G, 1))
    for start in range(0, len(dirs), chunk):
        block = D[start : start + chunk]
        diff = _projected_quantiles(mu, block, z) - _projected_quantiles(nu, block, z)
        out[start : start + chunk] = np.mean(diff**2, axis=0)
    return out


def sw2(mu, nu, dirs: DirectionSet, quantile_grid: int | None = None) -> float:
    """Squared sliced Wasserstein distance: weighted average of per-direction W2^2.

    ``mu`` and ``nu`` may each be a :class:`GaussianLaw` or a
    :class:`ParticleEnsemble`.
    """
    per_dir = sliced_w2_per_direction(mu, nu, dirs, quantile_grid)
    return float(np.dot(dirs.weights, per_dir))
