"""Piecewise-linear Gaussian mixture regression model.

Each component couples a Gaussian over pixel space, ``x ~ N(c, Gamma)``,
with an affine response ``y = A x + b + e``, ``e ~ N(0, sigma)``. Note that
``sigma`` is a variance. All densities are evaluated in log space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyKeptSet, SingularCovariance

SIGMA_FLOOR = 1e-12
RIDGE = 1e-9
MAX_COND = 1e12
LOG_2PI = float(np.log(2.0 * np.pi))


def regularize_cov(gamma) -> np.ndarray:
    """Symmetrise a 2x2 covariance and ridge it when ill-conditioned.

    The ridge is ``1e-9 * trace * I``; an all-zero scatter gets an absolute
    ridge of ``1e-9`` instead so that single-point clusters stay invertible.
    """
    g = np.asarray(gamma, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise SingularCovariance("covariance has non-finite entries")
    g = 0.5 * (g + g.T)
    w = np.linalg.eigvalsh(g)
    tr = float(np.trace(g))
    if w[0] < -1e-9 * max(abs(tr), 1.0):
        raise SingularCovariance(f"covariance is not positive semidefinite: eigenvalues {w}")
    if w[0] <= 0 or w[1] > MAX_COND * w[0]:
        g = g + RIDGE * (tr if tr > 0 else 1.0) * np.eye(2)
        if np.linalg.eigvalsh(g)[0] <= 0:
            raise SingularCovariance("covariance not invertible after ridge")
    return g


@dataclass(frozen=True)
class Component:
    c: np.ndarray
    Gamma: np.ndarray
    A: np.ndarray
    b: float
    sigma: float
    pi: float


@dataclass(frozen=True)
class JointMoments:
    m: np.ndarray
    V: np.ndarray


@dataclass(frozen=True)
class Mixture:
    """K components stored as stacked arrays.

    ``ids`` tracks each component's index in the initial mixture so that
    deletions stay traceable.
    """

    c: np.ndarray  # (K, 2)
    Gamma: np.ndarray  # (K, 2, 2)
    A: np.ndarray  # (K, 2)
    b: np.ndarray  # (K,)
    sigma: np.ndarray  # (K,)
    pi: np.ndarray  # (K,)
    ids: np.ndarray  # (K,)

    @property
    def k(self) -> int:
        return len(self.pi)

    def component(self, i: int) -> Component:
        return Component(c=self.c[i].copy(), Gamma=self.Gamma[i].copy(), A=self.A[i].copy(),
                         b=float(self.b[i]), sigma=float(self.sigma[i]), pi=float(self.pi[i]))

    @property
    def components(self) -> list:
        return [self.component(i) for i in range(self.k)]

    @classmethod
    def from_components(cls, comps, ids=None) -> "Mixture":
        if len(comps) == 0:
            raise ValueError("a mixture needs at least one component")
        return cls(
            c=np.array([np.asarray(q.c, dtype=float) for q in comps]).reshape(-1, 2),
            Gamma=np.array([np.asarray(q.Gamma, dtype=float) for q in comps]).reshape(-1, 2, 2),
            A=np.array([np.asarray(q.A, dtype=float).ravel() for q in comps]).reshape(-1, 2),
            b=np.array([float(q.b) for q in comps]),
            sigma=np.array([float(q.sigma) for q in comps]),
            pi=np.array([float(q.pi) for q in comps]),
            ids=np.arange(len(comps)) if ids is None else np.asarray(ids, dtype=np.int64),
        )

    def select(self, keep) -> "Mixture":
        """Keep the components indexed by ``keep`` and renormalise the priors."""
        keep = np.asarray(keep)
        pi = self.pi[keep]
        total = pi.sum()
        return Mixture(c=self.c[keep], Gamma=self.Gamma[keep], A=self.A[keep], b=self.b[keep],
                       sigma=self.sigma[keep], pi=pi / total if total > 0 else pi,
                       ids=self.ids[keep])

    def with_pi(self, pi) -> "Mixture":
        return Mixture(c=self.c, Gamma=self.Gamma, A=self.A, b=self.b, sigma=self.sigma,
                       pi=np.asarray(pi, dtype=float), ids=self.ids)


def joint_moments(comp: Component) -> JointMoments:
    c = np.asarray(comp.c, dtype=float)
    G = np.asarray(comp.Gamma, dtype=float)
    A = np.asarray(comp.A, dtype=float).ravel()
    m = np.array([c[0], c[1], A @ c + comp.b])
    GA = G @ A
    V = np.empty((3, 3))
    V[:2, :2] = G
    V[:2, 2] = GA
    V[2, :2] = GA
    V[2, 2] = comp.sigma + A @ GA
    return JointMoments(m=m, V=V)


def _log_gauss2(x, c, gamma):
    g = regularize_cov(gamma)
    det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
    inv = np.array([[g[1, 1], -g[0, 1]], [-g[1, 0], g[0, 0]]]) / det
    du = x[:, 0] - c[0]
    dv = x[:, 1] - c[1]
    maha = inv[0, 0] * du * du + 2.0 * inv[0, 1] * du * dv + inv[1, 1] * dv * dv
    return -LOG_2PI - 0.5 * np.log(det) - 0.5 * maha


def _log_gauss1(res, sigma):
    var = max(float(sigma), SIGMA_FLOOR)
    return -0.5 * (LOG_2PI + np.log(var)) - 0.5 * res * res / var


def log_component_densities(mix: Mixture, x, y) -> np.ndarray:
    """``log(N(y; A x + b, sigma) N(x; c, Gamma))`` for every sample and component.

    Returns an (N, K) array.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
    y = np.asarray(y, dtype=np.float64).ravel()
    out = np.empty((len(y), mix.k))
    for k in range(mix.k):
        res = y - (x @ mix.A[k] + mix.b[k])
        out[:, k] = _log_gauss1(res, mix.sigma[k]) + _log_gauss2(x, mix.c[k], mix.Gamma[k])
    return out


def component_weighted_density(comp: Component, x, y) -> float:
    """Density of one summand of the mixture, without its prior."""
    mix = Mixture.from_components([comp])
    return float(np.exp(log_component_densities(mix, np.atleast_2d(x), [y])[0, 0]))


@dataclass(frozen=True)
class ResponsibilityTable:
    """Per-sample, per-component quantities of one expectation step.

    ``log_u`` holds ``log p(y|x,k) p(x|k)``; ``log_pi`` the priors used;
    ``r`` the row-normalised responsibilities; ``log_rn`` the log of the
    unnormalised row sums. ``zero_row`` marks samples whose total density
    underflowed; those are never kept.
    """

    log_u: np.ndarray
    log_pi: np.ndarray
    r: np.ndarray
    log_rn: np.ndarray
    kept: np.ndarray
    zero_row: np.ndarray

    @property
    def n(self) -> int:
        return self.r.shape[0]

    @property
    def k(self) -> int:
        return self.r.shape[1]

    @property
    def u(self) -> np.ndarray:
        return np.exp(self.log_u)

    @property
    def r_unnorm(self) -> np.ndarray:
        return np.exp(self.log_u + self.log_pi)

    @property
    def r_n(self) -> np.ndarray:
        return np.exp(self.log_rn)

    @property
    def r_k(self) -> np.ndarray:
        return self.r[self.kept].sum(axis=0)

    def map_component(self) -> np.ndarray:
        """MAP component per sample; ties go to the lowest component index."""
        return np.argmax(self.r, axis=1)

    def with_kept(self, kept) -> "ResponsibilityTable":
        kept = np.asarray(kept, dtype=bool) & ~self.zero_row
        return ResponsibilityTable(log_u=self.log_u, log_pi=self.log_pi, r=self.r,
                                   log_rn=self.log_rn, kept=kept, zero_row=self.zero_row)


def table_from_log_u(log_u, pi, kept=None) -> ResponsibilityTable:
    """Normalise precomputed log densities with priors ``pi``."""
    log_u = np.asarray(log_u, dtype=np.float64)
    with np.errstate(divide="ignore"):
        log_pi = np.log(np.asarray(pi, dtype=np.float64))
    # one (N, K) scratch array, reused in place: it ends up holding r
    r = log_u + log_pi
    top = r.max(axis=1)
    zero_row = ~np.isfinite(top)
    safe_top = np.where(zero_row, 0.0, top)
    with np.errstate(invalid="ignore"):
        r -= safe_top[:, None]
        np.exp(r, out=r)
    r[zero_row] = 0.0
    tot = r.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r /= np.where(zero_row, 1.0, tot)[:, None]
        log_rn = np.where(zero_row, -np.inf, safe_top + np.log(tot))
    keep = ~zero_row if kept is None else (np.asarray(kept, dtype=bool) & ~zero_row)
    return ResponsibilityTable(log_u=log_u, log_pi=log_pi, r=r, log_rn=log_rn,
                               kept=keep, zero_row=zero_row)


def responsibilities(mix: Mixture, samples) -> ResponsibilityTable:
    log_u = log_component_densities(mix, samples.x, samples.y)
    return table_from_log_u(log_u, mix.pi)


def observed_log_likelihood(table: ResponsibilityTable) -> float:
    """Sum of ``log r_n`` over the kept samples."""
    if not table.kept.any():
        raise EmptyKeptSet("no kept samples")
    return float(np.sum(table.log_rn[table.kept]))


def expected_complete_ll(mix: Mixture, table: ResponsibilityTable, samples) -> float:
    """Expected complete-data log-likelihood with per-component ``1/r_k`` weights.

    Diagnostic only; the fit loop converges on ``observed_log_likelihood``.
    """
    r = table.r[table.kept]
    log_joint = table.log_u[table.kept] + table.log_pi
    rk = r.sum(axis=0)
    total = 0.0
    for k in range(r.shape[1]):
        if rk[k] <= 0:
            continue
        w = r[:, k]
        nz = w > 0
        total += float(np.sum(w[nz] * log_joint[nz, k])) / rk[k]
    return total
