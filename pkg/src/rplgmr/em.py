"""Trimmed EM fitting of the mixture (k-means start, E/trim/M loop, density check)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .config import FitConfig
from .errors import AllComponentsEmpty, CannotRestoreMonotonicity, TooFewSamples
from .model import (
    SIGMA_FLOOR,
    Mixture,
    ResponsibilityTable,
    observed_log_likelihood,
    regularize_cov,
    responsibilities,
    table_from_log_u,
)

log = logging.getLogger(__name__)

MIN_WEIGHT = 3.0
_CHUNK = 1 << 14


def weighted_component(x, y, w):
    """Closed-form weighted fit of one component.

    Returns ``(c, Gamma, A, b, sigma, r_k)``. Moments are accumulated about
    the weighted means (two-pass) so near-noiseless data keep full precision.
    """
    rk = float(w.sum())
    c = (w @ x) / rk
    dx = x - c
    scatter = (dx.T * w) @ dx
    ybar = float(w @ y) / rk
    cross = (w * (y - ybar)) @ dx
    A = cross @ np.linalg.pinv(scatter)
    b = float(ybar - A @ c)
    res = y - x @ A - b
    sigma = max(float(w @ (res * res)) / rk, SIGMA_FLOOR)
    gamma = regularize_cov(scatter / rk)
    return c, gamma, A, b, sigma, rk


def _assign(pts, centers):
    """Nearest centre (lowest index on ties) and squared distance per point."""
    labels = np.empty(len(pts), dtype=np.int64)
    d2 = np.empty(len(pts))
    cc = np.einsum("ij,ij->i", centers, centers)
    for start in range(0, len(pts), _CHUNK):
        p = pts[start:start + _CHUNK]
        d = cc[None, :] - 2.0 * (p @ centers.T)
        lab = np.argmin(d, axis=1)
        labels[start:start + _CHUNK] = lab
        pp = np.einsum("ij,ij->i", p, p)
        d2[start:start + _CHUNK] = np.maximum(d[np.arange(len(p)), lab] + pp, 0.0)
    return labels, d2


def _lloyd(pts, k, rng, max_iters):
    n = len(pts)
    centers = pts[np.sort(rng.choice(n, size=k, replace=False))].copy()
    labels = None
    for _ in range(max_iters):
        new, d2 = _assign(pts, centers)
        counts = np.bincount(new, minlength=k)
        if np.any(counts == 0):
            # reseed each empty cluster with the point farthest from its centre
            order = np.lexsort((np.arange(n), -d2))
            pos = 0
            for j in np.flatnonzero(counts == 0):
                while counts[new[order[pos]]] <= 1:
                    pos += 1
                p = order[pos]
                counts[new[p]] -= 1
                new[p] = j
                counts[j] = 1
                pos += 1
        sums = np.zeros((k, pts.shape[1]))
        np.add.at(sums, new, pts)
        centers = sums / counts[:, None]
        if labels is not None and np.array_equal(labels, new):
            break
        labels = new
    labels, d2 = _assign(pts, centers)
    counts = np.bincount(labels, minlength=k)
    return labels, centers, float(d2.sum()), counts


def kmeans_init(samples, cfg: FitConfig) -> Mixture:
    """Initial mixture from Euclidean k-means on the (u, v, y) points.

    Centres start at ``k`` distinct samples drawn uniformly at random; each
    cluster becomes a component through the closed-form M-step with binary
    responsibilities and prior ``size / N``.
    """
    n = samples.n
    if n < cfg.k:
        raise TooFewSamples(f"{n} samples cannot seed {cfg.k} components")
    pts = samples.points()
    rng = np.random.default_rng(cfg.seed)
    best = None
    for _ in range(max(1, cfg.kmeans_restarts)):
        labels, _, inertia, counts = _lloyd(pts, cfg.k, rng, cfg.kmeans_max_iters)
        if np.any(counts == 0):
            # final reassignment emptied a cluster; fall back to the Lloyd labels
            labels, _, inertia, counts = _relabel_nonempty(pts, labels, cfg.k)
        if best is None or inertia < best[1]:
            best = (labels, inertia)
    labels = best[0]

    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(cfg.k + 1))
    comps = []
    for j in range(cfg.k):
        idx = order[bounds[j]:bounds[j + 1]]
        w = np.ones(len(idx))
        c, gamma, A, b, sigma, rk = weighted_component(samples.x[idx], samples.y[idx], w)
        comps.append((c, gamma, A, b, sigma, rk))
    return _mixture_from_fits(comps, np.arange(cfg.k))


def _relabel_nonempty(pts, labels, k):
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        donor = int(np.argmax(counts))
        p = int(np.flatnonzero(labels == donor)[-1])
        labels[p] = j
        counts[donor] -= 1
        counts[j] += 1
    sums = np.zeros((k, pts.shape[1]))
    np.add.at(sums, labels, pts)
    centers = sums / counts[:, None]
    inertia = float(((pts - centers[labels]) ** 2).sum())
    return labels, centers, inertia, counts


def _mixture_from_fits(fits, ids) -> Mixture:
    rk = np.array([f[5] for f in fits])
    return Mixture(
        c=np.array([f[0] for f in fits]).reshape(-1, 2),
        Gamma=np.array([f[1] for f in fits]).reshape(-1, 2, 2),
        A=np.array([f[2] for f in fits]).reshape(-1, 2),
        b=np.array([f[3] for f in fits]),
        sigma=np.array([f[4] for f in fits]),
        pi=rk / rk.sum(),
        ids=np.asarray(ids, dtype=np.int64),
    )


def e_step(mix: Mixture, samples) -> ResponsibilityTable:
    """Densities and responsibilities over all samples (nothing trimmed yet)."""
    return responsibilities(mix, samples)


def _floor_int(v: float) -> int:
    # guard against (1 - 0.95) * 100 = 4.999...
    return int(math.floor(v + 1e-9))


def trim(table: ResponsibilityTable, samples, alpha: float, prev_ll=None) -> ResponsibilityTable:
    """Choose the kept set for the next M-step.

    Samples are ranked by the likelihood of their MAP component and the
    ``floor((1 - alpha) N)`` least likely are trimmed. If the kept-set
    log-likelihood then falls below ``prev_ll``, further samples are
    trimmed in ascending order of ``log r_n`` until it recovers. ``prev_ll``
    of ``None``, ``0`` or ``-inf`` disables that second stage.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    n = table.n
    kstar = table.map_component()
    score = table.log_u[np.arange(n), kstar]
    score = np.where(table.zero_row, -np.inf, score)
    n_trim = max(_floor_int((1.0 - alpha) * n), int(table.zero_row.sum()))
    order = np.argsort(score, kind="stable")
    kept = np.ones(n, dtype=bool)
    kept[order[:n_trim]] = False
    kept &= ~table.zero_row

    if prev_ll is None or prev_ll == 0.0 or prev_ll == -np.inf:
        return table.with_kept(kept)

    ll = float(np.sum(table.log_rn[kept]))
    if ll >= prev_ll:
        return table.with_kept(kept)

    floor = math.ceil(alpha * n / 2.0)
    cand = np.flatnonzero(kept)
    cand = cand[np.argsort(table.log_rn[cand], kind="stable")]
    budget = int(kept.sum()) - floor
    gains = -np.cumsum(table.log_rn[cand[:max(budget, 0)]])
    hit = np.flatnonzero(ll + gains >= prev_ll)
    m = int(hit[0]) + 1 if hit.size else None
    while m is not None:
        trial = kept.copy()
        trial[cand[:m]] = False
        if float(np.sum(table.log_rn[trial])) >= prev_ll:
            return table.with_kept(trial)
        # rounding in the cumulative estimate; trim one more
        m = m + 1 if m < budget else None
    raise CannotRestoreMonotonicity(
        f"kept-set log-likelihood {ll:.6g} stays below previous {prev_ll:.6g} "
        f"down to {floor} kept samples",
        prev_ll=prev_ll, ll=ll, kept=int(kept.sum()), floor=floor)


def m_step(table: ResponsibilityTable, samples, ids=None, min_weight: float = MIN_WEIGHT) -> Mixture:
    """Closed-form parameter updates from the kept samples.

    Components whose kept weight ``r_k`` is below ``min_weight`` are deleted
    and the remaining priors renormalised. ``ids`` labels the table's
    columns (defaults to ``0..K-1``) and is carried into the result.
    """
    kept = table.kept
    if not kept.any():
        raise AllComponentsEmpty("no kept samples for the M-step")
    x = samples.x[kept]
    y = samples.y[kept]
    R = np.asfortranarray(table.r[kept])
    rk = R.sum(axis=0)
    fits, ids_kept = [], []
    for k in range(table.k):
        if not rk[k] >= min_weight:
            continue
        fits.append(weighted_component(x, y, R[:, k]))
        ids_kept.append(k)
    if not fits:
        raise AllComponentsEmpty("every component fell below the minimum weight")
    all_ids = np.arange(table.k) if ids is None else np.asarray(ids)
    return _mixture_from_fits(fits, all_ids[ids_kept])


def density_fractions(mix: Mixture, table: ResponsibilityTable, samples, c_dm: float) -> np.ndarray:
    """Fraction of integer pixels inside each component's scaled ellipse
    whose sample is kept and MAP-assigned to that component."""
    h, w = samples.height, samples.width
    owner = np.full(h * w, -1, dtype=np.int64)
    kstar = table.map_component()
    owner[samples.origin[table.kept]] = kstar[table.kept]
    owner = owner.reshape(h, w)
    out = np.zeros(mix.k)
    c2 = c_dm * c_dm
    for k in range(mix.k):
        g = regularize_cov(mix.Gamma[k])
        cu, cv = mix.c[k]
        hu = c_dm * math.sqrt(g[0, 0])
        hv = c_dm * math.sqrt(g[1, 1])
        u0, u1 = max(0, math.ceil(cu - hu)), min(w - 1, math.floor(cu + hu))
        v0, v1 = max(0, math.ceil(cv - hv)), min(h - 1, math.floor(cv + hv))
        if u0 > u1 or v0 > v1:
            continue
        vv, uu = np.mgrid[v0:v1 + 1, u0:u1 + 1]
        du = uu - cu
        dv = vv - cv
        inv = np.linalg.inv(g)
        maha = inv[0, 0] * du * du + 2 * inv[0, 1] * du * dv + inv[1, 1] * dv * dv
        inside = maha <= c2
        total = int(inside.sum())
        if total:
            out[k] = np.count_nonzero(owner[v0:v1 + 1, u0:u1 + 1][inside] == k) / total
    return out


def density_check(mix: Mixture, table: ResponsibilityTable, samples, t_rho: float,
                  c_dm: float) -> Mixture:
    """Drop components whose ellipse is not mostly filled by their own MAP pixels."""
    frac = density_fractions(mix, table, samples, c_dm)
    keep = np.flatnonzero(~(frac < t_rho))
    if keep.size == 0:
        raise AllComponentsEmpty("density check removed every component")
    return mix.select(keep)


@dataclass
class FitState:
    mixture: Mixture
    table: ResponsibilityTable
    ll: float
    iter: int
    removed_components: list = field(default_factory=list)
    history: list = field(default_factory=list)
    trimmed: list = field(default_factory=list)
    converged: bool = False


def fit(samples, cfg: FitConfig, callback=None) -> FitState:
    """Run the full trimmed EM loop followed by the density check.

    ``callback(iteration, ll, n_trimmed, n_components)`` is invoked once per
    logged step; iteration 0 is the k-means start.
    """
    mix = kmeans_init(samples, cfg)
    table = trim(e_step(mix, samples), samples, cfg.alpha, None)
    ll = observed_log_likelihood(table)
    state = FitState(mixture=mix, table=table, ll=ll, iter=0, history=[ll],
                     trimmed=[int(table.n - table.kept.sum())])
    _report(callback, state)

    for it in range(1, cfg.max_iters + 1):
        before = set(mix.ids.tolist())
        mix = m_step(table, samples, ids=mix.ids)
        state.removed_components += sorted(before - set(mix.ids.tolist()))
        table = trim(e_step(mix, samples), samples, cfg.alpha, ll)
        new = observed_log_likelihood(table)
        state.history.append(new)
        state.trimmed.append(int(table.n - table.kept.sum()))
        state.iter = it
        done = new - ll < cfg.epsilon * abs(ll)
        ll = new
        state.mixture, state.table, state.ll = mix, table, ll
        _report(callback, state)
        if done:
            state.converged = True
            break

    mix, table = _post_process(mix, table, samples, cfg, state)
    state.mixture, state.table = mix, table
    return state


def _post_process(mix, table, samples, cfg, state):
    # priors from the final kept-set responsibilities
    rk = table.r_k
    live = np.flatnonzero(rk > 0)
    if live.size == 0:
        raise AllComponentsEmpty("no component owns any kept sample")
    state.removed_components += mix.ids[rk <= 0].tolist()
    mix = mix.select(live).with_pi(rk[live] / rk[live].sum())
    table = table_from_log_u(table.log_u[:, live], mix.pi, table.kept)

    checked = density_check(mix, table, samples, cfg.t_rho, cfg.c_dm)
    if checked.k < mix.k:
        keep = np.flatnonzero(np.isin(mix.ids, checked.ids))
        dropped = np.setdiff1d(np.arange(mix.k), keep)
        state.removed_components += mix.ids[dropped].tolist()
        # zero prior: the removed component's samples fall to the remaining ones
        table = table_from_log_u(table.log_u[:, keep], checked.pi, table.kept)
        mix = checked
    return mix, table


def _report(callback, state):
    n_trim = state.trimmed[-1]
    log.info("iter=%d L=%.10g trimmed=%d live=%d", state.iter, state.ll, n_trim,
             state.mixture.k)
    if callback is not None:
        callback(state.iter, state.ll, n_trim, state.mixture.k)
