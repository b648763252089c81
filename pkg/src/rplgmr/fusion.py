"""Greedy fusion of adjacent, coplanar mixture components.

Two components are fused when their scaled ellipses overlap, the combined
responsibility-weighted scatter stays flat (smallest eigenvalue below
``t_mse``) and neither plane's principal extent protrudes too far from the
other plane.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .config import FusionConfig
from .ellipse import ellipses_overlap
from .errors import DegenerateScatter
from .geometry import Segmentation

MIN_WEIGHT = 3.0
# axis/normal cosines below this count as coplanar (roundoff on noiseless data)
DOT_TOL = 1e-9


@dataclass(frozen=True)
class PlaneStats:
    weight: float
    mean: np.ndarray
    scatter: np.ndarray
    mse: float
    normal: np.ndarray
    axes: tuple  # ((eigenvalue, eigenvector), (eigenvalue, eigenvector)), descending

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([self.axes[0][0], self.axes[1][0], self.mse])

    @property
    def offset(self) -> float:
        return float(self.normal @ self.mean)


def _orient(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


def weighted_plane_stats(points, w) -> PlaneStats:
    """Weighted mean, scatter and eigen-structure of (u, v, y) points."""
    w = np.asarray(w, dtype=np.float64)
    nz = np.flatnonzero(w)
    w = w[nz]
    p = points[nz]
    total = float(w.sum())
    if not total >= MIN_WEIGHT:
        raise DegenerateScatter(f"effective weight {total:.3g} is below {MIN_WEIGHT}")
    mean = (w @ p) / total
    d = p - mean
    scatter = (d.T * w) @ d / total
    scatter = 0.5 * (scatter + scatter.T)
    vals, vecs = np.linalg.eigh(scatter)
    vals = vals[::-1]
    vecs = vecs[:, ::-1]
    vecs = np.column_stack([_orient(vecs[:, i]) for i in range(3)])
    return PlaneStats(
        weight=total,
        mean=mean,
        scatter=scatter,
        mse=max(float(vals[2]), 0.0),
        normal=vecs[:, 2],
        axes=((float(vals[0]), vecs[:, 0]), (float(vals[1]), vecs[:, 1])),
    )


def _kept_arrays(table, samples):
    return samples.points()[table.kept], table.r[table.kept]


def plane_stats(comp_index: int, table, samples) -> PlaneStats:
    pts, R = _kept_arrays(table, samples)
    return weighted_plane_stats(pts, R[:, comp_index])


def combined_mse(i, j, table, samples):
    """MSE and stats of the plane fitted with weights ``r_i + r_j``.

    ``i`` and ``j`` may be single component indices or lists of them.
    """
    pts, R = _kept_arrays(table, samples)
    w = R[:, np.atleast_1d(i)].sum(axis=1) + R[:, np.atleast_1d(j)].sum(axis=1)
    stats = weighted_plane_stats(pts, w)
    return stats.mse, stats


def projection_check(a: PlaneStats, b: PlaneStats, t_proj: float) -> bool:
    """True when neither plane's principal axes protrude from the other.

    Each source axis is scaled by the square root of its eigenvalue and
    projected onto the target normal; every projection must stay within
    ``t_proj * sqrt(mse_target)``, up to a ``DOT_TOL`` cosine allowance.
    """
    for src, tgt in ((a, b), (b, a)):
        limit = t_proj * np.sqrt(tgt.mse)
        for lam, vec in src.axes:
            root = np.sqrt(max(lam, 0.0))
            if abs(root * float(vec @ tgt.normal)) > limit + DOT_TOL * root:
                return False
    return True


@dataclass
class AdjacencyGraph:
    nodes: list
    edges: set = field(default_factory=set)

    def neighbors(self, i):
        return sorted({b for a, b in self.edges if a == i} | {a for a, b in self.edges if b == i})


def adjacency_graph(mix, c_dm: float) -> AdjacencyGraph:
    comps = mix.components
    edges = set()
    for i in range(len(comps)):
        for j in range(i + 1, len(comps)):
            if ellipses_overlap(comps[i], comps[j], c_dm):
                edges.add((i, j))
    return AdjacencyGraph(nodes=list(range(len(comps))), edges=edges)


@dataclass
class MergeMap:
    """Maps mixture component (table column) index to fused plane label."""

    parent: dict
    planes: dict = field(default_factory=dict)  # label -> PlaneStats

    @property
    def n_planes(self) -> int:
        return len(set(self.parent.values()))

    @classmethod
    def identity(cls, k: int) -> "MergeMap":
        return cls(parent={i: i + 1 for i in range(k)})


def fuse_all(mix, table, samples, cfg: FusionConfig, trace=None):
    """Greedily fuse components; returns ``(MergeMap, [PlaneStats per label])``.

    The live node with the smallest MSE tries its neighbours in order of
    increasing combined MSE and merges with the first admissible one. A
    node with no admissible neighbour is exhausted until a merge changes
    its neighbourhood. ``trace``, if given, receives one JSON line per
    decision.
    """
    pts, R = _kept_arrays(table, samples)
    graph = adjacency_graph(mix, cfg.c_dm)
    adj = {i: set() for i in graph.nodes}
    for a, b in graph.edges:
        adj[a].add(b)
        adj[b].add(a)

    members, weights, stats = {}, {}, {}
    for i in graph.nodes:
        w = R[:, i]
        try:
            st = weighted_plane_stats(pts, w)
        except DegenerateScatter:
            # too light to describe a plane; it keeps its own label
            st = None
        members[i] = [i]
        weights[i] = w
        stats[i] = st

    def _live(i):
        return stats[i] is not None

    exhausted = {i for i in graph.nodes if not _live(i)}
    cache = {}
    rnd = 0
    while True:
        open_nodes = [i for i in members if i not in exhausted]
        if not open_nodes:
            break
        node = min(open_nodes, key=lambda i: (stats[i].mse, i))
        options = []
        for nb in sorted(adj[node]):
            if not _live(nb):
                continue
            key = (tuple(members[node]), tuple(members[nb]))
            if key not in cache:
                cache[key] = weighted_plane_stats(pts, weights[node] + weights[nb])
            options.append((cache[key].mse, nb, cache[key]))
        options.sort(key=lambda o: (o[0], o[1]))
        chosen = None
        for mse, nb, cs in options:
            ok_mse = mse <= cfg.t_mse
            ok_proj = ok_mse and projection_check(stats[node], stats[nb], cfg.t_proj)
            _emit(trace, rnd, node, nb, mse, "merge" if ok_proj else
                  ("reject_mse" if not ok_mse else "reject_projection"))
            if ok_proj:
                chosen = (nb, cs)
                break
        rnd += 1
        if chosen is None:
            exhausted.add(node)
            continue
        nb, cs = chosen
        keep, gone = min(node, nb), max(node, nb)
        members[keep] = sorted(members[keep] + members.pop(gone))
        weights[keep] = weights[node] + weights[nb]
        weights.pop(gone)
        stats[keep] = cs
        stats.pop(gone)
        merged_adj = (adj[keep] | adj.pop(gone)) - {keep, gone}
        adj[keep] = merged_adj
        for other in merged_adj:
            adj[other].discard(gone)
            adj[other].add(keep)
        exhausted.discard(gone)
        exhausted.discard(keep)
        exhausted -= {o for o in merged_adj if _live(o)}

    order = sorted(members, key=lambda i: members[i][0])
    parent, planes = {}, {}
    for label, node in enumerate(order, start=1):
        for m in members[node]:
            parent[m] = label
        planes[label] = stats[node]
    merge = MergeMap(parent=parent, planes=planes)
    return merge, [planes[lab] for lab in sorted(planes)]


def _emit(trace, rnd, node, nb, mse, decision):
    if trace is None:
        return
    line = json.dumps({"round": rnd, "node": int(node), "neighbor": int(nb),
                       "combined_mse": float(mse), "decision": decision})
    if hasattr(trace, "write"):
        trace.write(line + "\n")
    else:
        trace.append(line)


def segmentation_from(merge: MergeMap, table, samples, image_dims=None) -> Segmentation:
    """Label map from MAP components of kept samples, relabelled by ``merge``.

    Trimmed samples and invalid pixels get label 0. Plane parameters of
    each label come from ``merge.planes`` when available.
    """
    h, w = image_dims if image_dims is not None else (samples.height, samples.width)
    lut = np.zeros(table.k, dtype=np.int64)
    for comp, label in merge.parent.items():
        lut[comp] = label
    lab = np.where(table.kept, lut[table.map_component()], 0)
    labels = np.zeros(h * w, dtype=np.int64)
    labels[samples.origin] = lab
    planes = {}
    for label, st in merge.planes.items():
        if st is not None:
            planes[label] = (st.normal.copy(), st.offset)
    return Segmentation(labels=labels.reshape(h, w), planes=planes)
