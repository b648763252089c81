"""Region-level comparison of a machine segmentation with ground truth.

Classification follows the usual range-segmentation benchmark rules at an
overlap threshold ``t`` in (0.5, 1]:

* correct detection: a GT region and a machine region each covering at
  least ``t`` of the other;
* over-segmentation: a GT region and two or more machine regions, each
  machine region at least ``t`` inside it and together covering at least
  ``t`` of it;
* under-segmentation: the mirror case;
* missed / spurious: GT / machine regions left unclassified.

Label 0 is "no region" in both maps. Correct detections are assigned
first; over- and under-segmentation instances are then accepted greedily
by descending total overlap, each region joining at most one instance.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyList
from .geometry import Segmentation


@dataclass
class EvalReport:
    correct: float = 0
    over_segmented: float = 0
    under_segmented: float = 0
    missed: float = 0
    spurious: float = 0
    orientation_deviation_deg: float | None = None
    gt_regions: float = 0
    machine_regions: float = 0
    n_pairs: int = 0
    pairs: list = field(default_factory=list)
    name: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pairs"] = [list(map(int, p)) for p in self.pairs]
        return d


def overlap_table(machine_labels, gt_labels):
    """Pixel-overlap counts between nonzero GT and machine labels.

    Returns ``(gt_ids, machine_ids, sizes_gt, sizes_machine, O)`` with
    ``O[i, j]`` the number of pixels labelled ``gt_ids[i]`` in GT and
    ``machine_ids[j]`` in the machine map.
    """
    g = np.asarray(gt_labels).ravel()
    m = np.asarray(machine_labels).ravel()
    gt_ids, gsz = np.unique(g[g != 0], return_counts=True)
    ma_ids, msz = np.unique(m[m != 0], return_counts=True)
    O = np.zeros((len(gt_ids), len(ma_ids)), dtype=np.int64)
    both = (g != 0) & (m != 0)
    if both.any() and len(gt_ids) and len(ma_ids):
        gi = np.searchsorted(gt_ids, g[both])
        mi = np.searchsorted(ma_ids, m[both])
        np.add.at(O, (gi, mi), 1)
    return gt_ids, ma_ids, gsz, msz, O


def compare(machine: Segmentation, gt: Segmentation, t: float = 0.8) -> EvalReport:
    if machine.labels.shape != gt.labels.shape:
        raise DimensionMismatch(f"machine {machine.labels.shape} vs GT {gt.labels.shape}")
    if not 0.5 < t <= 1.0:
        raise ValueError("overlap threshold must lie in (0.5, 1]")
    gt_ids, ma_ids, gsz, msz, O = overlap_table(machine.labels, gt.labels)
    G, M = len(gt_ids), len(ma_ids)
    used_g = np.zeros(G, dtype=bool)
    used_m = np.zeros(M, dtype=bool)

    correct = []
    ii, jj = np.nonzero((O >= t * gsz[:, None]) & (O >= t * msz[None, :]))
    for i, j in sorted(zip(ii, jj), key=lambda p: (-O[p], p[0], p[1])):
        if not used_g[i] and not used_m[j]:
            used_g[i] = used_m[j] = True
            correct.append((i, j))

    instances = []
    for i in range(G):
        js = [j for j in range(M) if not used_m[j] and O[i, j] > 0 and O[i, j] >= t * msz[j]]
        if len(js) >= 2 and O[i, js].sum() >= t * gsz[i]:
            instances.append((int(O[i, js].sum()), "over", [i], js))
    for j in range(M):
        is_ = [i for i in range(G) if not used_g[i] and O[i, j] > 0 and O[i, j] >= t * gsz[i]]
        if len(is_) >= 2 and O[is_, j].sum() >= t * msz[j]:
            instances.append((int(O[is_, j].sum()), "under", is_, [j]))
    instances.sort(key=lambda r: (-r[0], r[1], r[2], r[3]))

    over = under = 0
    for _, kind, gs, ms in instances:
        if used_g[gs].any() or used_m[ms].any():
            continue
        used_g[gs] = True
        used_m[ms] = True
        if kind == "over":
            over += 1
        else:
            under += 1

    pairs = [(int(gt_ids[i]), int(ma_ids[j])) for i, j in correct]
    return EvalReport(
        correct=len(correct),
        over_segmented=over,
        under_segmented=under,
        missed=int((~used_g).sum()),
        spurious=int((~used_m).sum()),
        gt_regions=G,
        machine_regions=M,
        pairs=sorted(pairs),
    )


def fit_region_normal(points) -> np.ndarray:
    """Total-least-squares unit normal of a point set (sign arbitrary)."""
    p = np.asarray(points, dtype=np.float64)
    d = p - p.mean(axis=0)
    _, _, vt = np.linalg.svd(d, full_matrices=False)
    return vt[-1]


def region_normal(seg: Segmentation, label: int, samples) -> np.ndarray:
    if label in seg.planes:
        return np.asarray(seg.planes[label][0], dtype=np.float64)
    lab = seg.labels.ravel()[samples.origin]
    pts = samples.points()[lab == label]
    if len(pts) < 3:
        raise ValueError(f"region {label} has fewer than 3 samples")
    return fit_region_normal(pts)


def orientation_deviation(machine: Segmentation, gt: Segmentation, pairs, samples):
    """Mean angle in degrees between GT and machine plane normals.

    GT normals are always refitted from the GT region's samples; machine
    normals come from ``machine.planes`` when present. Returns ``None``
    when there is no pair to compare.
    """
    if not pairs:
        return None
    gt_fit = Segmentation(labels=gt.labels)
    devs = []
    for g, m in pairs:
        ng = region_normal(gt_fit, g, samples)
        nm = region_normal(machine, m, samples)
        c = abs(float(ng @ nm)) / (np.linalg.norm(ng) * np.linalg.norm(nm))
        devs.append(np.degrees(np.arccos(min(c, 1.0))))
    return float(np.mean(devs))


def evaluate(machine: Segmentation, gt: Segmentation, samples=None, t: float = 0.8,
             name: str = "") -> EvalReport:
    rep = compare(machine, gt, t)
    rep.name = name
    rep.n_pairs = len(rep.pairs)
    if samples is not None:
        rep.orientation_deviation_deg = orientation_deviation(machine, gt, rep.pairs, samples)
    return rep


_COUNTS = ("correct", "over_segmented", "under_segmented", "missed", "spurious",
           "gt_regions", "machine_regions")


def aggregate(reports) -> EvalReport:
    """Average every count; orientation is weighted by correct-pair count."""
    reports = list(reports)
    if not reports:
        raise EmptyList("no reports to aggregate")
    out = EvalReport(name="average")
    for key in _COUNTS:
        setattr(out, key, float(np.mean([getattr(r, key) for r in reports])))
    w = [(r.orientation_deviation_deg, r.n_pairs or len(r.pairs)) for r in reports
         if r.orientation_deviation_deg is not None]
    total = sum(n for _, n in w)
    if total > 0:
        out.orientation_deviation_deg = float(sum(d * n for d, n in w) / total)
    out.n_pairs = sum(r.n_pairs or len(r.pairs) for r in reports)
    return out


_HEADER = ("Image", "Correctly detected", "Orientation deviation", "Over-seg.",
           "Under-seg.", "Missed", "Spurious")


def _fmt(v) -> str:
    return f"{v:.1f}" if isinstance(v, float) and not float(v).is_integer() else f"{v:g}"


def format_table(reports, average: EvalReport | None = None) -> str:
    """Plain-text table with the benchmark's six result columns."""
    rows = []
    for r in list(reports) + ([average] if average is not None else []):
        pct = 100.0 * r.correct / r.gt_regions if r.gt_regions else 0.0
        if r is average:
            cd = f"{r.correct:.1f} / {r.gt_regions:.1f} ({pct:.1f}%)"
        else:
            cd = f"{_fmt(r.correct)} / {_fmt(r.gt_regions)} ({pct:.1f}%)"
        od = "-" if r.orientation_deviation_deg is None else f"{r.orientation_deviation_deg:.1f}"
        cells = [_fmt(getattr(r, k)) if r is not average else f"{getattr(r, k):.1f}"
                 for k in ("over_segmented", "under_segmented", "missed", "spurious")]
        rows.append((r.name or "-", cd, od, *cells))
    widths = [max(len(str(x)) for x in col) for col in zip(_HEADER, *rows)]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(_HEADER, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(str(c).ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"
