import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from conftest import CRAFTED_CASES, labels_from_blocks, make_samples

from rplgmr.errors import DimensionMismatch, EmptyList
from rplgmr.evaluate import (
    EvalReport,
    aggregate,
    compare,
    evaluate,
    fit_region_normal,
    format_table,
    orientation_deviation,
    overlap_table,
)
from rplgmr.geometry import Segmentation


def seg(labels, planes=None):
    return Segmentation(labels=np.asarray(labels), planes=planes or {})


@pytest.mark.parametrize("name,blocks,expected", CRAFTED_CASES, ids=[c[0] for c in CRAFTED_CASES])
def test_crafted_tables(name, blocks, expected):
    g, m = labels_from_blocks(blocks)
    rep = compare(seg(m), seg(g), 0.8)
    got = {k: getattr(rep, k) for k in expected}
    assert got == expected


def test_overlap_table_counts():
    g, m = labels_from_blocks([(1, 1, 3), (1, 2, 2), (2, 2, 4), (0, 2, 5), (2, 0, 1)])
    gt_ids, ma_ids, gsz, msz, O = overlap_table(m, g)
    assert gt_ids.tolist() == [1, 2] and ma_ids.tolist() == [1, 2]
    assert gsz.tolist() == [5, 5]
    assert msz.tolist() == [3, 11]
    np.testing.assert_array_equal(O, [[3, 2], [0, 4]])


def test_identity_and_empty_machine():
    rng = np.random.default_rng(0)
    labels = rng.integers(0, 6, size=(20, 20))
    rep = compare(seg(labels), seg(labels), 0.8)
    assert rep.correct == rep.gt_regions == 5
    assert rep.over_segmented == rep.under_segmented == rep.missed == rep.spurious == 0
    rep = compare(seg(np.zeros_like(labels)), seg(labels), 0.8)
    assert rep.missed == 5 and rep.spurious == 0 and rep.correct == 0


def test_compare_validation():
    with pytest.raises(DimensionMismatch):
        compare(seg(np.zeros((2, 3))), seg(np.zeros((3, 2))))
    with pytest.raises(ValueError):
        compare(seg(np.zeros((2, 2))), seg(np.zeros((2, 2))), 0.5)


def test_region_accounting_invariant():
    for _, blocks, _ in CRAFTED_CASES:
        g, m = labels_from_blocks(blocks)
        rep = compare(seg(m), seg(g), 0.8)
        assert rep.correct + rep.missed <= rep.gt_regions
        assert rep.correct + rep.spurious <= rep.machine_regions


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_correct_count_monotone_in_threshold(seed):
    rng = np.random.default_rng(seed)
    gt = rng.integers(0, 5, size=(12, 12))
    machine = np.where(rng.random((12, 12)) < 0.85, gt, rng.integers(0, 6, size=(12, 12)))
    counts = [compare(seg(machine), seg(gt), t).correct for t in np.linspace(0.51, 1.0, 25)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))


def _plane_samples(gradients):
    """Planar 10 x 10 regions side by side, one per ``(du, dv)``; returns samples and GT."""
    width = 10 * len(gradients)
    vv, uu = np.mgrid[0:10, 0:width]
    labels = uu // 10 + 1
    grad = np.array(gradients, dtype=float)[labels - 1]
    y = grad[..., 0] * uu + grad[..., 1] * vv + 3.0
    samples = make_samples(np.column_stack([uu.ravel(), vv.ravel()]), y.ravel(),
                           width=width, height=10)
    return samples, labels


def _tilt(n, deg):
    """Rotate unit vector ``n`` by ``deg`` degrees about an axis orthogonal to it."""
    k = np.cross(n, [1.0, 0.0, 0.0])
    k /= np.linalg.norm(k)
    t = np.radians(deg)
    return n * np.cos(t) + np.cross(k, n) * np.sin(t)


def test_orientation_deviation_constructed_rotation():
    samples, labels = _plane_samples([(0.1, 0.0)])
    n_gt = fit_region_normal(samples.points())
    rotated = _tilt(n_gt, 1.6)
    machine = seg(labels, {1: (rotated, 0.0)})
    assert orientation_deviation(machine, seg(labels), [(1, 1)], samples) == pytest.approx(1.6,
                                                                                           abs=1e-9)
    same = seg(labels, {1: (-n_gt, 0.0)})
    assert orientation_deviation(same, seg(labels), [(1, 1)], samples) == pytest.approx(0.0,
                                                                                        abs=1e-6)
    assert orientation_deviation(same, seg(labels), [], samples) is None


def test_orientation_refits_machine_regions_without_planes():
    samples, labels = _plane_samples([(0.1, 0.0), (-0.3, 0.2)])
    rep = evaluate(seg(labels), seg(labels), samples, name="x")
    assert rep.correct == 2
    assert rep.orientation_deviation_deg == pytest.approx(0.0, abs=1e-6)
    assert rep.n_pairs == 2


def test_aggregate_rules():
    a = EvalReport(correct=12, gt_regions=15, orientation_deviation_deg=1.0, n_pairs=12)
    b = EvalReport(correct=14, gt_regions=15, orientation_deviation_deg=2.0, n_pairs=4)
    avg = aggregate([a, b])
    assert avg.correct == 13
    assert avg.orientation_deviation_deg == pytest.approx((12 * 1.0 + 4 * 2.0) / 16)
    one = aggregate([a])
    assert one.correct == 12 and one.orientation_deviation_deg == 1.0
    with pytest.raises(EmptyList):
        aggregate([])


def test_aggregate_reproduces_table_row():
    # ten images whose column means are 13.1 / 15.2, 0.2, 0.1, 1.8, 0.8
    rows = [(13, 15, 0, 0, 2, 1)] * 4 + [(14, 16, 0, 0, 2, 1)] * 2 + [
        (12, 14, 1, 0, 1, 0), (13, 16, 1, 1, 1, 1), (14, 15, 0, 0, 1, 1), (12, 15, 0, 0, 3, 0)]
    reps = [EvalReport(correct=c, gt_regions=g, over_segmented=o, under_segmented=u, missed=m,
                       spurious=s)
            for c, g, o, u, m, s in rows]
    avg = aggregate(reps)
    got = [avg.correct, avg.gt_regions, avg.over_segmented, avg.under_segmented, avg.missed,
           avg.spurious]
    np.testing.assert_allclose(got, [13.1, 15.2, 0.2, 0.1, 1.8, 0.8], atol=1e-12)


def test_format_table_columns():
    a = EvalReport(name="img", correct=3, gt_regions=4, spurious=1, orientation_deviation_deg=1.25)
    text = format_table([a], aggregate([a]))
    header = text.splitlines()[0]
    for col in ("Correctly detected", "Orientation deviation", "Over-seg.", "Under-seg.",
                "Missed", "Spurious"):
        assert col in header
    assert "3 / 4 (75.0%)" in text
    assert "average" in text
