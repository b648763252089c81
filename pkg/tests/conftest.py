import numpy as np
import pytest

from rplgmr.geometry import SampleSet
from rplgmr.model import Component, Mixture


def make_samples(x, y, width=None, height=None, s=1.0):
    """SampleSet over arbitrary coordinates; origins are just 0..N-1."""
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    y = np.asarray(y, dtype=float).ravel()
    n = len(y)
    width = width or max(n, 1)
    height = height or 1
    return SampleSet(x=x, y=y, s=s, origin=np.arange(n, dtype=np.int64),
                     width=width, height=height)


def grid_samples(width, height, fn, noise=0.0, rng=None):
    """One sample per pixel of a width x height grid with y = fn(u, v) + noise."""
    vv, uu = np.mgrid[0:height, 0:width]
    u = uu.ravel().astype(float)
    v = vv.ravel().astype(float)
    y = fn(u, v)
    if noise:
        y = y + rng.normal(0, noise, size=y.shape)
    return SampleSet(x=np.column_stack([u, v]), y=y, s=1.0,
                     origin=(vv * width + uu).ravel().astype(np.int64),
                     width=width, height=height)


def random_spd(rng, scale=1.0):
    m = rng.normal(size=(2, 2))
    return scale * (m @ m.T + 0.3 * np.eye(2))


def random_component(rng, pi=1.0):
    return Component(c=rng.normal(0, 3, 2), Gamma=random_spd(rng, rng.uniform(0.5, 4)),
                     A=rng.normal(0, 1, 2), b=float(rng.normal(0, 2)),
                     sigma=float(rng.uniform(0.05, 2.0)), pi=pi)


def random_mixture(rng, k):
    pi = rng.dirichlet(np.ones(k))
    return Mixture.from_components([random_component(rng, p) for p in pi])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def labels_from_blocks(blocks):
    """Build (gt, machine) 1 x N label rows from ``(gt_label, machine_label, count)`` blocks."""
    g, m = [], []
    for gl, ml, n in blocks:
        g += [gl] * n
        m += [ml] * n
    return np.array([g]), np.array([m])


# Crafted overlap cases at t = 0.8: (name, blocks, expected counts).
# Expected values are worked by hand from the two-sided overlap rules.
CRAFTED_CASES = [
    ("identity", [(1, 1, 100), (2, 2, 50)],
     dict(correct=2, over_segmented=0, under_segmented=0, missed=0, spurious=0)),
    ("split_halves", [(1, 1, 50), (1, 2, 50)],
     dict(correct=0, over_segmented=1, under_segmented=0, missed=0, spurious=0)),
    ("merged_pair", [(1, 1, 60), (2, 1, 40)],
     dict(correct=0, over_segmented=0, under_segmented=1, missed=0, spurious=0)),
    ("missed_and_spurious", [(1, 1, 100), (2, 0, 30), (0, 2, 20)],
     dict(correct=1, over_segmented=0, under_segmented=0, missed=1, spurious=1)),
    # second piece leaks 5 px into a region that is itself detected correctly
    ("split_region_with_leak", [(1, 1, 55), (1, 2, 40), (2, 2, 5), (2, 3, 95)],
     dict(correct=1, over_segmented=1, under_segmented=0, missed=0, spurious=0)),
    ("boundary_at_threshold", [(1, 1, 80), (1, 0, 20), (0, 1, 20)],
     dict(correct=1, over_segmented=0, under_segmented=0, missed=0, spurious=0)),
    ("just_below_threshold", [(1, 1, 79), (1, 0, 21), (0, 1, 21)],
     dict(correct=0, over_segmented=0, under_segmented=0, missed=1, spurious=1)),
    ("split_union_too_small", [(1, 1, 50), (1, 2, 25), (1, 0, 25)],
     dict(correct=0, over_segmented=0, under_segmented=0, missed=1, spurious=2)),
    # correct detections are claimed before over-segmentation instances
    ("correct_beats_over", [(1, 1, 90), (1, 2, 10)],
     dict(correct=1, over_segmented=0, under_segmented=0, missed=0, spurious=1)),
    ("mixed", [(1, 1, 50), (1, 2, 50), (2, 3, 60), (3, 3, 40), (4, 4, 70), (5, 0, 30),
               (0, 5, 25)],
     dict(correct=1, over_segmented=1, under_segmented=1, missed=1, spurious=1)),
]


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
