"""End-to-end segmentation of one depth image."""

from __future__ import annotations

from dataclasses import dataclass

from . import em
from .config import FitConfig, FusionConfig
from .fusion import MergeMap, fuse_all, segmentation_from
from .geometry import DepthImage, SampleSet, Segmentation, scale_factor, to_samples


@dataclass
class SegmentResult:
    segmentation: Segmentation
    fit: em.FitState
    merge: MergeMap
    planes: list
    samples: SampleSet


def segment_depth(depth: DepthImage, fit_cfg: FitConfig, fusion_cfg: FusionConfig,
                  s: float | None = None, callback=None, trace=None) -> SegmentResult:
    """Scale, fit, density-check, fuse and label one depth image."""
    if s is None:
        s = scale_factor(depth)
    samples = to_samples(depth, s)
    state = em.fit(samples, fit_cfg, callback=callback)
    merge, planes = fuse_all(state.mixture, state.table, samples, fusion_cfg, trace=trace)
    seg = segmentation_from(merge, state.table, samples, depth.shape)
    return SegmentResult(segmentation=seg, fit=state, merge=merge, planes=planes,
                         samples=samples)
