"""JSON documents (mixtures, scenes, planes) and the run-length kept-mask sidecar."""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import InvalidScene, UnreadableInput
from .geometry import ScenePlane, SyntheticScene
from .model import Mixture

RLE_MAGIC = b"RLE1"


def mixture_to_dict(mix: Mixture) -> dict:
    return {
        "k": mix.k,
        "components": [
            {
                "id": int(mix.ids[i]),
                "c": mix.c[i].tolist(),
                "Gamma": mix.Gamma[i].ravel().tolist(),
                "A": mix.A[i].tolist(),
                "b": float(mix.b[i]),
                "sigma": float(mix.sigma[i]),
                "pi": float(mix.pi[i]),
            }
            for i in range(mix.k)
        ],
    }


def mixture_from_dict(d: dict) -> Mixture:
    comps = d["components"]
    if not comps:
        raise UnreadableInput("mixture document has no components")
    return Mixture(
        c=np.array([c["c"] for c in comps], dtype=float).reshape(-1, 2),
        Gamma=np.array([c["Gamma"] for c in comps], dtype=float).reshape(-1, 2, 2),
        A=np.array([c["A"] for c in comps], dtype=float).reshape(-1, 2),
        b=np.array([c["b"] for c in comps], dtype=float),
        sigma=np.array([c["sigma"] for c in comps], dtype=float),
        pi=np.array([c["pi"] for c in comps], dtype=float),
        ids=np.array([c.get("id", i) for i, c in enumerate(comps)], dtype=np.int64),
    )


def mixture_json(mix: Mixture) -> str:
    return json.dumps(mixture_to_dict(mix), indent=1)


def rle_encode(mask) -> bytes:
    """Encode a boolean vector as alternating run lengths.

    Layout (little-endian): ``b"RLE1"``, uint64 length, uint8 first value,
    uint64 run count, then uint32 run lengths.
    """
    m = np.asarray(mask, dtype=bool).ravel()
    if m.size == 0:
        return RLE_MAGIC + struct.pack("<QBQ", 0, 0, 0)
    edges = np.flatnonzero(m[1:] != m[:-1]) + 1
    runs = np.diff(np.concatenate([[0], edges, [m.size]]))
    return (RLE_MAGIC + struct.pack("<QBQ", m.size, int(m[0]), len(runs))
            + runs.astype("<u4").tobytes())


def rle_decode(data: bytes) -> np.ndarray:
    head = struct.calcsize("<QBQ")
    if data[:4] != RLE_MAGIC or len(data) < 4 + head:
        raise UnreadableInput("not a run-length mask")
    n, first, nruns = struct.unpack("<QBQ", data[4:4 + head])
    runs = np.frombuffer(data[4 + head:4 + head + 4 * nruns], dtype="<u4").astype(np.int64)
    if runs.sum() != n:
        raise UnreadableInput("run lengths do not add up to the mask length")
    values = (np.arange(nruns) + first) % 2 == 1
    return np.repeat(values, runs)


def scene_from_dict(d: dict):
    """Build ``(name, SyntheticScene, width, height, seed)`` from a scene document.

    Each plane gives either ``normal`` and ``offset`` over ``(u, v, 1/Z)``
    or ``gradient: [du, dv, q0]`` meaning ``1/Z = du*u + dv*v + q0``.
    """
    try:
        planes = []
        for p in d["planes"]:
            if "gradient" in p:
                du, dv, q0 = p["gradient"]
                planes.append(ScenePlane.from_gradient(du, dv, q0, p["polygon"]))
            else:
                planes.append(ScenePlane(normal=p["normal"], offset=p["offset"],
                                         polygon=p["polygon"]))
        scene = SyntheticScene(planes=planes,
                               noise_sigma=float(d.get("noise_sigma", 0.0)),
                               outlier_fraction=float(d.get("outlier_fraction", 0.0)))
        return (str(d.get("name", "scene")), scene, int(d["width"]), int(d["height"]),
                int(d.get("seed", 0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidScene(f"bad scene document: {exc}") from exc


def scene_to_dict(name, scene: SyntheticScene, width, height, seed) -> dict:
    return {
        "name": name,
        "width": width,
        "height": height,
        "seed": seed,
        "noise_sigma": scene.noise_sigma,
        "outlier_fraction": scene.outlier_fraction,
        "planes": [{"normal": list(p.normal), "offset": p.offset,
                    "polygon": [list(v) for v in p.polygon]} for p in scene.planes],
    }


def load_scenes(text: str) -> list:
    doc = json.loads(text)
    items = doc["scenes"] if isinstance(doc, dict) and "scenes" in doc else doc
    if isinstance(items, dict):
        items = [items]
    return [scene_from_dict(d) for d in items]


def planes_to_dict(segmentation, s: float) -> dict:
    return {
        "s": s,
        "planes": [
            {"label": int(lab), "normal": [float(v) for v in n], "offset": float(off)}
            for lab, (n, off) in sorted(segmentation.planes.items())
        ],
    }


def planes_from_dict(d: dict) -> dict:
    return {int(p["label"]): (np.array(p["normal"], dtype=float), float(p["offset"]))
            for p in d.get("planes", [])}
