"""Weight-space arithmetic: convex fusion, interpolation sweeps, simplex
grids, and distance-matched random models.

All arithmetic runs in float64 on aligned ParameterSets. A weight of
exactly 1.0 returns that model's arrays untouched, so sweep endpoints and
simplex corners are bitwise equal to their inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fuselab.params import ParameterSet, load_checkpoint, require_aligned, save_checkpoint
from fuselab.rng import Rng

_WEIGHT_TOL = 1e-9


class InvalidWeightsError(ValueError):
    """Fusion coefficients are not a convex combination."""


@dataclass(frozen=True)
class FusionWeights:
    alphas: tuple[float, ...]

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        object.__setattr__(self, "alphas", alphas)
        if not alphas:
            raise InvalidWeightsError("at least one coefficient required")
        if any(a < 0 for a in alphas):
            raise InvalidWeightsError(f"negative coefficient in {alphas}")
        if abs(sum(alphas) - 1.0) > _WEIGHT_TOL:
            raise InvalidWeightsError(f"coefficients sum to {sum(alphas)!r}, not 1")

    def __len__(self) -> int:
        return len(self.alphas)

    @classmethod
    def uniform(cls, n: int) -> "FusionWeights":
        return cls(tuple(1.0 / n for _ in range(n)))


@dataclass(frozen=True)
class SweepPoint:
    coordinates: tuple[float, ...]
    params: ParameterSet


def fuse(models: list[ParameterSet], w: FusionWeights | tuple[float, ...]) -> ParameterSet:
    """Coordinate-wise convex combination of aligned parameter sets."""
    if not isinstance(w, FusionWeights):
        w = FusionWeights(tuple(w))
    if len(models) != len(w):
        raise InvalidWeightsError(f"{len(models)} models but {len(w)} coefficients")
    require_aligned(*models)
    for alpha, model in zip(w.alphas, models):
        if alpha == 1.0:
            # exact identity: endpoints of sweeps must be bitwise equal inputs
            return ParameterSet.build([(s.name, s.values) for s in model.segments])
    out = []
    for i, seg in enumerate(models[0].segments):
        acc = np.zeros(seg.shape, dtype=np.float64)
        for alpha, model in zip(w.alphas, models):
            acc += alpha * model.segments[i].values
        out.append((seg.name, acc))
    return ParameterSet.build(out)


def interpolate_pair(a: ParameterSet, b: ParameterSet, steps: int) -> list[SweepPoint]:
    """Evenly spaced points from a to b; point k sits at weight k/(steps-1) on b."""
    if steps < 2:
        raise ValueError("steps must be >= 2")
    require_aligned(a, b)
    points = []
    denom = steps - 1
    for k in range(steps):
        coords = ((denom - k) / denom, k / denom)
        points.append(SweepPoint(coords, fuse([a, b], FusionWeights(coords))))
    return points


def simplex_grid(models: list[ParameterSet], resolution: int) -> list[SweepPoint]:
    """Barycentric grid over a model triplet: all (i, j, k)/resolution points."""
    if len(models) != 3:
        raise ValueError("simplex_grid expects exactly three models")
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    require_aligned(*models)
    points = []
    for i in range(resolution, -1, -1):
        for j in range(resolution - i, -1, -1):
            k = resolution - i - j
            coords = (i / resolution, j / resolution, k / resolution)
            points.append(SweepPoint(coords, fuse(models, FusionWeights(coords))))
    return points


def write_sweep_manifest(
    points: list[SweepPoint], out_dir: str | Path, arch: str = ""
) -> Path:
    """Save every sweep point as a checkpoint plus a manifest that lists
    (coordinates, checkpoint path) pairs; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, point in enumerate(points):
        path = out / f"point-{i:04d}.flab"
        save_checkpoint(path, point.params, arch=arch,
                        extra={"coordinates": list(point.coordinates)})
        entries.append({"coordinates": list(point.coordinates), "path": path.name})
    manifest = out / "sweep.json"
    with open(manifest, "w", encoding="utf-8") as fh:
        json.dump(entries, fh, sort_keys=True, indent=0)
    return manifest


def read_sweep_manifest(manifest_path: str | Path) -> list[SweepPoint]:
    manifest_path = Path(manifest_path)
    with open(manifest_path, encoding="utf-8") as fh:
        entries = json.load(fh)
    points = []
    for entry in entries:
        params, _, _ = load_checkpoint(manifest_path.parent / entry["path"])
        points.append(SweepPoint(tuple(entry["coordinates"]), params))
    return points


def matched_random(
    base: ParameterSet, references: list[ParameterSet], rng: Rng
) -> ParameterSet:
    """Random model whose per-segment distance to the base matches the
    references' average distance.

    Per segment: a random direction is normalized to unit Euclidean norm,
    scaled by the mean reference distance for that segment, and added to
    the base segment.
    """
    if not references:
        raise ValueError("at least one reference model required")
    require_aligned(base, *references)
    gen = rng.generator()
    out = []
    for i, seg in enumerate(base.segments):
        dists = [
            float(np.linalg.norm(ref.segments[i].values - seg.values))
            for ref in references
        ]
        target = float(np.mean(dists))
        if target == 0.0:
            out.append((seg.name, seg.values))
            continue
        for _ in range(100):
            direction = gen.standard_normal(seg.shape)
            norm = float(np.linalg.norm(direction))
            if norm > 0.0:
                break
        else:
            raise RuntimeError(f"could not draw a nonzero direction for segment {seg.name!r}")
        out.append((seg.name, seg.values + (target / norm) * direction))
    return ParameterSet.build(out)
