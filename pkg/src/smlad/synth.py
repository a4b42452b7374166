"""Seeded synthetic segmentation scenes.

Each scene is a Voronoi partition of the image into classes with per-class
logit ranges, plus three perturbations: a logit dip near class boundaries,
isolated "irregular" pixels, and circular anomalies whose logits are plausible
for the lowest-range class but sit far below the range of the class they cover.
Anomalies are placed inside a single region, clear of class boundaries, the
way road obstacles sit on the road.

Randomness comes from numpy's PCG64 bit generator (O'Neill 2014, default
multiplier/increment constants) seeded with ``SynthConfig.seed``; draws happen
in a fixed order so scenes are reproducible across platforms.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .boundary_suppression import non_boundary_mask
from .tensor_io import AnomalyMask, LabelMap, LogitVolume, write_tensor

LOSER_OFFSET = 4.0
IRREGULAR_DROP = 4.0
BOUNDARY_DIP_WIDTH = 2
MAX_RESAMPLE_ROUNDS = 64


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    class_count: int = 8
    height: int = 128
    width: int = 128
    class_means: tuple[float, ...] | None = None  # default 6 + 2c
    class_scales: tuple[float, ...] | None = None  # default 1
    site_count: int = 12
    anomaly_count: int = 2
    anomaly_radius: int = 10
    anomaly_clearance: int = 12  # min distance from disc edge to another class
    boundary_dip: float = 2.0
    irregular_fraction: float = 0.005
    anomaly_margin: float = 1.0

    def __post_init__(self):
        if self.class_count < 2:
            raise ValueError("class_count must be >= 2")
        if self.height < 1 or self.width < 1:
            raise ValueError("image dimensions must be positive")
        if len(self.means) != self.class_count or len(self.scales) != self.class_count:
            raise ValueError("class_means/class_scales must have class_count entries")
        if any(s <= 0 for s in self.scales):
            raise ValueError("class scales must be positive")
        if not 0.0 <= self.irregular_fraction <= 0.1:
            raise ValueError("irregular_fraction must lie in [0, 0.1]")
        if self.anomaly_count < 0 or self.anomaly_radius < 0:
            raise ValueError("anomaly_count and anomaly_radius must be non-negative")
        if self.anomaly_count and 2 * self.anomaly_radius + 1 > min(self.height, self.width):
            raise ValueError("anomalies do not fit inside the image")
        if self.site_count < 1:
            raise ValueError("site_count must be positive")

    @property
    def means(self) -> np.ndarray:
        if self.class_means is None:
            return 6.0 + 2.0 * np.arange(self.class_count)
        return np.asarray(self.class_means, dtype=np.float64)

    @property
    def scales(self) -> np.ndarray:
        if self.class_scales is None:
            return np.ones(self.class_count)
        return np.asarray(self.class_scales, dtype=np.float64)

    @property
    def sites(self) -> int:
        return self.site_count

    @property
    def anomaly_level(self) -> float:
        return float(self.means.min() - self.anomaly_margin)


@dataclass(frozen=True)
class Scene:
    logits: LogitVolume
    gt_labels: LabelMap
    anomaly_mask: AnomalyMask
    seed: int
    role: str = "eval"


def _voronoi(rng: np.random.Generator, cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """Class map and, per pixel, a lower bound on the distance to another class."""
    H, W = cfg.height, cfg.width
    sites = rng.uniform(0.0, 1.0, size=(cfg.sites, 2)) * np.array([H, W])
    site_class = rng.permutation(np.arange(cfg.sites) % cfg.class_count)
    yy, xx = np.mgrid[0:H, 0:W]
    d2 = (yy[None] + 0.5 - sites[:, 0, None, None]) ** 2 + (xx[None] + 0.5 - sites[:, 1, None, None]) ** 2
    owner = np.argmin(d2, axis=0)
    own_d2 = np.take_along_axis(d2, owner[None], axis=0)[0]
    # Distance to the bisector with each differently-labelled site; the true
    # distance to that site's cell is never smaller.
    clearance = np.full((H, W), np.inf)
    for j in range(cfg.sites):
        sep = np.linalg.norm(sites[owner] - sites[j], axis=-1)
        other = site_class[owner] != site_class[j]
        with np.errstate(divide="ignore", invalid="ignore"):
            dist = (d2[j] - own_d2) / (2.0 * sep)
        clearance = np.where(other, np.minimum(clearance, dist), clearance)
    return site_class[owner].astype(np.int32), clearance


def _truncated_losers(rng: np.random.Generator, centre: np.ndarray, winner: np.ndarray, C: int) -> np.ndarray:
    """Losing logits ~ Normal(centre, 1) conditioned on staying below the winner."""
    losers = centre[None] + rng.standard_normal((C,) + centre.shape)
    for _ in range(MAX_RESAMPLE_ROUNDS):
        bad = losers >= winner[None]
        if not bad.any():
            return losers
        losers[bad] = np.broadcast_to(centre, losers.shape)[bad] + rng.standard_normal(int(bad.sum()))
    return np.minimum(losers, np.nextafter(winner, -np.inf)[None])


def _anomaly_centres(rng, cfg: SynthConfig, labels: np.ndarray, clearance: np.ndarray):
    H, W = labels.shape
    r = cfg.anomaly_radius
    inside = np.zeros((H, W), dtype=bool)
    inside[r : H - r, r : W - r] = True
    # A disc over the lowest-range class would be in-range for that class.
    allowed = inside & (labels != int(np.argmin(cfg.means)))
    if not allowed.any():
        allowed = inside
    ok = np.flatnonzero((allowed & (clearance >= r + cfg.anomaly_clearance)).ravel())
    fallback = int(np.argmax(np.where(allowed, clearance, -np.inf)))
    for _ in range(cfg.anomaly_count):
        k = int(ok[rng.integers(ok.size)]) if ok.size else fallback
        yield divmod(k, W)


def generate_scene(cfg: SynthConfig) -> Scene:
    """Draw one scene: logits, ground-truth classes and anomaly mask.

    Clean pixels predict their ground-truth class. The boundary dip lowers only
    the winning logit and so may flip predictions next to class boundaries;
    irregular pixels shift the whole logit vector and keep their class.
    """
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    C, H, W = cfg.class_count, cfg.height, cfg.width
    labels, clearance = _voronoi(rng, cfg)
    means, scales = cfg.means, cfg.scales

    mu = means[labels]
    winner = mu + scales[labels] * rng.standard_normal((H, W))
    logits = _truncated_losers(rng, mu - LOSER_OFFSET, winner, C)

    if cfg.boundary_dip:
        near_boundary = non_boundary_mask(LabelMap(labels, C), BOUNDARY_DIP_WIDTH).data == 0
        winner = winner - cfg.boundary_dip * near_boundary
    irregular = rng.uniform(size=(H, W)) < cfg.irregular_fraction
    winner = winner - IRREGULAR_DROP * irregular
    logits = logits - IRREGULAR_DROP * irregular[None]

    anomaly = np.zeros((H, W), dtype=bool)
    if cfg.anomaly_count:
        r = cfg.anomaly_radius
        yy, xx = np.mgrid[0:H, 0:W]
        for cy, cx in _anomaly_centres(rng, cfg, labels, clearance):
            anomaly |= (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        # Confident low-range logits on top of the covered region's class.
        level = np.full((H, W), cfg.anomaly_level)
        a_winner = level + rng.standard_normal((H, W))
        a_losers = _truncated_losers(rng, level - LOSER_OFFSET, a_winner, C)
        winner = np.where(anomaly, a_winner, winner)
        logits = np.where(anomaly[None], a_losers, logits)

    np.put_along_axis(logits, labels[None].astype(np.intp), winner[None], axis=0)
    return Scene(
        LogitVolume(logits),
        LabelMap(labels, C, allow_ignore=True),
        AnomalyMask(anomaly.astype(np.uint8)),
        cfg.seed,
    )


def generate_corpus(cfg: SynthConfig, count: int, count_train: int = 0) -> list[Scene]:
    """Scenes with seeds ``cfg.seed + i``; the first ``count_train`` carry no anomalies."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if not 0 <= count_train <= count:
        raise ValueError("count_train must lie in [0, count]")
    scenes = []
    for i in range(count):
        train = i < count_train
        sub = replace(cfg, seed=cfg.seed + i, anomaly_count=0 if train else cfg.anomaly_count)
        scene = generate_scene(sub)
        scenes.append(replace(scene, role="train" if train else "eval"))
    return scenes


def write_corpus(scenes: list[Scene], out_dir: str | os.PathLike, logits_dtype=np.float32) -> Path:
    """Write scenes as NPY files plus a ``manifest.json``; returns the manifest path.

    Logits are stored at ``logits_dtype`` (float32, the canonical on-disk precision).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, scene in enumerate(scenes):
        stem = f"scene_{i:04d}"
        logits = LogitVolume(scene.logits.data.astype(logits_dtype))
        write_tensor(logits, out / f"{stem}_logits.npy")
        entry = {"logits": f"{stem}_logits.npy", "role": scene.role, "seed": int(scene.seed)}
        if scene.role != "train":
            write_tensor(scene.anomaly_mask, out / f"{stem}_mask.npy")
            label_dtype = np.uint8 if scene.gt_labels.class_count <= 255 else np.uint16
            gt = LabelMap(scene.gt_labels.data.astype(label_dtype), scene.gt_labels.class_count, True)
            write_tensor(gt, out / f"{stem}_labels.npy")
            entry["gt_mask"] = f"{stem}_mask.npy"
            entry["gt_labels"] = f"{stem}_labels.npy"
        entries.append(entry)
    manifest = out / "manifest.json"
    manifest.write_text(json.dumps(entries, indent=2) + "\n")
    return manifest
