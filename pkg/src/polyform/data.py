"""Synthetic multipolygon datasets and JSON-lines dataset files."""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import (
    GeometryError,
    Multipolygon,
    Polygon,
    RigidTransform,
    apply_transform,
    normalize_polygon,
    validate_multipolygon,
)
from .io import ParseError, multipolygon_from_dict, multipolygon_to_dict

# rectilinear letter footprints on a 3x3 grid, exterior CCW, holes CW
TEMPLATES = {
    "I": ([(1, 0), (2, 0), (2, 3), (1, 3)], []),
    "L": ([(0, 0), (2, 0), (2, 1), (1, 1), (1, 3), (0, 3)], []),
    "T": ([(1, 0), (2, 0), (2, 2), (3, 2), (3, 3), (0, 3), (0, 2), (1, 2)], []),
    "U": ([(0, 0), (3, 0), (3, 3), (2, 3), (2, 1), (1, 1), (1, 3), (0, 3)], []),
    "O": ([(0, 0), (3, 0), (3, 3), (0, 3)], [[(1, 1), (1, 2), (2, 2), (2, 1)]]),
}
TEMPLATE_NAMES = tuple(TEMPLATES)
MAX_RETRIES = 50


class Task(str, Enum):
    SINGLE_SHAPE = "single-shape"
    PAIR_SHAPE = "pair-shape"
    PAIR_RELATION = "pair-relation"
    PARTIAL_CONTAIN = "partial-contain"


@dataclass(frozen=True)
class LabeledSample:
    mp: Multipolygon
    label: int
    meta: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class DatasetSpec:
    """``num_templates`` letters are used; the class count follows from the task."""

    task: Task = Task.SINGLE_SHAPE
    num_samples: int = 500
    num_templates: int = 5
    noise: float = 0.05
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "task", Task(self.task))
        if not 1 <= self.num_templates <= len(TEMPLATES):
            raise ValueError(f"num_templates must be in 1..{len(TEMPLATES)}")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if self.num_samples < self.num_classes:
            raise ValueError(f"need at least {self.num_classes} samples for {self.num_classes} classes")

    @property
    def num_classes(self) -> int:
        t = self.num_templates
        if self.task is Task.SINGLE_SHAPE:
            return t
        if self.task is Task.PAIR_SHAPE:
            return t * t
        if self.task is Task.PAIR_RELATION:
            return t * (t + 1)  # unordered pairs x {left-of, above}
        return 2


def _centered(template: str):
    ext, holes = TEMPLATES[template]
    xs = [x for x, _ in ext]
    ys = [y for _, y in ext]
    cx, cy = (min(xs) + max(xs)) / 2, (min(ys) + max(ys)) / 2
    return ([(x - cx, y - cy) for x, y in ext],
            [[(x - cx, y - cy) for x, y in h] for h in holes])


def gen_shape(template: str, seed, noise: float = 0.0, rotate: bool = True,
              scale_range=(0.8, 1.2)) -> Polygon:
    """A jittered, scaled and (optionally) randomly rotated letter footprint."""
    if template not in TEMPLATES:
        raise ValueError(f"unknown template {template!r}; choose from {TEMPLATE_NAMES}")
    ext, holes = _centered(template)
    root = np.random.SeedSequence(seed if isinstance(seed, (list, tuple)) else [seed])
    for attempt in range(MAX_RETRIES):
        rng = np.random.default_rng(root.spawn(1)[0] if attempt else root)
        scale = rng.uniform(*scale_range)
        angle = rng.uniform(0, 2 * math.pi) if rotate else 0.0
        t = RigidTransform(angle)

        def jitter(ring):
            xy = np.asarray(ring, dtype=float) * scale
            xy = xy + rng.uniform(-noise, noise, xy.shape)
            return [t.apply_point(tuple(p)) for p in xy]

        try:
            poly = normalize_polygon(jitter(ext), [jitter(h) for h in holes])
            validate_multipolygon(Multipolygon((poly,)))
        except GeometryError:
            continue
        return poly
    raise GeometryError(f"could not generate a valid {template} after {MAX_RETRIES} attempts")


def _bbox(polys) -> np.ndarray:
    xy = np.concatenate([np.asarray(p.exterior) for p in polys])
    return np.array([*xy.min(0), *xy.max(0)])


def _shift(poly: Polygon, dx: float, dy: float) -> Polygon:
    t = RigidTransform(0.0, dx, dy)
    return Polygon(tuple(t.apply_point(p) for p in poly.exterior),
                   tuple(tuple(t.apply_point(p) for p in h) for h in poly.holes))


def _scaled(poly: Polygon, s: float) -> Polygon:
    return Polygon(tuple((x * s, y * s) for x, y in poly.exterior),
                   tuple(tuple((x * s, y * s) for x, y in h) for h in poly.holes))


def _place_beside(a: Polygon, b: Polygon, rng, direction: str) -> Multipolygon:
    """Put b to the right of (or above) a with a random gap and offset."""
    ba, bb = _bbox([a]), _bbox([b])
    gap = rng.uniform(0.5, 1.5)
    if direction == "right":
        dx = ba[2] - bb[0] + gap
        dy = (ba[1] + ba[3]) / 2 - (bb[1] + bb[3]) / 2 + rng.uniform(-0.5, 0.5)
    else:
        dy = ba[3] - bb[1] + gap
        dx = (ba[0] + ba[2]) / 2 - (bb[0] + bb[2]) / 2 + rng.uniform(-0.5, 0.5)
    return Multipolygon((a, _shift(b, dx, dy)))


def _random_rigid(rng) -> RigidTransform:
    return RigidTransform(rng.uniform(0, 2 * math.pi), *rng.uniform(-10, 10, 2))


def _pair_classes(t: int):
    return [(a, b) for a in range(t) for b in range(a, t)]


def _gen_one(spec: DatasetSpec, index: int, label: int) -> LabeledSample:
    names = TEMPLATE_NAMES[:spec.num_templates]
    seq = [spec.seed, index]
    rng = np.random.default_rng(seq + [0])
    meta = {"index": index, "seed": spec.seed}
    if spec.task is Task.SINGLE_SHAPE:
        poly = gen_shape(names[label], seq + [1], spec.noise)
        meta["templates"] = [names[label]]
        return LabeledSample(Multipolygon((poly,)), label, meta)

    if spec.task is Task.PAIR_SHAPE:
        ia, ib = divmod(label, spec.num_templates)
        a = gen_shape(names[ia], seq + [1], spec.noise, rotate=False)
        b = gen_shape(names[ib], seq + [2], spec.noise, rotate=False)
        mp = _place_beside(a, b, rng, "right")
        meta["templates"] = [names[ia], names[ib]]
    elif spec.task is Task.PAIR_RELATION:
        pair, d = divmod(label, 2)
        ia, ib = _pair_classes(spec.num_templates)[pair]
        if rng.random() < 0.5:
            ia, ib = ib, ia
        a = gen_shape(names[ia], seq + [1], spec.noise, rotate=False)
        b = gen_shape(names[ib], seq + [2], spec.noise, rotate=False)
        mp = _place_beside(a, b, rng, "right" if d == 0 else "above")
        meta["templates"] = [names[ia], names[ib]]
        meta["direction"] = "left-of" if d == 0 else "above"
    else:
        frame = _scaled(gen_shape("O", seq + [1], spec.noise, rotate=False), 3.0)
        inner_name = names[rng.integers(len(names))]
        inner = _scaled(gen_shape(inner_name, seq + [2], spec.noise), 0.3)
        if label == 1:
            # inside the frame's hole, which spans about [-1.5, 1.5]^2 before jitter
            dx, dy = rng.uniform(-0.2, 0.2, 2)
            mp = Multipolygon((frame, _shift(inner, dx, dy)))
        else:
            mp = _place_beside(frame, inner, rng, "right" if rng.random() < 0.5 else "above")
        meta["templates"] = ["O", inner_name]
    mp = apply_transform(mp, _random_rigid(rng))
    validate_multipolygon(mp)
    return LabeledSample(mp, label, meta)


def gen_dataset(spec: DatasetSpec) -> list[LabeledSample]:
    """Class-balanced samples (label = index mod num_classes), deterministic in ``spec``."""
    return [_gen_one(spec, i, i % spec.num_classes) for i in range(spec.num_samples)]


def random_multipolygon(seed, max_polygons=4, max_holes=2, min_vertices=4,
                        max_vertices=24) -> Multipolygon:
    """Random valid multipolygon: star-shaped rings on a jittered grid of cells."""
    rng = np.random.default_rng(seed)
    n_poly = int(rng.integers(1, max_polygons + 1))
    cells = rng.permutation(9)[:n_poly]
    polys = []
    for cell in cells:
        cx, cy = 3.0 * (cell % 3), 3.0 * (cell // 3)
        for _ in range(MAX_RETRIES):
            n_holes = int(rng.integers(0, max_holes + 1))
            ext = _star(rng, int(rng.integers(min_vertices, max_vertices + 1)), 0.9, 1.3,
                        (cx, cy), rng.uniform(0, 2 * math.pi))
            centers = [(-0.35, 0.0), (0.35, 0.0)]
            holes = []
            for h in range(n_holes):
                hx, hy = centers[h]
                holes.append(_star(rng, int(rng.integers(min_vertices, max_vertices + 1)), 0.1, 0.25,
                                   (cx + hx, cy + hy), rng.uniform(0, 2 * math.pi)))
            try:
                poly = normalize_polygon(ext, holes)
                validate_multipolygon(Multipolygon((poly,)))
            except GeometryError:
                continue
            polys.append(poly)
            break
        else:
            raise GeometryError("could not generate a random polygon")
    mp = Multipolygon(tuple(polys))
    validate_multipolygon(mp)
    return mp


def _star(rng, n, r_lo, r_hi, center, phase):
    step = 2 * math.pi / n
    angles = phase + step * (np.arange(n) + rng.uniform(-0.3, 0.3, n))
    radii = rng.uniform(r_lo, r_hi, n)
    cx, cy = center
    return [(cx + r * math.cos(a), cy + r * math.sin(a)) for r, a in zip(radii, angles)]


def save_dataset(samples, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            obj = multipolygon_to_dict(s.mp)
            obj["label"] = int(s.label)
            obj["meta"] = s.meta
            fh.write(json.dumps(obj) + "\n")


def load_dataset(path) -> list[LabeledSample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if "label" not in obj:
                    raise ParseError("missing 'label'")
                mp = multipolygon_from_dict(obj)
                label = int(obj["label"])
            except (json.JSONDecodeError, GeometryError, TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            out.append(LabeledSample(mp, label, obj.get("meta", {})))
    return out


def split(samples, ratios=(0.6, 0.2, 0.2), seed=0):
    """Stratified (train, val, test) split after a seeded shuffle."""
    if len(ratios) != 3 or abs(sum(ratios) - 1) > 1e-9 or min(ratios) < 0:
        raise ValueError("ratios must be three nonnegative numbers summing to 1")
    labels = [s.label for s in samples]
    counts = Counter(labels)
    small = sorted(c for c, n in counts.items() if n < 3)
    if small:
        raise ValueError(f"classes {small} have fewer than 3 samples; cannot stratify")
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for c in sorted(counts):
        idx = [i for i, lab in enumerate(labels) if lab == c]
        idx = [idx[k] for k in rng.permutation(len(idx))]
        n_train = round(ratios[0] * len(idx))
        n_val = round(ratios[1] * len(idx))
        parts[0].extend(idx[:n_train])
        parts[1].extend(idx[n_train:n_train + n_val])
        parts[2].extend(idx[n_train + n_val:])
    out = []
    for p in parts:
        p = [p[k] for k in rng.permutation(len(p))]
        out.append([samples[i] for i in p])
    return tuple(out)
