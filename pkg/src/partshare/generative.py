"""Sampling parses and feature images, and scoring them against the background."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dictionary import HierarchicalDictionary, child_cells
from .lattice import Cell, IndexOutOfRange, LatticeHierarchy

MAX_RETRIES = 100


class GenerativeError(RuntimeError):
    pass


class OverlapUnresolvable(GenerativeError):
    pass


class TooManyObjects(GenerativeError):
    pass


class AlphabetMismatch(ValueError):
    pass


@dataclass
class ParseTree:
    """Full r-ary parse of one object, stored level by level.

    ``types[h][j]``, ``cells[h][j]`` and ``configs[h][j]`` describe node ``j``
    at level ``h``; its children are nodes ``j*r .. j*r+r-1`` at level
    ``h-1``.  ``configs[0]`` holds ``None`` for every leaf.
    """
    object_type: int
    types: list[list[int]]
    cells: list[list[Cell]]
    configs: list[list[int | None]]

    @property
    def H(self) -> int:
        return len(self.types) - 1

    @property
    def root(self) -> Cell:
        return self.cells[self.H][0]

    def leaves(self) -> list[tuple[Cell, int]]:
        return list(zip(self.cells[0], self.types[0]))

    def leaf_set(self) -> frozenset[tuple[Cell, int]]:
        return frozenset(self.leaves())

    def has_overlap(self) -> bool:
        return len(set(self.cells[0])) != len(self.cells[0])

    def to_dict(self, lattice: LatticeHierarchy) -> dict:
        return {
            "type": self.object_type,
            "root": lattice.flat(self.H, self.root),
            "levels": [
                {"level": h, "types": self.types[h],
                 "cells": [lattice.flat(h, c) for c in self.cells[h]],
                 "configs": self.configs[h]}
                for h in range(self.H + 1)
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict, lattice: LatticeHierarchy) -> ParseTree:
        levels = sorted(obj["levels"], key=lambda e: e["level"])
        return cls(
            object_type=int(obj["type"]),
            types=[list(e["types"]) for e in levels],
            cells=[[lattice.unflat(e["level"], i) for i in e["cells"]] for e in levels],
            configs=[list(e["configs"]) for e in levels],
        )


def expand_parse(d: HierarchicalDictionary, lattice: LatticeHierarchy, obj: int, root: Cell,
                 choose) -> ParseTree | None:
    """Build a parse top-down; ``choose(level, type, cell)`` picks a config index.

    Returns None if any child lands off the lattice.
    """
    H = d.H
    types = [[] for _ in range(H + 1)]
    cells = [[] for _ in range(H + 1)]
    configs = [[] for _ in range(H + 1)]
    types[H] = [obj]
    cells[H] = [tuple(root)]
    for h in range(H, 0, -1):
        for t, cell in zip(types[h], cells[h]):
            part = d.levels[h][t]
            c = choose(h, t, cell)
            configs[h].append(c)
            kids = child_cells(lattice, h, cell, part.configs[c])
            if not all(lattice.contains(h - 1, kc) for kc in kids):
                return None
            types[h - 1].extend(part.child_ids)
            cells[h - 1].extend(kids)
    configs[0] = [None] * len(types[0])
    return ParseTree(obj, types, cells, configs)


def _check_root(lattice: LatticeHierarchy, root) -> Cell:
    if isinstance(root, (int, np.integer)):
        return lattice.unflat(lattice.H, int(root))
    root = tuple(int(x) for x in root)
    if not lattice.contains(lattice.H, root):
        raise IndexOutOfRange(f"root {root} outside top lattice {lattice.level_extents[lattice.H]}")
    return root


def sample_parse(d: HierarchicalDictionary, lattice: LatticeHierarchy, obj: int,
                 root=None, rng: np.random.Generator | None = None,
                 occupied: set[Cell] | frozenset = frozenset(),
                 taken_roots: set[Cell] | frozenset = frozenset()) -> ParseTree:
    """Draw a parse from the prior, rejecting off-lattice or colliding draws.

    Without a pinned ``root`` every attempt redraws the root uniformly from
    the top cells not in ``taken_roots``.  ``occupied`` lists D_0 cells
    already used by other objects in the scene.
    """
    if not 0 <= obj < len(d.objects):
        raise IndexError(f"object {obj} not in M_H (|M_H|={len(d.objects)})")
    rng = rng if rng is not None else np.random.default_rng()
    fixed = _check_root(lattice, root) if root is not None else None
    free = [c for c in lattice.enumerate_level(lattice.H) if c not in taken_roots]
    if fixed is None and not free:
        raise TooManyObjects("no free top-level cell for another object")
    probs = {}

    def choose(h, t, cell):
        key = (h, t)
        if key not in probs:
            p = np.exp([c.logp for c in d.levels[h][t].configs])
            probs[key] = p / p.sum()
        return int(rng.choice(len(probs[key]), p=probs[key]))

    for _ in range(MAX_RETRIES):
        x = fixed if fixed is not None else free[int(rng.integers(len(free)))]
        parse = expand_parse(d, lattice, obj, x, choose)
        if parse is None or parse.has_overlap():
            continue
        if occupied and not occupied.isdisjoint(parse.cells[0]):
            continue
        return parse
    raise OverlapUnresolvable(f"object {obj}: no valid non-overlapping parse after {MAX_RETRIES} attempts")


@dataclass
class FeatureImage:
    data: np.ndarray
    K: int

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.int64)
        if self.data.size and (self.data.min() < 0 or self.data.max() >= self.K):
            raise AlphabetMismatch(f"symbols outside 0..{self.K - 1}")

    def dumps(self) -> str:
        grid = self.data.reshape(1, -1) if self.data.ndim == 1 else self.data
        rows, cols = grid.shape
        body = "\n".join(" ".join(str(int(v)) for v in row) for row in grid)
        return f"{rows} {cols} {self.K}\n{body}\n"

    @classmethod
    def loads(cls, text: str, shape: Sequence[int] | None = None) -> FeatureImage:
        toks = text.split()
        rows, cols, K = (int(t) for t in toks[:3])
        vals = np.array([int(t) for t in toks[3:]], dtype=np.int64)
        if vals.size != rows * cols:
            raise ValueError(f"image body has {vals.size} symbols, header says {rows}x{cols}")
        data = vals.reshape(rows, cols)
        if shape is not None:
            data = data.reshape(tuple(shape))
        return cls(data, K)

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.dumps())

    @classmethod
    def load(cls, path, shape: Sequence[int] | None = None) -> FeatureImage:
        with open(path) as f:
            return cls.loads(f.read(), shape)


def render(leaves: Sequence[tuple[Cell, int]], d: HierarchicalDictionary, lattice: LatticeHierarchy,
           rng: np.random.Generator, noise: bool = True) -> FeatureImage:
    """Leaf pixels from their type's distribution, everything else from the background.

    With ``noise=False`` every pixel takes the mode of its distribution.
    """
    K = d.alphabet_size
    extent = lattice.base_extent
    if noise:
        data = rng.choice(K, size=extent, p=np.asarray(d.background))
    else:
        data = np.full(extent, int(np.argmax(d.background)), dtype=np.int64)
    for cell, t in leaves:
        if not lattice.contains(0, cell):
            raise IndexOutOfRange(f"leaf {cell} outside D_0")
        dist = np.asarray(d.levels[0][t].leaf_dist)
        data[tuple(cell)] = rng.choice(K, p=dist) if noise else int(np.argmax(dist))
    return FeatureImage(data, K)


@dataclass
class Scene:
    objects: list[tuple[int, ParseTree]]
    image: FeatureImage
    seed: int | None = None
    noise: bool = True
    meta: dict = field(default_factory=dict)

    def to_dict(self, lattice: LatticeHierarchy) -> dict:
        return {"seed": self.seed, "noise": self.noise,
                "objects": [p.to_dict(lattice) for _, p in self.objects]}

    def sidecar(self, lattice: LatticeHierarchy) -> str:
        return json.dumps(self.to_dict(lattice), indent=1) + "\n"


def sample_scene(d: HierarchicalDictionary, lattice: LatticeHierarchy, objects: Sequence[int],
                 seed: int, noise: bool = True) -> Scene:
    rng = np.random.default_rng(seed)
    n_top = lattice.size(lattice.H)
    if len(objects) > n_top:
        raise TooManyObjects(f"{len(objects)} objects but only {n_top} top-level cells")
    occupied: set[Cell] = set()
    taken: set[Cell] = set()
    placed = []
    for obj in objects:
        parse = sample_parse(d, lattice, int(obj), None, rng, occupied, taken)
        occupied.update(parse.cells[0])
        taken.add(parse.root)
        placed.append((int(obj), parse))
    leaves = [leaf for _, p in placed for leaf in p.leaves()]
    image = render(leaves, d, lattice, rng, noise)
    return Scene(placed, image, seed, noise)


def _pixel_log_ratio(d: HierarchicalDictionary, leaf_type: int, symbol: int) -> float:
    p = d.levels[0][leaf_type].leaf_dist[symbol]
    if p == 0:
        return -math.inf
    return math.log(p) - math.log(d.background[symbol])


def parse_log_likelihood_ratio(parse: ParseTree, image: FeatureImage, d: HierarchicalDictionary,
                               lattice: LatticeHierarchy) -> float:
    """Leaf log-ratios + configuration log-probs + log U(x_H) for one parse."""
    total = 0.0
    for cell, t in parse.leaves():
        total += _pixel_log_ratio(d, t, int(image.data[tuple(cell)]))
    for h in range(1, parse.H + 1):
        for t, c in zip(parse.types[h], parse.configs[h]):
            total += d.levels[h][t].configs[c].logp
    return total - math.log(lattice.size(lattice.H))


def scene_log_likelihood_ratio(scene: Scene, d: HierarchicalDictionary, lattice: LatticeHierarchy) -> float:
    return math.fsum(parse_log_likelihood_ratio(p, scene.image, d, lattice) for _, p in scene.objects)
