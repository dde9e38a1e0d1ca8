"""Brute-force MAP by exhaustive enumeration, for tiny instances only.

Shares nothing with the DP path: child positions are computed in D_0
coordinates, pixel log-ratios are recomputed from the raw distributions,
and every assignment is scored independently.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dictionary import HierarchicalDictionary
from .generative import FeatureImage, ParseTree
from .lattice import LatticeHierarchy

DEFAULT_CAP = 10**7
TIE_TOL = 1e-12


class InstanceTooLarge(RuntimeError):
    pass


@dataclass
class OracleResult:
    score: float
    parse: ParseTree | None
    candidates: int
    table: np.ndarray | None = None  # (|D_H|, assignments) scores, if requested


def _tree(d: HierarchicalDictionary, obj: int):
    """Node types level by level, top first; children of node j are j*r..j*r+r-1."""
    types = {d.H: [obj]}
    for h in range(d.H, 0, -1):
        types[h - 1] = [c for t in types[h] for c in d.levels[h][t].child_ids]
    return types


def candidate_count(d: HierarchicalDictionary, lattice: LatticeHierarchy, roots: int | None = None) -> int:
    n_internal = sum(d.r ** (d.H - h) for h in range(1, d.H + 1))
    n_roots = lattice.size(d.H) if roots is None else roots
    return n_roots * d.C_r ** n_internal


def _enumerate(image: FeatureImage, d: HierarchicalDictionary, lattice: LatticeHierarchy,
               obj: int, roots: list[tuple[int, ...]], cap: int):
    total = candidate_count(d, lattice, len(roots))
    if total > cap:
        raise InstanceTooLarge(f"{total} assignments exceed the cap of {cap}")
    types = _tree(d, obj)
    internal = [(h, j) for h in range(d.H, 0, -1) for j in range(len(types[h]))]
    C = d.C_r
    # rows in lexicographic order over internal nodes (level order)
    assign = np.indices((C,) * len(internal)).reshape(len(internal), -1).T
    N = assign.shape[0]
    col = {node: i for i, node in enumerate(internal)}

    K = d.alphabet_size
    ratio = np.empty((len(d.levels[0]), K))
    for t, part in enumerate(d.levels[0]):
        for s in range(K):
            p = part.leaf_dist[s]
            ratio[t, s] = -math.inf if p == 0 else math.log(p) - math.log(d.background[s])

    base = np.array(lattice.base_extent)
    log_u = -math.log(lattice.size(d.H))
    all_scores = np.empty((len(roots), N))
    all_pos = []
    all_valid = []
    for ri, root in enumerate(roots):
        pos = {(d.H, 0): np.tile(np.array(root) * lattice.k ** d.H, (N, 1))}
        valid = np.ones(N, dtype=bool)
        score = np.full(N, log_u)
        for h, j in internal:
            part = d.levels[h][types[h][j]]
            a = assign[:, col[(h, j)]]
            disp = np.array([c.displacements for c in part.configs])  # (C, r, ndim)
            score = score + np.array([c.logp for c in part.configs])[a]
            step = lattice.k ** (h - 1)
            for i in range(d.r):
                p = pos[(h, j)] + disp[a, i] * step
                valid &= np.all((p >= 0) & (p < base), axis=1)
                pos[(h - 1, j * d.r + i)] = p
        for j, t in enumerate(types[0]):
            p = np.clip(pos[(0, j)], 0, base - 1)
            sym = image.data[tuple(p.T)]
            score = score + ratio[t, sym]
        score[~valid] = -math.inf
        all_scores[ri] = score
        all_pos.append(pos)
        all_valid.append(valid)
    return types, internal, assign, all_scores, all_pos, all_valid


def _parse_from(d, lattice, obj, types, internal, assign, pos, row) -> ParseTree:
    H = d.H
    cells = [[tuple(int(v) // lattice.k ** h for v in pos[(h, j)][row]) for j in range(len(types[h]))]
             for h in range(H + 1)]
    configs = [[None] * len(types[0])] + [[0] * len(types[h]) for h in range(1, H + 1)]
    for i, (h, j) in enumerate(internal):
        configs[h][j] = int(assign[row, i])
    return ParseTree(obj, [list(types[h]) for h in range(H + 1)], cells, configs)


def brute_force_map(image: FeatureImage, d: HierarchicalDictionary, lattice: LatticeHierarchy,
                    obj: int, cap: int = DEFAULT_CAP, keep_table: bool = False) -> OracleResult:
    """Best (root, assignment) for one object; first maximum in enumeration order wins."""
    roots = list(lattice.enumerate_level(d.H))
    types, internal, assign, scores, pos, _ = _enumerate(image, d, lattice, obj, roots, cap)
    flat = scores.reshape(-1)
    top = flat.max()
    if math.isfinite(top):
        best = int(np.flatnonzero(flat >= top - TIE_TOL * max(1.0, abs(top)))[0])
    else:
        best = 0
    score = float(flat[best])
    parse = None
    if score > -math.inf:
        ri, row = divmod(best, scores.shape[1])
        parse = _parse_from(d, lattice, obj, types, internal, assign, pos[ri], row)
    return OracleResult(score, parse, flat.size, scores if keep_table else None)


def brute_force_global_evidence(image: FeatureImage, d: HierarchicalDictionary, lattice: LatticeHierarchy,
                                obj: int, root, cap: int = DEFAULT_CAP) -> float:
    """Best score with the root pinned at ``root`` (log U included)."""
    _, _, _, scores, _, _ = _enumerate(image, d, lattice, obj, [tuple(root)], cap)
    return float(scores.max())


def leaf_sets(d: HierarchicalDictionary, lattice: LatticeHierarchy, obj: int, root,
              cap: int = DEFAULT_CAP) -> set[frozenset]:
    """Every on-lattice leaf set (D_0 cell, leaf type) the object can produce at ``root``."""
    blank = FeatureImage(np.zeros(lattice.base_extent, dtype=np.int64), d.alphabet_size)
    types, _, assign, _, pos, valid = _enumerate(blank, d, lattice, obj, [tuple(root)], cap)
    out = set()
    for row in np.flatnonzero(valid[0]):
        out.add(frozenset((tuple(int(v) for v in pos[0][(0, j)][row]), t) for j, t in enumerate(types[0])))
    return out
