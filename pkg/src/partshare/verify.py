"""Randomised small-instance sweeps: DP against the oracle, sharing, counters, modes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dictionary import HierarchicalDictionary, RegimeSpec, build_regime_dictionary
from .generative import FeatureImage, GenerativeError, parse_log_likelihood_ratio, sample_scene
from .inference import MODES, TIE_TOL, OpCounter, bottom_up, detect_all, first_max, leaf_evidence, top_down
from .lattice import LatticeHierarchy, build_hierarchy
from .oracle import brute_force_map, leaf_sets

SCORE_TOL = 1e-9

# (extent, q, H) combinations within the desk-size limits
_LATTICES_1D = [(8, "1/2", 1), (8, "1/2", 2), (16, "1/2", 2), (16, "1/2", 3), (32, "1/2", 3),
                (16, "1/4", 1), (16, "1/4", 2), (32, "1/4", 2)]
_LATTICES_2D = [((8, 8), "1/4", 1), ((8, 8), "1/4", 2), ((16, 16), "1/4", 2), ((16, 16), "1/4", 3),
                ((16, 16), "1/16", 1), ((16, 16), "1/16", 2)]


@dataclass
class Instance:
    seed: int
    lattice: LatticeHierarchy
    dictionary: HierarchicalDictionary
    image: FeatureImage


@dataclass
class InstanceResult:
    seed: int
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def random_instance(seed: int) -> Instance:
    """A reproducible tiny instance: r=2, C_r<=3, |M_H|<=4, H<=3."""
    rng = np.random.default_rng([seed, 7919])
    if rng.random() < 0.5:
        extent, q, H = _LATTICES_1D[rng.integers(len(_LATTICES_1D))]
    else:
        extent, q, H = _LATTICES_2D[rng.integers(len(_LATTICES_2D))]
    lattice = build_hierarchy(extent, q, H)
    C_r = int(rng.integers(1, 4))
    sizes = [int(rng.integers(2, 5))] + [int(rng.integers(2, 5)) for _ in range(H - 1)] + [int(rng.integers(1, 5))]
    d = build_regime_dictionary(RegimeSpec("UserSupplied", sizes=sizes), H, 2, C_r, seed,
                                q=q, ndim=lattice.ndim)
    n_obj = int(rng.integers(0, min(2, lattice.size(H)) + 1))
    objs = [int(o) for o in rng.integers(len(d.objects), size=n_obj)]
    try:
        image = sample_scene(d, lattice, objs, seed, noise=True).image
    except GenerativeError:
        image = sample_scene(d, lattice, [], seed, noise=True).image
    return Instance(seed, lattice, d, image)


def _best_for(table, obj):
    arr = table.scores[table.H][obj] + table.log_u
    _, flat = first_max(arr.reshape(-1, 1))
    flat = int(flat[0])
    cell = tuple(int(c) for c in np.unravel_index(flat, arr.shape))
    return cell, float(arr[cell])


def _canonical_best(cands):
    """(score, type, cell, parse) with the highest score; near-ties go to the smaller (type, cell)."""
    finite = [c for c in cands if c[0] > -math.inf]
    if not finite:
        return None
    top = max(c[0] for c in finite)
    cut = top - TIE_TOL * max(1.0, abs(top))
    return min((c for c in finite if c[0] >= cut), key=lambda c: (c[1], c[2]))


def check_instance(inst: Instance, dp_dictionary: HierarchicalDictionary | None = None) -> InstanceResult:
    """Run every cross-check on one instance.

    ``dp_dictionary`` replaces the dictionary seen by the DP side only; the
    oracle always uses ``inst.dictionary``.
    """
    d, lat, img = inst.dictionary, inst.lattice, inst.image
    dp = dp_dictionary if dp_dictionary is not None else d
    res = InstanceResult(inst.seed)
    fail = res.failures.append

    unaries = leaf_evidence(img, dp, lat)
    shared_counter = OpCounter(dp.H)
    full = bottom_up(unaries, dp, lat, "full", shared_counter)

    oracle_best = []
    for obj in range(len(d.objects)):
        oracle = brute_force_map(img, d, lat, obj)
        if oracle.parse is not None:
            oracle_best.append((oracle.score, obj, oracle.parse.root, oracle.parse))
        cell, score = _best_for(full, obj)
        if oracle.score == -math.inf or score == -math.inf:
            if oracle.score != score:
                fail(f"object {obj}: oracle {oracle.score!r} vs DP {score!r}")
            continue
        if abs(oracle.score - score) > SCORE_TOL:
            fail(f"object {obj}: oracle score {oracle.score!r} vs DP {score!r}")
            continue
        parse = top_down(full, dp, (cell, obj))
        if parse != oracle.parse:
            fail(f"object {obj}: DP parse differs from oracle parse")
        rescored = parse_log_likelihood_ratio(parse, img, d, lat)
        if abs(rescored - score) > SCORE_TOL:
            fail(f"object {obj}: parse rescores to {rescored!r}, table has {score!r}")

    for obj in range(len(dp.objects)):
        single = bottom_up(unaries, dp, lat, obj)
        for h, ordinals in enumerate(dp.closure(obj)):
            if h == 0:
                continue
            for t in ordinals:
                if not (np.array_equal(single.scores[h][t], full.scores[h][t])
                        and np.array_equal(single.backptr[h][t], full.backptr[h][t])):
                    fail(f"sharing: object {obj} part ({h},{t}) differs from the shared table")

    for h in range(1, dp.H + 1):
        expect = len(dp.levels[h]) * dp.C_r * lat.size(h)
        if shared_counter.config_evaluations[h] != expect:
            fail(f"shared counter level {h}: {shared_counter.config_evaluations[h]} != {expect}")

    runs = {mode: detect_all(img, dp, lat, -math.inf, mode) for mode in MODES}
    unshared_counter = runs["serial-unshared"][1]
    for h in range(1, dp.H + 1):
        expect = len(dp.objects) * dp.C_r * dp.r ** (dp.H - h) * lat.size(h)
        if unshared_counter.config_evaluations[h] != expect:
            fail(f"unshared counter level {h}: {unshared_counter.config_evaluations[h]} != {expect}")
    ref = runs["serial-shared"][0]
    want = _canonical_best(oracle_best)
    got = _canonical_best([(x.score, x.object_type, x.root, x.parse) for x in ref])
    if (want is None) != (got is None):
        fail(f"detect_all best {got and got[0]!r} vs oracle best {want and want[0]!r}")
    elif want is not None:
        if abs(want[0] - got[0]) > SCORE_TOL:
            fail(f"detect_all best score {got[0]!r} vs oracle {want[0]!r}")
        elif got[3] != want[3]:
            fail("detect_all best parse differs from oracle parse")
    for mode in MODES[1:]:
        if runs[mode][0] != ref:
            fail(f"mode {mode}: detections differ from serial-shared")
    return res


def run_sweep(n: int, base_seed: int = 0, fault: tuple | None = None) -> list[InstanceResult]:
    """``fault=(level, ordinal, config, delta)`` perturbs one logp on the DP side."""
    out = []
    for i in range(n):
        inst = random_instance(base_seed + i)
        dp = None
        if fault is not None:
            h, t, c, delta = fault
            h = min(h, inst.dictionary.H)
            t = min(t, len(inst.dictionary.levels[h]) - 1)
            c = min(c, inst.dictionary.C_r - 1)
            dp = inst.dictionary.with_logp_perturbed(h, t, c, delta)
        out.append(check_instance(inst, dp))
    return out


def ambiguous_pairs(d: HierarchicalDictionary, lattice: LatticeHierarchy, root=None) -> list[tuple]:
    """Pairs of (object, leaf set) that a noise-free render cannot tell apart.

    Assumes degenerate leaves on a background-mode image: a candidate scores
    finite only if each of its leaves sits on a planted pixel of its own
    symbol.  Checked at one interior root; the rule is translation invariant
    and border roots only lose candidates.
    """
    if root is None:
        root = tuple(n // 2 for n in lattice.level_extents[lattice.H])
    symbol = [int(np.argmax(p.leaf_dist)) for p in d.levels[0]]
    sets = {obj: leaf_sets(d, lattice, obj, root) for obj in range(len(d.objects))}
    out = []
    for obj, planted_sets in sets.items():
        for planted in planted_sets:
            pixels = {cell: symbol[t] for cell, t in planted}
            for other, cands in sets.items():
                for cand in cands:
                    if (other, cand) == (obj, planted):
                        continue
                    if all(pixels.get(cell) == symbol[t] for cell, t in cand):
                        out.append(((obj, planted), (other, cand)))
    return out
