import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from partshare.dictionary import HierarchicalDictionary, RegimeSpec, build_regime_dictionary, degenerate_leaf
from partshare.generative import AlphabetMismatch, FeatureImage, GenerativeError, sample_scene
from partshare.inference import (InvalidRoot, MODES, OpCounter, ScopeUnresolvable, bottom_up, detect_all,
                                 first_max, leaf_evidence, select_models, top_down)
from partshare.lattice import build_hierarchy
from partshare.oracle import brute_force_global_evidence


def uniform_bg_dict():
    d = HierarchicalDictionary(H=1, r=2, q="1/2", background=[0.2] * 5)
    d.add_leaf(degenerate_leaf(3, 5))
    d.add_leaf([0.0, 0.25, 0.25, 0.25, 0.25])
    d.compose([0, 1], [(((0,), (1,)), 0.0)], 1)
    return d


def test_leaf_evidence_values():
    d = uniform_bg_dict()
    lat = build_hierarchy(8, "1/2", 1)
    img = FeatureImage(np.array([3, 0, 3, 1, 0, 0, 0, 0]), 5)
    u = leaf_evidence(img, d, lat)
    assert u[0, 0] == pytest.approx(math.log(5), abs=1e-12)
    assert u[0, 1] == -math.inf
    assert u[1, 1] == -math.inf
    assert u[1, 3] == pytest.approx(math.log(0.25 / 0.2), abs=1e-12)


def test_leaf_evidence_alphabet_mismatch():
    d = uniform_bg_dict()
    with pytest.raises(AlphabetMismatch):
        leaf_evidence(FeatureImage(np.zeros(8, dtype=int), 4), d)


def test_h1_single_config_sums_children():
    d = uniform_bg_dict()
    lat = build_hierarchy(8, "1/2", 1)
    img = FeatureImage(np.array([3, 2, 3, 1, 0, 3, 3, 4]), 5)
    u = leaf_evidence(img, d, lat)
    table = bottom_up(u, d, lat)
    for x in range(4):
        assert table.scores[1][0][x] == u[0, 2 * x] + u[1, 2 * x + 1]
    parse = top_down(table, d, ((0,), 0))
    assert parse.cells[0] == [(0,), (1,)]


def test_shared_part_dictionary_matches_oracle(shared_dict, lattice_8):
    rng = np.random.default_rng(0)
    for _ in range(5):
        img = FeatureImage(rng.integers(0, 5, size=8), 5)
        table = bottom_up(leaf_evidence(img, shared_dict, lattice_8), shared_dict, lattice_8)
        for t in (0, 1):
            for x in lattice_8.enumerate_level(2):
                want = brute_force_global_evidence(img, shared_dict, lattice_8, t, x)
                assert table.global_evidence(t, x) == pytest.approx(want, abs=1e-9, rel=0)


def test_scope_unresolvable(shared_dict, lattice_8):
    u = np.zeros((2, 8))
    with pytest.raises(ScopeUnresolvable):
        bottom_up(u, shared_dict, lattice_8, scope=2)


def test_full_counter_equals_shared_formula():
    d = build_regime_dictionary(RegimeSpec("ExponentialGrowth"), 3, 2, 3, seed=0, q="1/2")
    lat = build_hierarchy(32, "1/2", 3)
    c = OpCounter(3)
    bottom_up(np.zeros((d.sizes[0], 32)), d, lat, counter=c)
    assert c.total() == sum(d.sizes[h] * 3 * lat.size(h) for h in (1, 2, 3))


def test_select_nothing_when_all_minus_inf(shared_dict, lattice_8):
    img = FeatureImage(np.full(8, 0), 5)
    table = bottom_up(leaf_evidence(img, shared_dict, lattice_8), shared_dict, lattice_8)
    assert select_models(table, T=math.inf) == []


def test_select_everything_at_minus_inf_threshold(shared_dict, lattice_8):
    img = FeatureImage(np.array([1, 2, 1, 2, 0, 0, 1, 2]), 5)
    table = bottom_up(leaf_evidence(img, shared_dict, lattice_8), shared_dict, lattice_8)
    assert len(select_models(table, T=-math.inf)) == lattice_8.size(2)


def test_invalid_root():
    d = uniform_bg_dict()
    lat = build_hierarchy(8, "1/2", 1)
    img = FeatureImage(np.zeros(8, dtype=int), 5)
    table = bottom_up(leaf_evidence(img, d, lat), d, lat)
    with pytest.raises(InvalidRoot):
        top_down(table, d, ((0,), 0))


def test_first_max_near_ties():
    stacked = np.array([[1.0, -np.inf, 2.0], [1.0 + 1e-15, -np.inf, 3.0]])
    best_score, best = first_max(stacked)
    assert list(best) == [0, 0, 1]
    assert best_score[0] == 1.0 and best_score[1] == -np.inf and best_score[2] == 3.0


def test_modes_agree_on_shared_instance(shared_dict, lattice_8):
    img = FeatureImage(np.array([1, 2, 1, 2, 2, 1, 1, 2]), 5)
    runs = {m: detect_all(img, shared_dict, lattice_8, -math.inf, m) for m in MODES}
    dets = runs["serial-shared"][0]
    assert all(runs[m][0] == dets for m in MODES)
    assert runs["serial-unshared"][1].total() > runs["serial-shared"][1].total()


def test_parallel_depth_h3():
    d = build_regime_dictionary(RegimeSpec("ExponentialGrowth"), 3, 2, 2, seed=1, q="1/2")
    lat = build_hierarchy(32, "1/2", 3)
    img = sample_scene(d, lat, [2], 3).image
    dets, _, sched = detect_all(img, d, lat, -math.inf, "parallel-sim")
    assert dets and sched.depth == 7
    assert (sched.count("bottom-up"), sched.count("selection"), sched.count("top-down")) == (3, 1, 3)
    assert sched.neurons == sum(d.sizes[h] * lat.size(h) for h in (1, 2, 3))


def test_unshared_over_shared_grows_with_objects():
    ratios = []
    for H in (1, 2, 3):
        d = build_regime_dictionary(RegimeSpec("ExponentialGrowth"), H, 2, 2, seed=0, q="1/2")
        lat = build_hierarchy(16, "1/2", H)
        img = FeatureImage(np.zeros(16, dtype=int), 5)
        shared = detect_all(img, d, lat, 0.0, "serial-shared")[1].total()
        unshared = detect_all(img, d, lat, 0.0, "serial-unshared")[1].total()
        ratios.append(unshared / shared)
    assert ratios[0] < ratios[1] < ratios[2]


def test_counters_deterministic(shared_dict, lattice_8):
    img = FeatureImage(np.array([1, 2, 1, 2, 2, 1, 1, 2]), 5)
    a = detect_all(img, shared_dict, lattice_8, 0.0)[1]
    b = detect_all(img, shared_dict, lattice_8, 0.0)[1]
    assert a == b
    assert OpCounter.from_dict(a.to_dict()) == a


def test_workers_do_not_change_tables():
    d = build_regime_dictionary(RegimeSpec("ExponentialGrowth"), 2, 2, 3, seed=2, q="1/4", ndim=2)
    lat = build_hierarchy((16, 16), "1/4", 2)
    u = leaf_evidence(sample_scene(d, lat, [3], 1).image, d, lat)
    a, b = bottom_up(u, d, lat), bottom_up(u, d, lat, workers=4)
    for h in (1, 2):
        for t in a.scores[h]:
            assert np.array_equal(a.scores[h][t], b.scores[h][t])
            assert np.array_equal(a.backptr[h][t], b.backptr[h][t])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(-5, 5), st.floats(0, 5))
def test_detections_monotone_in_threshold(seed, T, gap):
    d = build_regime_dictionary(RegimeSpec("UserSupplied", sizes=[3, 3, 3]), 2, 2, 2, seed, q="1/2")
    lat = build_hierarchy(16, "1/2", 2)
    try:
        img = sample_scene(d, lat, [seed % 3], seed).image
    except GenerativeError:
        img = sample_scene(d, lat, [], seed).image
    low = {(x.root, x.object_type) for x in detect_all(img, d, lat, T)[0]}
    high = {(x.root, x.object_type) for x in detect_all(img, d, lat, T + gap)[0]}
    assert high <= low
