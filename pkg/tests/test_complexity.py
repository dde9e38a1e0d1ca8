import warnings
from fractions import Fraction

import numpy as np
import pytest

from partshare.complexity import (ComplexityParams, DegenerateFanout, ParamMismatch, loglinear_slope,
                                  predict_bottom_up, predict_model_selection, predict_multi_no_sharing,
                                  predict_neurons, predict_shared, predict_single_object,
                                  predict_top_down_bound, reconcile, regime_report, unshared_level_costs)
from partshare.dictionary import RegimeSpec, build_regime_dictionary, hump_sizes
from partshare.generative import FeatureImage
from partshare.inference import detect_all, run_params
from partshare.lattice import build_hierarchy

GRID = [(Fraction(1, k), r, H) for k in (2, 4, 9) for r in (2, 3, 4) for H in range(1, 7)]


def P(D0=64, q="1/4", H=2, r=2, C_r=4, sizes=None):
    return ComplexityParams(D0, Fraction(q), H, r, C_r, tuple(sizes or [1] * H))


def test_bottom_up_examples():
    assert predict_bottom_up(P()).exact == 144
    assert predict_bottom_up(P(H=1, r=3)).exact == 64 * 4 * Fraction(1, 4)


def test_model_selection_examples():
    p = P(D0=256)
    assert predict_model_selection(p) == 16
    assert predict_model_selection(p, shared=True) == 48
    assert predict_model_selection(ComplexityParams(256, Fraction(1, 4), 0, 2, 1, ())) == 256


def test_top_down_examples():
    est = predict_top_down_bound(P())
    # q^H |D_0| = 4 roots, each costing C_r * (r + 1) = 12
    assert est.exact == 48
    # the published closed form leaves out the root level: 4*4*2/(1/2)*(1/2) = 32
    assert est.closed_form == pytest.approx(32, abs=1e-12)


def test_top_down_r1_degenerate():
    with pytest.warns(DegenerateFanout):
        est = predict_top_down_bound(P(r=1))
    assert est.closed_form is None
    assert est.exact == 2 * 4 * 4


def test_single_and_multi_examples():
    assert predict_single_object(P()) == Fraction(1024, 7)
    assert predict_multi_no_sharing(P(sizes=[1, 7])) == 1024
    assert predict_multi_no_sharing(P(sizes=[1, 2])) == 2 * predict_multi_no_sharing(P(sizes=[1, 1]))
    assert predict_single_object(P(D0=128)) == 2 * predict_single_object(P())


def test_shared_and_neuron_examples():
    p = P(sizes=[4, 8])
    total, curve = predict_shared(p)
    assert total == 384 and curve == [256, 128]
    assert predict_neurons(p) == 96
    assert predict_neurons(p) * p.C_r == total


@pytest.mark.parametrize("q,r,H", GRID)
def test_closed_forms_on_grid(q, r, H):
    p = ComplexityParams(4096, q, H, r, 2, tuple([1] * H))
    bu = predict_bottom_up(p)
    assert bu.rel_error <= 1e-9
    # the approximation drops exactly the (q/r)^H fraction of itself
    so = predict_single_object(p)
    assert (so - bu.exact) / so == (q / r) ** H
    if q <= Fraction(1, 2):
        assert predict_top_down_bound(p).exact <= bu.exact


@pytest.mark.parametrize("q,r,H", GRID)
def test_tree_regime_shared_equals_unshared(q, r, H):
    sizes = RegimeSpec("ExponentialDecrease").level_sizes(H, q, r)
    p = ComplexityParams(4096, q, H, r, 2, tuple(sizes[1:]))
    assert predict_shared(p)[1] == unshared_level_costs(p)


def test_growth_regime_neurons_linear_in_H():
    for H in range(1, 7):
        sizes = RegimeSpec("ExponentialGrowth", a=2).level_sizes(H, "1/4", 2)
        p = ComplexityParams(4096, Fraction(1, 4), H, 2, 3, tuple(sizes[1:]))
        assert predict_neurons(p) == 2 * H * 4096
        assert set(predict_shared(p)[1]) == {2 * 4096 * 3}


def test_decrease_regime_neurons_exponential():
    ns = []
    for H in range(1, 9):
        sizes = RegimeSpec("ExponentialDecrease").level_sizes(H, "1/2", 4)
        ns.append(float(predict_neurons(ComplexityParams(256, Fraction(1, 2), H, 4, 1, tuple(sizes[1:])))))
    growth = np.exp(loglinear_slope(ns))
    assert growth > 3.5     # tends to r = 4


def test_regime_verdicts():
    for kind, sizes, check in [("ExponentialGrowth", None, "flat_shared"),
                               ("ExponentialDecrease", None, "shared_equals_unshared"),
                               ("UserSupplied", hump_sizes(6, "1/4", 3), "shared_below_unshared")]:
        regime = RegimeSpec(kind, sizes=sizes)
        lv = regime.level_sizes(6, "1/4", 3)
        rep = regime_report(regime, ComplexityParams(4096, Fraction(1, 4), 6, 3, 2, tuple(lv[1:])))
        assert rep.checks[check], kind
        assert rep.parallel_depth == 13
        assert "PASS" in rep.verdicts[0]


def _run(mode):
    d = build_regime_dictionary(RegimeSpec("ExponentialGrowth"), 2, 2, 2, seed=0, q="1/2")
    lat = build_hierarchy(16, "1/2", 2)
    img = FeatureImage(np.zeros(16, dtype=int), 5)
    _, counter, _ = detect_all(img, d, lat, 0.0, mode)
    p = ComplexityParams(16, Fraction(1, 2), 2, 2, 2, tuple(d.sizes[1:]))
    return p, counter, run_params(d, lat, mode)


@pytest.mark.parametrize("mode", ["serial-shared", "serial-unshared", "parallel-sim"])
def test_reconcile_exact(mode):
    p, counter, run = _run(mode)
    rows = reconcile(p, counter, run)
    assert all(r.ok for r in rows)


def test_reconcile_param_mismatch():
    p, counter, run = _run("serial-shared")
    with pytest.raises(ParamMismatch):
        reconcile(ComplexityParams(32, p.q, p.H, p.r, p.C_r, p.level_sizes), counter, run)


def test_invalid_params():
    with pytest.raises(ValueError):
        ComplexityParams(64, Fraction(3, 2), 1, 2, 2, (1,))
    with pytest.raises(ValueError):
        ComplexityParams(64, Fraction(1, 2), 2, 2, 2, (1,))


def test_no_warning_for_r_above_one():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        predict_top_down_bound(P(r=3))
