"""Operation-count predictors for serial, shared and parallel inference.

Every predictor returns an exact rational count.  Where the closed form in
the literature drops or bounds a term, ``Estimate.closed_form`` carries that
value next to the exact sum so the two can be compared.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .dictionary import RegimeSpec
from .inference import OpCounter
from .lattice import Rational, as_fraction

FLAT_TOL = 1e-9


class ParamMismatch(ValueError):
    pass


class DegenerateFanout(UserWarning):
    pass


@dataclass(frozen=True)
class ComplexityParams:
    D0_size: int
    q: Fraction
    H: int
    r: int
    C_r: int
    level_sizes: tuple[int, ...]  # |M_1| .. |M_H|

    def __post_init__(self):
        object.__setattr__(self, "q", as_fraction(self.q))
        object.__setattr__(self, "level_sizes", tuple(int(m) for m in self.level_sizes))
        if not 0 < self.q < 1:
            raise ValueError(f"q={self.q} must lie in (0, 1)")
        if self.D0_size < 1 or self.r < 1 or self.C_r < 1 or self.H < 0:
            raise ValueError("D0_size, r, C_r must be positive and H non-negative")
        if len(self.level_sizes) != self.H or any(m < 1 for m in self.level_sizes):
            raise ValueError(f"need {self.H} positive level sizes, got {self.level_sizes}")

    def M(self, h: int) -> int:
        return self.level_sizes[h - 1]

    def D(self, h: int) -> Fraction:
        return self.D0_size * self.q ** h


@dataclass(frozen=True)
class Estimate:
    exact: Fraction
    closed_form: float | None

    @property
    def rel_error(self) -> float | None:
        if self.closed_form is None:
            return None
        if self.exact == 0:
            return abs(self.closed_form)
        return abs(self.closed_form - float(self.exact)) / float(self.exact)


def predict_bottom_up(p: ComplexityParams) -> Estimate:
    """Single object, no sharing: C_r evaluations per node per cell, summed over levels."""
    exact = sum((p.D0_size * p.C_r * Fraction(p.r) ** (p.H - h) * p.q ** h for h in range(1, p.H + 1)),
                Fraction(0))
    x = float(p.q) / p.r
    closed = p.D0_size * p.C_r * float(p.q) * p.r ** (p.H - 1) / (1 - x) * (1 - x ** p.H)
    return Estimate(exact, closed)


def bottom_up_level_costs(p: ComplexityParams) -> list[Fraction]:
    return [p.D0_size * p.C_r * Fraction(p.r) ** (p.H - h) * p.q ** h for h in range(1, p.H + 1)]


def predict_model_selection(p: ComplexityParams, shared: bool = False) -> Fraction:
    n = p.D0_size * p.q ** p.H
    return n * (p.H + 1) if shared else n


def predict_top_down_bound(p: ComplexityParams) -> Estimate:
    """Top-down cost if every top cell were a detection.

    ``exact`` sums C_r * r**(H-h) over all levels 1..H.  ``closed_form`` is
    the published expression, whose (1 - 1/r**(H-1)) factor leaves out the
    root level; it is None for r == 1.
    """
    roots = p.D0_size * p.q ** p.H
    exact = sum((p.C_r * Fraction(p.r) ** (p.H - h) * roots for h in range(1, p.H + 1)), Fraction(0))
    if p.r == 1:
        warnings.warn("r=1: closed form divides by zero; returning the direct sum", DegenerateFanout)
        return Estimate(exact, None)
    closed = (float(roots) * p.C_r * p.r ** (p.H - 1) / (1 - 1 / p.r)) * (1 - 1 / p.r ** (p.H - 1))
    return Estimate(exact, closed)


def predict_single_object(p: ComplexityParams) -> Fraction:
    return p.D0_size * p.C_r * p.q * Fraction(p.r) ** (p.H - 1) / (1 - p.q / p.r)


def predict_multi_no_sharing(p: ComplexityParams) -> Fraction:
    return p.M(p.H) * predict_single_object(p)


def predict_shared(p: ComplexityParams) -> tuple[Fraction, list[Fraction]]:
    curve = [p.D0_size * p.C_r * p.M(h) * p.q ** h for h in range(1, p.H + 1)]
    return sum(curve, Fraction(0)), curve


def predict_neurons(p: ComplexityParams) -> Fraction:
    return sum((p.M(h) * p.q ** h * p.D0_size for h in range(1, p.H + 1)), Fraction(0))


def unshared_level_costs(p: ComplexityParams) -> list[Fraction]:
    """Exact per-level cost of running every object separately."""
    return [p.M(p.H) * c for c in bottom_up_level_costs(p)]


# -- regimes ---------------------------------------------------------------

@dataclass
class RegimeRow:
    h: int
    M_h: int
    shared_cost: Fraction
    unshared_cost: Fraction
    neurons: Fraction


@dataclass
class RegimeReport:
    kind: str
    params: ComplexityParams
    rows: list[RegimeRow]
    N_ps: Fraction
    N_mo: Fraction          # |M_H| * closed-form single-object cost
    N_mo_exact: Fraction    # |M_H| * exact bottom-up sum
    N_n: Fraction
    parallel_depth: int
    checks: dict[str, bool] = field(default_factory=dict)
    verdicts: list[str] = field(default_factory=list)


def is_flat(values: Sequence[Fraction]) -> bool:
    lo, hi = min(values), max(values)
    return lo > 0 and hi / lo <= 1 + FLAT_TOL


def is_equal(a: Sequence[Fraction], b: Sequence[Fraction]) -> bool:
    return all(abs(x - y) <= FLAT_TOL * max(abs(x), abs(y), 1) for x, y in zip(a, b))


def params_for_regime(regime: RegimeSpec, D0_size: int, q: Rational, H: int, r: int, C_r: int) -> ComplexityParams:
    sizes = regime.level_sizes(H, q, r)
    return ComplexityParams(D0_size, as_fraction(q), H, r, C_r, tuple(sizes[1:]))


def regime_report(regime: RegimeSpec | str, p: ComplexityParams) -> RegimeReport:
    """Per-level shared/unshared costs plus the mechanical result checks."""
    kind = regime.kind if isinstance(regime, RegimeSpec) else regime
    _, shared = predict_shared(p)
    unshared = unshared_level_costs(p)
    rows = [RegimeRow(h, p.M(h), shared[h - 1], unshared[h - 1], p.M(h) * p.D(h))
            for h in range(1, p.H + 1)]
    N_ps = sum(shared, Fraction(0))
    N_mo_exact = sum(unshared, Fraction(0))
    rep = RegimeReport(kind, p, rows, N_ps, predict_multi_no_sharing(p), N_mo_exact,
                       predict_neurons(p), 2 * p.H + 1)
    rep.checks = {
        "flat_shared": is_flat(shared),
        "shared_equals_unshared": is_equal(shared, unshared),
        "shared_below_unshared": N_ps < N_mo_exact,
    }
    if kind == "ExponentialGrowth":
        ok = rep.checks["flat_shared"]
        rep.verdicts.append(f"growth regime {'PASS' if ok else 'FAIL'}: shared cost per level "
                            f"{'constant' if ok else 'not constant'}; unshared grows with |M_H|={p.M(p.H)}")
    elif kind == "ExponentialDecrease":
        ok = rep.checks["shared_equals_unshared"]
        rep.verdicts.append(f"tree regime {'PASS' if ok else 'FAIL'}: shared and unshared per-level costs "
                            f"{'coincide' if ok else 'differ'}; neurons {rep.N_n}")
    else:
        ok = rep.checks["shared_below_unshared"]
        rep.verdicts.append(f"hump regime {'PASS' if ok else 'FAIL'}: shared total {float(N_ps):.6g} "
                            f"{'<' if ok else '>='} unshared total {float(N_mo_exact):.6g}")
    return rep


def _num(x) -> str:
    if isinstance(x, Fraction) and x.denominator == 1:
        return str(x.numerator)
    if isinstance(x, int):
        return str(x)
    return format(float(x), ".17g")


def write_regime_curve(rep: RegimeReport, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["h", "M_h", "shared_cost", "unshared_cost", "neurons"])
        for row in rep.rows:
            w.writerow([row.h, row.M_h, _num(row.shared_cost), _num(row.unshared_cost), _num(row.neurons)])


# -- predicted vs measured -------------------------------------------------

@dataclass
class ReconcileRow:
    level: int
    predicted: int
    measured: int

    @property
    def delta(self) -> int:
        return self.measured - self.predicted

    @property
    def ok(self) -> bool:
        return self.delta == 0


@dataclass
class ComplexityReport:
    params: ComplexityParams
    predicted: dict[str, float]
    measured: dict[str, int] | None = None
    shared_curve: list[Fraction] = field(default_factory=list)
    unshared_curve: list[Fraction] = field(default_factory=list)
    parallel_depth: int = 0
    neurons: Fraction = Fraction(0)


def complexity_report(p: ComplexityParams, counter: OpCounter | None = None) -> ComplexityReport:
    bu = predict_bottom_up(p)
    td = predict_top_down_bound(p) if p.r > 1 else None
    N_ps, shared = predict_shared(p)
    predicted = {
        "N_bu": float(bu.exact),
        "N_bu_closed_form": bu.closed_form,
        "N_ms": float(predict_model_selection(p)),
        "N_ms_shared": float(predict_model_selection(p, shared=True)),
        "N_td_bound": float(td.exact) if td else None,
        "N_so": float(predict_single_object(p)),
        "N_mo": float(predict_multi_no_sharing(p)),
        "N_ps": float(N_ps),
        "N_n": float(predict_neurons(p)),
    }
    measured = None
    if counter is not None:
        measured = {name: counter.total(name) for name in OpCounter.FIELDS}
    return ComplexityReport(p, predicted, measured, shared, unshared_level_costs(p),
                            2 * p.H + 1, predict_neurons(p))


def check_run_params(p: ComplexityParams, run: dict) -> None:
    expected = {"D0_size": p.D0_size, "q": p.q, "H": p.H, "r": p.r, "C_r": p.C_r,
                "level_sizes": list(p.level_sizes)}
    got = dict(run)
    if "q" in got:
        got["q"] = as_fraction(got["q"])
    bad = [k for k, v in expected.items() if k in got and got[k] != v]
    missing = [k for k in expected if k not in got]
    if bad or missing:
        detail = ", ".join(f"{k}: expected {expected[k]}, counters have {got.get(k)}" for k in bad + missing)
        raise ParamMismatch(detail)


def reconcile(p: ComplexityParams, counter: OpCounter, run: dict) -> list[ReconcileRow]:
    """Per-level measured config evaluations against the exact prediction for the run's mode."""
    check_run_params(p, run)
    if counter.H != p.H:
        raise ParamMismatch(f"counter depth {counter.H} != H={p.H}")
    mode = run.get("mode", "serial-shared")
    if mode == "serial-unshared":
        predicted = unshared_level_costs(p)
    else:
        _, predicted = predict_shared(p)
    rows = []
    for h in range(1, p.H + 1):
        pred = predicted[h - 1]
        if pred.denominator != 1:
            raise ParamMismatch(f"level {h}: predicted count {pred} is not an integer")
        rows.append(ReconcileRow(h, int(pred), counter.config_evaluations[h]))
    return rows


def write_reconcile(rows: list[ReconcileRow], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["level", "predicted", "measured", "delta"])
        for row in rows:
            w.writerow([row.level, row.predicted, row.measured, row.delta])
        total_p = sum(r.predicted for r in rows)
        total_m = sum(r.measured for r in rows)
        w.writerow(["total", total_p, total_m, total_m - total_p])


def growth_ratio(values: Sequence[float]) -> list[float]:
    return [b / a for a, b in zip(values, values[1:]) if a]


def loglinear_slope(values: Sequence[float]) -> float:
    """Least-squares slope of log(values) against index; exp(slope) is the growth base."""
    n = len(values)
    xs = range(n)
    ys = [math.log(v) for v in values]
    mx, my = sum(xs) / n, sum(ys) / n
    num = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    den = sum((x - mx) ** 2 for x in xs)
    return num / den
