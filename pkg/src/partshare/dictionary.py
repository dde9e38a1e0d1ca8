"""Hierarchical part dictionaries M_0 ... M_H built by part-subpart composition.

A level-h part lists ``r`` child parts from level ``h-1`` plus ``C_r``
configurations.  A configuration places child ``i`` at a displacement (in
level-(h-1) lattice steps) from the parent's own position and carries a
log-probability.  The parent position is the deterministic function

    f(children) = snap_to_level(round(centroid of child D_0 coords), h)

and every stored configuration must map back to a zero offset under ``f``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .lattice import LatticeHierarchy, Rational, as_fraction, round_half_down, stride_for

Displacement = tuple[int, ...]

DEFAULT_ALPHABET = 5
NORMALIZATION_TOL = 1e-9


class DictionaryError(ValueError):
    pass


class LocalityViolation(DictionaryError):
    pass


class UnnormalizedConfigs(DictionaryError):
    pass


class BadChildLevel(DictionaryError):
    pass


class ParentFunctionMismatch(DictionaryError):
    """A configuration whose children do not map back onto the parent cell."""


class UnrealizableRegime(DictionaryError):
    pass


class DictionaryFormatError(DictionaryError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass(frozen=True)
class Configuration:
    displacements: tuple[Displacement, ...]
    logp: float


@dataclass(frozen=True)
class PartType:
    level: int
    ordinal: int
    child_ids: tuple[int, ...] = ()
    configs: tuple[Configuration, ...] = ()
    leaf_dist: tuple[float, ...] | None = None

    @property
    def id(self) -> tuple[int, int]:
        return (self.level, self.ordinal)

    @property
    def is_leaf(self) -> bool:
        return self.level == 0


def default_background(alphabet_size: int = DEFAULT_ALPHABET) -> tuple[float, ...]:
    """Background favours symbol 0; the remaining mass is spread evenly."""
    if alphabet_size < 2:
        return (1.0,)
    rest = 0.4 / (alphabet_size - 1)
    return (0.6,) + (rest,) * (alphabet_size - 1)


def _check_dist(dist: Sequence[float], K: int, what: str) -> tuple[float, ...]:
    dist = tuple(float(p) for p in dist)
    if len(dist) != K:
        raise DictionaryError(f"{what}: expected {K} probabilities, got {len(dist)}")
    if any(p < 0 or not math.isfinite(p) for p in dist):
        raise DictionaryError(f"{what}: probabilities must be finite and non-negative")
    if abs(math.fsum(dist) - 1.0) > NORMALIZATION_TOL:
        raise UnnormalizedConfigs(f"{what}: probabilities sum to {math.fsum(dist)!r}")
    return dist


def centroid_offset_ok(displacements: Sequence[Displacement], level: int, k: int) -> bool:
    """True when f maps children at these displacements back onto the parent.

    Per axis the rounded centroid offset (in D_0 cells) must fall in
    (-s/2, s/2] with s = k**level; that is exactly the set of offsets that
    snap to the parent under the round-half-down rule.
    """
    r = len(displacements)
    child_stride = k ** (level - 1)
    s = k ** level
    for axis in range(len(displacements[0])):
        total = sum(d[axis] for d in displacements)
        off = round_half_down(Fraction(total * child_stride, r))
        if not (-s < 2 * off <= s):
            return False
    return True


def parent_position(lattice: LatticeHierarchy, child_coords: Sequence[Sequence[int]], level: int):
    """The deterministic parent function f: level cell from child D_0 coordinates."""
    r = len(child_coords)
    centroid = tuple(
        round_half_down(Fraction(sum(c[axis] for c in child_coords), r))
        for axis in range(lattice.ndim)
    )
    return lattice.snap_to_level(centroid, level)


def available_configs(ndim: int, k: int, r: int, radius: Rational, level: int) -> list[tuple[Displacement, ...]]:
    """All r-tuples of pairwise-distinct, local, f-consistent displacements.

    Ordered lexicographically so generators draw from a fixed list.
    """
    radius = as_fraction(radius)
    span = int(math.floor(radius))
    axis_vals = range(-span, span + 1)
    singles = [d for d in itertools.product(axis_vals, repeat=ndim)
               if sum(x * x for x in d) <= radius * radius]
    out = []
    for combo in itertools.product(singles, repeat=r):
        if len(set(combo)) != r:
            continue
        if centroid_offset_ok(combo, level, k):
            out.append(combo)
    return out


@dataclass
class HierarchicalDictionary:
    H: int
    r: int
    q: Fraction
    ndim: int = 1
    C_r: int | None = None
    locality_radius: Fraction | None = None
    alphabet_size: int = DEFAULT_ALPHABET
    background: tuple[float, ...] | None = None
    levels: list[list[PartType]] = field(default_factory=list)

    def __post_init__(self):
        self.q = as_fraction(self.q)
        self.k = stride_for(self.q, self.ndim)
        if self.locality_radius is None:
            self.locality_radius = Fraction(self.k, 2)
        self.locality_radius = as_fraction(self.locality_radius)
        if self.background is None:
            self.background = default_background(self.alphabet_size)
        self.background = _check_dist(self.background, self.alphabet_size, "background")
        if any(p == 0 for p in self.background):
            raise DictionaryError("background distribution needs full support (log-ratios would be +inf)")
        if not self.levels:
            self.levels = [[] for _ in range(self.H + 1)]
        if len(self.levels) != self.H + 1:
            raise DictionaryError(f"expected {self.H + 1} levels, got {len(self.levels)}")

    @property
    def sizes(self) -> list[int]:
        return [len(lv) for lv in self.levels]

    @property
    def objects(self) -> list[PartType]:
        return self.levels[self.H]

    def part(self, level: int, ordinal: int) -> PartType:
        try:
            return self.levels[level][ordinal]
        except IndexError:
            raise BadChildLevel(f"no part ({level}, {ordinal})") from None

    def add_leaf(self, dist: Sequence[float]) -> PartType:
        part = PartType(0, len(self.levels[0]), leaf_dist=_check_dist(dist, self.alphabet_size, "leaf distribution"))
        self.levels[0].append(part)
        return part

    def _check_configs(self, configs: Sequence[Configuration], level: int) -> tuple[Configuration, ...]:
        if not configs:
            raise UnnormalizedConfigs("a part needs at least one configuration")
        if self.C_r is not None and len(configs) != self.C_r:
            raise DictionaryError(f"C_r is fixed at {self.C_r}, got {len(configs)} configurations")
        rad2 = self.locality_radius ** 2
        out = []
        for c in configs:
            if not isinstance(c, Configuration):
                disp, logp = c
                c = Configuration(tuple(tuple(int(x) for x in d) for d in disp), float(logp))
            if len(c.displacements) != self.r:
                raise DictionaryError(f"configuration has {len(c.displacements)} displacements, r={self.r}")
            for d in c.displacements:
                if len(d) != self.ndim:
                    raise DictionaryError(f"displacement {d} is not {self.ndim}-dimensional")
                if sum(x * x for x in d) > rad2:
                    raise LocalityViolation(f"displacement {d} exceeds locality radius {self.locality_radius}")
            if not centroid_offset_ok(c.displacements, level, self.k):
                raise ParentFunctionMismatch(
                    f"children at {c.displacements} do not map back to the parent at level {level}")
            out.append(c)
        total = math.fsum(math.exp(c.logp) for c in out)
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise UnnormalizedConfigs(f"configuration probabilities sum to {total!r}")
        return tuple(out)

    def compose(self, child_ids: Sequence[int], configs: Sequence, level: int) -> PartType:
        """Validate and append a level-``level`` part built from ``child_ids``."""
        if not 1 <= level <= self.H:
            raise BadChildLevel(f"composition level {level} outside 1..{self.H}")
        child_ids = tuple(int(c) for c in child_ids)
        if len(child_ids) != self.r:
            raise BadChildLevel(f"expected {self.r} children, got {len(child_ids)}")
        for c in child_ids:
            if not 0 <= c < len(self.levels[level - 1]):
                raise BadChildLevel(f"child {c} does not exist at level {level - 1}")
        configs = self._check_configs(configs, level)
        if self.C_r is None:
            self.C_r = len(configs)
        part = PartType(level, len(self.levels[level]), child_ids, configs)
        self.levels[level].append(part)
        return part

    def validate(self) -> None:
        """Re-check every part from scratch."""
        fresh = HierarchicalDictionary(self.H, self.r, self.q, self.ndim, self.C_r,
                                       self.locality_radius, self.alphabet_size, self.background)
        for p in self.levels[0]:
            fresh.add_leaf(p.leaf_dist)
        for h in range(1, self.H + 1):
            for p in self.levels[h]:
                fresh.compose(p.child_ids, p.configs, h)
        if not self.objects:
            raise DictionaryError("M_H is empty")

    def closure(self, obj: int) -> list[list[int]]:
        """Ordinals of the parts reachable from object ``obj``, per level, ascending."""
        reach = [set() for _ in range(self.H + 1)]
        reach[self.H].add(obj)
        for h in range(self.H, 0, -1):
            for o in reach[h]:
                reach[h - 1].update(self.levels[h][o].child_ids)
        return [sorted(s) for s in reach]

    def with_logp_perturbed(self, level: int, ordinal: int, config: int, delta: float) -> HierarchicalDictionary:
        """Copy with one configuration log-probability shifted (no re-validation)."""
        levels = [list(lv) for lv in self.levels]
        p = levels[level][ordinal]
        cfgs = list(p.configs)
        c = cfgs[config]
        cfgs[config] = Configuration(c.displacements, c.logp + delta)
        levels[level][ordinal] = PartType(p.level, p.ordinal, p.child_ids, tuple(cfgs), p.leaf_dist)
        return HierarchicalDictionary(self.H, self.r, self.q, self.ndim, self.C_r,
                                      self.locality_radius, self.alphabet_size, self.background, levels)


# -- regimes ---------------------------------------------------------------

REGIME_KINDS = ("ExponentialGrowth", "UserSupplied", "ExponentialDecrease")


@dataclass(frozen=True)
class RegimeSpec:
    kind: str
    a: Fraction = Fraction(1)
    sizes: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in REGIME_KINDS:
            raise DictionaryError(f"unknown regime {self.kind!r}; expected one of {REGIME_KINDS}")
        object.__setattr__(self, "a", as_fraction(self.a))
        if self.kind == "UserSupplied":
            if not self.sizes:
                raise DictionaryError("UserSupplied regime needs an explicit size list")
            object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))

    def level_sizes(self, H: int, q: Rational, r: int) -> list[int]:
        """|M_0| ... |M_H| for this regime."""
        q = as_fraction(q)
        if self.kind == "ExponentialGrowth":
            raw = [self.a / q ** h for h in range(H + 1)]
        elif self.kind == "ExponentialDecrease":
            raw = [Fraction(r) ** (H - h) for h in range(H + 1)]
        else:
            if len(self.sizes) != H + 1:
                raise DictionaryError(f"UserSupplied sizes need H+1={H + 1} entries, got {len(self.sizes)}")
            raw = [Fraction(s) for s in self.sizes]
        for h, s in enumerate(raw):
            if s.denominator != 1 or s < 1:
                raise UnrealizableRegime(f"level {h} size {s} is not a positive integer")
        return [int(s) for s in raw]


def hump_sizes(H: int, q: Rational, r: int) -> list[int]:
    """Stand-in for learned dictionaries: grows like 1/q**h, then shrinks like r**(H-h).

    Stays strictly below both curves, which is the setting where sharing pays.
    """
    q = as_fraction(q)
    return [max(1, int(min(1 / q ** h, Fraction(r) ** (H - h)) // 2)) for h in range(H + 1)]


def _random_leaf(rng: np.random.Generator, K: int) -> tuple[float, ...]:
    p = rng.dirichlet(np.ones(K))
    p = np.maximum(p, 1e-3)
    return tuple(float(x) for x in p / p.sum())


def degenerate_leaf(symbol: int, K: int) -> tuple[float, ...]:
    return tuple(1.0 if s == symbol else 0.0 for s in range(K))


def _config_logps(rng: np.random.Generator, C_r: int, weights: str) -> list[float]:
    if weights == "uniform":
        return [-math.log(C_r)] * C_r
    p = rng.dirichlet(np.full(C_r, 2.0))
    p = np.maximum(p, 1e-3)
    p = p / p.sum()
    return [float(math.log(x)) for x in p]


def _draw_distinct(rng: np.random.Generator, total: int, count: int) -> list[int]:
    if count > total:
        raise UnrealizableRegime(f"need {count} distinct compositions, only {total} exist")
    if 2 * count >= total:
        return sorted(int(i) for i in rng.permutation(total)[:count])
    seen: set[int] = set()
    out = []
    while len(out) < count:
        i = int(rng.integers(total))
        if i not in seen:
            seen.add(i)
            out.append(i)
    return out


def _unrank(index: int, radices: Sequence[int]) -> list[int]:
    out = []
    for rad in reversed(radices):
        index, d = divmod(index, rad)
        out.append(d)
    return out[::-1]


def build_regime_dictionary(regime: RegimeSpec, H: int, r: int, C_r: int, seed: int, *,
                            q: Rational, ndim: int = 1, alphabet_size: int = DEFAULT_ALPHABET,
                            locality_radius: Rational | None = None, leaves: str = "random",
                            config_weights: str = "random") -> HierarchicalDictionary:
    """Build a dictionary whose level sizes follow ``regime`` exactly.

    Level-h parts are distinct (child tuple, configuration set) pairs drawn
    reproducibly from ``seed``.  ExponentialDecrease builds a tree: every
    part below the top has exactly one parent.
    """
    rng = np.random.default_rng(seed)
    sizes = regime.level_sizes(H, q, r)
    d = HierarchicalDictionary(H, r, q, ndim, C_r, locality_radius, alphabet_size)
    K = alphabet_size
    for j in range(sizes[0]):
        if leaves == "degenerate":
            if K < 2:
                raise DictionaryError("degenerate leaves need at least one non-background symbol")
            d.add_leaf(degenerate_leaf(1 + j % (K - 1), K))
        else:
            d.add_leaf(_random_leaf(rng, K))
    for h in range(1, H + 1):
        pool = available_configs(ndim, d.k, r, d.locality_radius, h)
        n_sets = math.comb(len(pool), C_r)
        if n_sets == 0:
            raise UnrealizableRegime(f"level {h}: only {len(pool)} valid configurations, C_r={C_r}")
        prev = sizes[h - 1]
        if regime.kind == "ExponentialDecrease":
            perm = rng.permutation(prev)
            child_tuples = [tuple(int(c) for c in perm[j * r:(j + 1) * r]) for j in range(sizes[h])]
            set_ids = [int(rng.integers(n_sets)) for _ in child_tuples]
        else:
            picks = _draw_distinct(rng, prev ** r * n_sets, sizes[h])
            child_tuples, set_ids = [], []
            for idx in picks:
                digits = _unrank(idx, [prev] * r + [n_sets])
                child_tuples.append(tuple(digits[:r]))
                set_ids.append(digits[r])
        for children, sid in zip(child_tuples, set_ids):
            chosen = _nth_combination(len(pool), C_r, sid)
            logps = _config_logps(rng, C_r, config_weights)
            cfgs = [Configuration(pool[i], lp) for i, lp in zip(chosen, logps)]
            d.compose(children, cfgs, h)
    return d


def _nth_combination(n: int, k: int, index: int) -> tuple[int, ...]:
    """The index-th k-subset of range(n) in lexicographic order."""
    out = []
    start = 0
    for remaining in range(k, 0, -1):
        for i in range(start, n):
            c = math.comb(n - i - 1, remaining - 1)
            if index < c:
                out.append(i)
                start = i + 1
                break
            index -= c
    return tuple(out)


# -- sharing statistics ----------------------------------------------------

@dataclass(frozen=True)
class LevelSharing:
    level: int
    distinct: int
    references: int
    ref_counts: tuple[int, ...]

    @property
    def ratio(self) -> float:
        return self.references / self.distinct if self.distinct else 0.0


def shared_subpart_count(d: HierarchicalDictionary) -> list[LevelSharing]:
    """Per level below H: how often each part is referenced from the level above."""
    out = []
    for h in range(d.H):
        counts = [0] * len(d.levels[h])
        for parent in d.levels[h + 1]:
            for c in parent.child_ids:
                counts[c] += 1
        out.append(LevelSharing(h, len(counts), sum(counts), tuple(counts)))
    return out


# -- file format -----------------------------------------------------------

FORMAT_TAG = "partshare-dictionary 1"


def _f17(x: float) -> str:
    return format(x, ".17g")


def _disp_str(d: Displacement) -> str:
    return ",".join(str(x) for x in d)


def dumps(d: HierarchicalDictionary) -> str:
    lines = [
        FORMAT_TAG,
        f"H {d.H}",
        f"r {d.r}",
        f"C_r {d.C_r if d.C_r is not None else 0}",
        f"q {d.q}",
        f"ndim {d.ndim}",
        f"locality_radius {d.locality_radius}",
        f"feature_alphabet_size {d.alphabet_size}",
        "background " + " ".join(_f17(p) for p in d.background),
    ]
    for h, parts in enumerate(d.levels):
        lines.append(f"level {h} {len(parts)}")
        for p in parts:
            if h == 0:
                lines.append("leaf " + " ".join(_f17(x) for x in p.leaf_dist))
            else:
                lines.append("part " + " ".join(str(c) for c in p.child_ids))
                for c in p.configs:
                    lines.append("  config " + " ".join(_disp_str(x) for x in c.displacements) + " " + _f17(c.logp))
    return "\n".join(lines) + "\n"


def loads(text: str) -> HierarchicalDictionary:
    rows = [(i + 1, ln.split()) for i, ln in enumerate(text.splitlines())]
    rows = [(n, toks) for n, toks in rows if toks and not toks[0].startswith("#")]
    if not rows or " ".join(rows[0][1]) != FORMAT_TAG:
        raise DictionaryFormatError(rows[0][0] if rows else 1, f"missing header {FORMAT_TAG!r}")
    header = {}
    pos = 1
    keys = ["H", "r", "C_r", "q", "ndim", "locality_radius", "feature_alphabet_size", "background"]
    for key in keys:
        n, toks = rows[pos]
        if toks[0] != key:
            raise DictionaryFormatError(n, f"expected {key!r}, found {toks[0]!r}")
        header[key] = toks[1:]
        pos += 1
    try:
        d = HierarchicalDictionary(
            H=int(header["H"][0]), r=int(header["r"][0]), q=Fraction(header["q"][0]),
            ndim=int(header["ndim"][0]), C_r=int(header["C_r"][0]) or None,
            locality_radius=Fraction(header["locality_radius"][0]),
            alphabet_size=int(header["feature_alphabet_size"][0]),
            background=[float(x) for x in header["background"]],
        )
    except (ValueError, IndexError) as e:
        raise DictionaryFormatError(rows[min(pos, len(rows)) - 1][0], f"bad header: {e}") from e

    level = -1
    declared: dict[int, tuple[int, int]] = {}  # level -> (lineno, count)
    pending = None  # (lineno, child ids, configs)

    def flush():
        nonlocal pending
        if pending is not None:
            n, children, cfgs = pending
            try:
                d.compose(children, cfgs, level)
            except DictionaryError as e:
                raise DictionaryFormatError(n, str(e)) from e
            pending = None

    while pos < len(rows):
        n, toks = rows[pos]
        pos += 1
        try:
            if toks[0] == "level":
                flush()
                if int(toks[1]) != level + 1 or level + 1 > d.H:
                    raise DictionaryFormatError(n, f"expected level {level + 1}, found {toks[1]}")
                level += 1
                declared[level] = (n, int(toks[2]))
            elif toks[0] == "leaf":
                if level != 0:
                    raise DictionaryFormatError(n, "leaf entries only allowed at level 0")
                d.add_leaf([float(x) for x in toks[1:]])
            elif toks[0] == "part":
                flush()
                pending = (n, [int(x) for x in toks[1:]], [])
            elif toks[0] == "config":
                if pending is None:
                    raise DictionaryFormatError(n, "config outside a part")
                disps = tuple(tuple(int(v) for v in t.split(",")) for t in toks[1:-1])
                pending[2].append(Configuration(disps, float(toks[-1])))
            else:
                raise DictionaryFormatError(n, f"unknown entry {toks[0]!r}")
        except DictionaryFormatError:
            raise
        except (ValueError, IndexError, DictionaryError) as e:
            raise DictionaryFormatError(n, str(e)) from e
    flush()
    if level != d.H:
        raise DictionaryFormatError(rows[-1][0], f"file ends at level {level}, H={d.H}")
    for h, (n, count) in declared.items():
        if len(d.levels[h]) != count:
            raise DictionaryFormatError(n, f"level {h} declares {count} parts, found {len(d.levels[h])}")
    return d


def save(d: HierarchicalDictionary, path) -> None:
    with open(path, "w") as f:
        f.write(dumps(d))


def load(path) -> HierarchicalDictionary:
    with open(path) as f:
        return loads(f.read())


def iter_parts(d: HierarchicalDictionary) -> Iterable[PartType]:
    for lv in d.levels:
        yield from lv


def child_cells(lattice: LatticeHierarchy, level: int, parent_cell: Sequence[int],
                config: Configuration) -> list[tuple[int, ...]]:
    """Level-(level-1) cells of the children; may fall outside the lattice."""
    k = lattice.k
    return [tuple(p * k + dx for p, dx in zip(parent_cell, d)) for d in config.displacements]
