"""Exact MAP inference by dynamic programming over the lattice hierarchy.

Bottom-up computes the local evidence phi(x, tau) for every in-scope part and
cell, top-down follows the stored argmax configurations.  Every mode funnels
through ``_evaluate_part`` so shared and per-object tables are bitwise equal.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dictionary import HierarchicalDictionary, PartType, child_cells
from .generative import AlphabetMismatch, FeatureImage, ParseTree
from .lattice import Cell, LatticeHierarchy

MODES = ("serial-shared", "serial-unshared", "parallel-sim")
# scores this close to the maximum count as ties; the smallest index wins
TIE_TOL = 1e-12


class InferenceError(RuntimeError):
    pass


class ScopeUnresolvable(InferenceError, ValueError):
    pass


class InvalidRoot(InferenceError, ValueError):
    pass


@dataclass
class OpCounter:
    """Exact operation counts, indexed by level 0..H."""
    H: int
    config_evaluations: list[int] = field(default_factory=list)
    max_selections: list[int] = field(default_factory=list)
    top_down_evaluations: list[int] = field(default_factory=list)
    model_selection_comparisons: list[int] = field(default_factory=list)

    FIELDS = ("config_evaluations", "max_selections", "top_down_evaluations", "model_selection_comparisons")

    def __post_init__(self):
        for name in self.FIELDS:
            if not getattr(self, name):
                setattr(self, name, [0] * (self.H + 1))

    def __add__(self, other: OpCounter) -> OpCounter:
        if other.H != self.H:
            raise ValueError("cannot merge counters of different depth")
        out = OpCounter(self.H)
        for name in self.FIELDS:
            setattr(out, name, [a + b for a, b in zip(getattr(self, name), getattr(other, name))])
        return out

    def merge(self, other: OpCounter) -> None:
        for name in self.FIELDS:
            mine = getattr(self, name)
            for h, v in enumerate(getattr(other, name)):
                mine[h] += v

    def total(self, name: str = "config_evaluations") -> int:
        return sum(getattr(self, name))

    def to_dict(self) -> dict:
        return {"H": self.H, **{name: list(getattr(self, name)) for name in self.FIELDS}}

    @classmethod
    def from_dict(cls, obj: dict) -> OpCounter:
        return cls(obj["H"], *[list(obj[name]) for name in cls.FIELDS])


@dataclass
class EvidenceTable:
    """phi and argmax-configuration tables keyed by (level, part ordinal)."""
    lattice: LatticeHierarchy
    scores: list[dict[int, np.ndarray]]
    backptr: list[dict[int, np.ndarray]]
    scope: str | int = "full"

    @property
    def H(self) -> int:
        return len(self.scores) - 1

    @property
    def log_u(self) -> float:
        return -math.log(self.lattice.size(self.H))

    def phi(self, h: int, t: int, cell) -> float:
        return float(self.scores[h][t][tuple(cell)])

    def global_evidence(self, t: int, cell) -> float:
        """Root log-likelihood ratio: phi plus the uniform root prior."""
        return self.phi(self.H, t, cell) + self.log_u


@dataclass(frozen=True)
class Detection:
    root: Cell
    object_type: int
    score: float
    parse: ParseTree


@dataclass(frozen=True)
class Stage:
    kind: str
    level: int
    width: int


@dataclass
class ScheduleReport:
    stages: list[Stage]
    neurons: int

    @property
    def depth(self) -> int:
        return len(self.stages)

    def count(self, kind: str) -> int:
        return sum(1 for s in self.stages if s.kind == kind)

    def to_dict(self) -> dict:
        return {"depth": self.depth, "neurons": self.neurons,
                "stages": [{"kind": s.kind, "level": s.level, "width": s.width} for s in self.stages]}


def leaf_evidence(image: FeatureImage, d: HierarchicalDictionary, lattice: LatticeHierarchy | None = None) -> np.ndarray:
    """log P(I(x)|tau) - log P(I(x)|tau_0) for every leaf type and pixel."""
    if image.K != d.alphabet_size:
        raise AlphabetMismatch(f"image alphabet {image.K} != dictionary alphabet {d.alphabet_size}")
    if lattice is not None and image.data.shape != lattice.base_extent:
        raise ValueError(f"image shape {image.data.shape} != D_0 extent {lattice.base_extent}")
    leaf = np.array([p.leaf_dist for p in d.levels[0]], dtype=float).reshape(len(d.levels[0]), d.alphabet_size)
    bg = np.asarray(d.background, dtype=float)
    with np.errstate(divide="ignore"):
        table = np.log(leaf) - np.log(bg)[None, :]
    return table[:, image.data]


class _Shifter:
    """Gathers child tables at parent cells offset by a displacement; -inf off-lattice."""

    def __init__(self, lattice: LatticeHierarchy):
        self.lattice = lattice
        self._cache: dict = {}

    def index(self, h: int, disp):
        key = (h, disp)
        if key not in self._cache:
            k = self.lattice.k
            idx, valid = [], []
            for n_parent, n_child, dx in zip(self.lattice.level_extents[h], self.lattice.level_extents[h - 1], disp):
                raw = np.arange(n_parent) * k + dx
                ok = (raw >= 0) & (raw < n_child)
                idx.append(np.clip(raw, 0, n_child - 1))
                valid.append(ok)
            mask = valid[0]
            for v in valid[1:]:
                mask = np.logical_and.outer(mask, v)
            self._cache[key] = (np.ix_(*idx), ~mask if not mask.all() else None)
        return self._cache[key]

    def __call__(self, child: np.ndarray, h: int, disp) -> np.ndarray:
        ix, off = self.index(h, disp)
        out = child[ix]
        if off is not None:
            out = out.copy()
            out[off] = -np.inf
        return out


def first_max(stacked: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Argmax along axis 0 with near-ties resolved toward the smaller index."""
    m = stacked.max(axis=0)
    with np.errstate(invalid="ignore"):
        cut = np.where(np.isfinite(m), m - TIE_TOL * np.maximum(1.0, np.abs(m)), m)
    best = np.argmax(stacked >= cut, axis=0)
    return np.take_along_axis(stacked, best[None], axis=0)[0], best


def _evaluate_part(part: PartType, child_scores: dict[int, np.ndarray], h: int,
                   shift: _Shifter) -> tuple[np.ndarray, np.ndarray]:
    per_config = []
    for cfg in part.configs:
        total = None
        for child, disp in zip(part.child_ids, cfg.displacements):
            term = shift(child_scores[child], h, disp)
            total = term if total is None else total + term
        per_config.append(total + cfg.logp)
    return first_max(np.stack(per_config))


def _empty_table(unaries: np.ndarray, lattice: LatticeHierarchy, H: int, scope) -> EvidenceTable:
    scores = [dict() for _ in range(H + 1)]
    backptr = [dict() for _ in range(H + 1)]
    scores[0] = {t: unaries[t] for t in range(unaries.shape[0])}
    return EvidenceTable(lattice, scores, backptr, scope)


def bottom_up(unaries: np.ndarray, d: HierarchicalDictionary, lattice: LatticeHierarchy,
              scope: str | int = "full", counter: OpCounter | None = None,
              workers: int | None = None) -> EvidenceTable:
    """Local evidence for every in-scope (part, cell).

    ``scope="full"`` evaluates each dictionary element once per cell.  An
    integer scope evaluates one object's tree node by node, with no reuse
    between nodes of the same type.
    """
    counter = counter if counter is not None else OpCounter(d.H)
    table = _empty_table(unaries, lattice, d.H, scope)
    shift = _Shifter(lattice)
    if scope == "full":
        node_types = [list(range(len(lv))) for lv in d.levels]
    else:
        if not isinstance(scope, (int, np.integer)) or not 0 <= scope < len(d.objects):
            raise ScopeUnresolvable(f"scope {scope!r} is not an object in M_H")
        node_types = [[] for _ in range(d.H + 1)]
        node_types[d.H] = [int(scope)]
        for h in range(d.H, 0, -1):
            for t in node_types[h]:
                node_types[h - 1].extend(d.levels[h][t].child_ids)

    pool = ThreadPoolExecutor(workers) if workers and workers > 1 else None
    try:
        for h in range(1, d.H + 1):
            parts = [d.levels[h][t] for t in node_types[h]]
            if pool is not None:
                results = list(pool.map(lambda p: _evaluate_part(p, table.scores[h - 1], h, shift), parts))
            else:
                results = [_evaluate_part(p, table.scores[h - 1], h, shift) for p in parts]
            n = lattice.size(h)
            for part, (phi, bp) in zip(parts, results):
                table.scores[h][part.ordinal] = phi
                table.backptr[h][part.ordinal] = bp
                counter.config_evaluations[h] += len(part.configs) * n
                counter.max_selections[h] += n
    finally:
        if pool is not None:
            pool.shutdown()
    return table


def select_models(table: EvidenceTable, T: float = 0.0, counter: OpCounter | None = None,
                  objects: list[int] | None = None) -> list[tuple[Cell, int, float]]:
    """Winner-take-all over objects at every top cell, then threshold at T."""
    H = table.H
    if objects is None:
        objects = sorted(table.scores[H])
    if not objects:
        return []
    stacked = np.stack([table.scores[H][t] for t in objects]) + table.log_u
    best_score, best = first_max(stacked)
    if counter is not None:
        counter.model_selection_comparisons[H] += len(objects) * table.lattice.size(H)
    out = []
    for cell in table.lattice.enumerate_level(H):
        s = float(best_score[cell])
        if s > T:
            out.append((tuple(int(c) for c in cell), objects[int(best[cell])], s))
    return out


def top_down(table: EvidenceTable, d: HierarchicalDictionary, root: tuple[Cell, int],
             counter: OpCounter | None = None) -> ParseTree:
    """Recover the argmax parse by following backpointers from ``root``."""
    cell, obj = root
    cell = tuple(cell)
    if table.global_evidence(obj, cell) == -math.inf:
        raise InvalidRoot(f"object {obj} has -inf evidence at {cell}")
    lattice = table.lattice
    H = d.H
    types = [[] for _ in range(H + 1)]
    cells = [[] for _ in range(H + 1)]
    configs = [[] for _ in range(H + 1)]
    types[H], cells[H] = [obj], [cell]
    for h in range(H, 0, -1):
        for t, x in zip(types[h], cells[h]):
            c = int(table.backptr[h][t][x])
            configs[h].append(c)
            types[h - 1].extend(d.levels[h][t].child_ids)
            cells[h - 1].extend(child_cells(lattice, h, x, d.levels[h][t].configs[c]))
            if counter is not None:
                counter.top_down_evaluations[h] += 1
    configs[0] = [None] * len(types[0])
    return ParseTree(obj, types, cells, configs)


def _merge_tables(tables: list[EvidenceTable]) -> EvidenceTable:
    first = tables[0]
    scores = [dict() for _ in first.scores]
    backptr = [dict() for _ in first.backptr]
    for t in tables:
        for h in range(len(scores)):
            scores[h].update(t.scores[h])
            backptr[h].update(t.backptr[h])
    return EvidenceTable(first.lattice, scores, backptr, "merged")


def _top_down_levelwise(table: EvidenceTable, d: HierarchicalDictionary, roots, counter: OpCounter,
                        stages: list[Stage]) -> list[ParseTree]:
    """Top-down for all detections at once, one barrier per level."""
    H = d.H
    states = []
    for cell, obj in roots:
        if table.global_evidence(obj, cell) == -math.inf:
            raise InvalidRoot(f"object {obj} has -inf evidence at {cell}")
        types = [[] for _ in range(H + 1)]
        cells = [[] for _ in range(H + 1)]
        configs = [[] for _ in range(H + 1)]
        types[H], cells[H] = [obj], [tuple(cell)]
        states.append((types, cells, configs))
    if not states:
        return []
    for h in range(H, 0, -1):
        width = 0
        for types, cells, configs in states:
            for t, x in zip(types[h], cells[h]):
                c = int(table.backptr[h][t][x])
                configs[h].append(c)
                types[h - 1].extend(d.levels[h][t].child_ids)
                cells[h - 1].extend(child_cells(table.lattice, h, x, d.levels[h][t].configs[c]))
                counter.top_down_evaluations[h] += 1
                width += 1
        stages.append(Stage("top-down", h, width))
    out = []
    for (cell, obj), (types, cells, configs) in zip(roots, states):
        configs[0] = [None] * len(types[0])
        out.append(ParseTree(obj, types, cells, configs))
    return out


def detect_all(image: FeatureImage, d: HierarchicalDictionary, lattice: LatticeHierarchy,
               T: float = 0.0, mode: str = "serial-shared", workers: int | None = None
               ) -> tuple[list[Detection], OpCounter, ScheduleReport | None]:
    """Detect every above-threshold object; the three modes differ only in cost."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if d.H != lattice.H:
        raise ValueError(f"dictionary has H={d.H}, lattice has H={lattice.H}")
    counter = OpCounter(d.H)
    unaries = leaf_evidence(image, d, lattice)

    if mode == "serial-unshared":
        tables = []
        for obj in range(len(d.objects)):
            tables.append(bottom_up(unaries, d, lattice, obj, counter))
        table = _merge_tables(tables) if tables else _empty_table(unaries, lattice, d.H, "merged")
    else:
        table = bottom_up(unaries, d, lattice, "full", counter,
                          workers=workers if mode == "parallel-sim" else None)

    objects = list(range(len(d.objects)))
    selected = select_models(table, T, counter, objects)
    roots = [(cell, obj) for cell, obj, _ in selected]
    schedule = None
    if mode == "parallel-sim":
        stages = [Stage("bottom-up", h, len(d.levels[h]) * lattice.size(h)) for h in range(1, d.H + 1)]
        stages.append(Stage("selection", d.H, lattice.size(d.H)))
        parses = _top_down_levelwise(table, d, roots, counter, stages)
        neurons = sum(len(d.levels[h]) * lattice.size(h) for h in range(1, d.H + 1))
        schedule = ScheduleReport(stages, neurons)
    else:
        parses = [top_down(table, d, root, counter) for root in roots]
    detections = [Detection(cell, obj, score, parse)
                  for (cell, obj, score), parse in zip(selected, parses)]
    return detections, counter, schedule


def run_params(d: HierarchicalDictionary, lattice: LatticeHierarchy, mode: str) -> dict:
    """Parameters a counter file needs for reconciliation."""
    return {"D0_size": lattice.size(0), "q": str(lattice.q), "H": d.H, "r": d.r, "C_r": d.C_r,
            "level_sizes": d.sizes[1:], "mode": mode}
