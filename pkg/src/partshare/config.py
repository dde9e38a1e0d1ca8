"""Experiment configuration: a TOML file mapped onto small dataclasses.

Relative paths are resolved against the directory holding the config file.
Schema errors carry the line number of the offending key when it can be found.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib

from .dictionary import REGIME_KINDS
from .inference import MODES


class ConfigError(ValueError):
    def __init__(self, msg: str, lineno: int | None = None, path=None):
        self.lineno = lineno
        self.path = path
        where = f"{path}:" if path else ""
        where += f"{lineno}: " if lineno else (" " if path else "")
        super().__init__(f"{where}{msg}")


@dataclass
class LatticeSection:
    extent: int | tuple[int, ...] = 16
    q: str = "1/2"
    H: int = 2


@dataclass
class DictionarySection:
    file: Path | None = None
    regime: str = "ExponentialGrowth"
    a: str = "1"
    sizes: list[int] | str | None = None   # explicit list, or "hump"
    r: int = 2
    C_r: int = 2
    seed: int = 0
    alphabet_size: int = 5
    locality_radius: str | None = None
    leaves: str = "random"
    config_weights: str = "random"


@dataclass
class SceneSection:
    objects: list[int] = field(default_factory=list)
    seed: int = 0
    noise: bool = True
    image: Path | None = None   # input image for detect; defaults to <out>/image.txt


@dataclass
class InferenceSection:
    T: float = 0.0
    mode: str = "serial-shared"
    workers: int | None = None
    dump_parses: bool = False


@dataclass
class ComplexitySection:
    r_values: list[int] | None = None
    counters: Path | None = None


@dataclass
class VerifySection:
    instances: int = 200
    seed: int = 0


@dataclass
class ExperimentConfig:
    lattice: LatticeSection = field(default_factory=LatticeSection)
    dictionary: DictionarySection = field(default_factory=DictionarySection)
    scene: SceneSection = field(default_factory=SceneSection)
    inference: InferenceSection = field(default_factory=InferenceSection)
    complexity: ComplexitySection = field(default_factory=ComplexitySection)
    verify: VerifySection = field(default_factory=VerifySection)
    out: Path = Path("out")
    source: Path | None = None


_SECTIONS = {
    "lattice": LatticeSection, "dictionary": DictionarySection, "scene": SceneSection,
    "inference": InferenceSection, "complexity": ComplexitySection, "verify": VerifySection,
}
_PATH_KEYS = {("dictionary", "file"), ("scene", "image"), ("complexity", "counters")}


def _line_of(text: str, section: str | None, key: str | None = None) -> int | None:
    """Line number of ``key`` inside ``[section]`` (or of the header itself)."""
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[\s*([A-Za-z0-9_.]+)\s*\]", s)
        if m:
            current = m.group(1)
            if key is None and current == section:
                return i
            continue
        if key is not None and current == section and re.match(rf"^{re.escape(key)}\s*=", s):
            return i
    return None


def _rational(v) -> str:
    if isinstance(v, bool) or not isinstance(v, (int, float, str)):
        raise TypeError("expected a number or a fraction string")
    Fraction(str(v))
    return str(v)


def _check(cfg: ExperimentConfig, fail) -> None:
    lat, d, sc, inf = cfg.lattice, cfg.dictionary, cfg.scene, cfg.inference
    if isinstance(lat.extent, list):
        lat.extent = tuple(lat.extent)
    ext = lat.extent if isinstance(lat.extent, tuple) else (lat.extent,)
    if not 1 <= len(ext) <= 2 or not all(isinstance(e, int) and e > 0 for e in ext):
        fail("lattice", "extent", "extent must be a positive integer or a list of two")
    if not isinstance(lat.H, int) or lat.H < 0:
        fail("lattice", "H", "H must be a non-negative integer")
    if d.regime not in REGIME_KINDS:
        fail("dictionary", "regime", f"unknown regime {d.regime!r}; expected one of {REGIME_KINDS}")
    if d.regime == "UserSupplied" and d.file is None:
        if d.sizes is None or not (d.sizes == "hump" or isinstance(d.sizes, list)):
            fail("dictionary", "sizes", "UserSupplied needs sizes = [..] or sizes = \"hump\"")
    for key in ("r", "C_r", "alphabet_size"):
        v = getattr(d, key)
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            fail("dictionary", key, f"{key} must be a positive integer")
    if d.leaves not in ("random", "degenerate"):
        fail("dictionary", "leaves", "leaves must be \"random\" or \"degenerate\"")
    if d.config_weights not in ("random", "uniform"):
        fail("dictionary", "config_weights", "config_weights must be \"random\" or \"uniform\"")
    if d.file is not None and not d.file.exists():
        fail("dictionary", "file", f"dictionary file {d.file} does not exist")
    if not all(isinstance(o, int) and o >= 0 for o in sc.objects):
        fail("scene", "objects", "objects must be a list of non-negative type ordinals")
    if inf.mode not in MODES:
        fail("inference", "mode", f"unknown mode {inf.mode!r}; expected one of {MODES}")
    if isinstance(inf.T, bool) or not isinstance(inf.T, (int, float)):
        fail("inference", "T", "T must be a number")
    inf.T = float(inf.T)
    if cfg.verify.instances < 0:
        fail("verify", "instances", "instances must be >= 0")
    r_values = cfg.complexity.r_values
    if r_values is not None and not all(isinstance(r, int) and r >= 1 for r in r_values):
        fail("complexity", "r_values", "r_values must be positive integers")


def loads(text: str, base_dir: Path | str = ".", path=None) -> ExperimentConfig:
    base_dir = Path(base_dir)
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax: {exc}", int(m.group(1)) if m else None, path) from None

    def fail(section, key, msg):
        raise ConfigError(msg, _line_of(text, section, key), path)

    cfg = ExperimentConfig(out=base_dir / "out", source=Path(path) if path else None)
    for name, body in raw.items():
        if name == "output":
            if not isinstance(body, dict) or set(body) - {"dir"}:
                fail("output", None, "[output] takes only dir")
            cfg.out = base_dir / body.get("dir", "out")
            continue
        if name not in _SECTIONS:
            fail(name, None, f"unknown section [{name}]")
        if not isinstance(body, dict):
            fail(None, name, f"{name} must be a section")
        known = {f.name for f in fields(_SECTIONS[name])}
        section = getattr(cfg, name)
        for key, value in body.items():
            if key not in known:
                fail(name, key, f"unknown key {key!r} in [{name}]")
            if (name, key) in _PATH_KEYS:
                value = base_dir / value
            elif key in ("q", "a", "locality_radius"):
                try:
                    value = _rational(value)
                except (TypeError, ValueError, ZeroDivisionError):
                    fail(name, key, f"{key} must be a rational such as \"1/4\"")
            setattr(section, key, value)
    _check(cfg, fail)
    return cfg


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path=path) from None
    return loads(text, path.parent, path)
