"""Command-line experiment runner.

    partshare build|sample|detect|complexity|verify --config exp.toml [--mode M] [--seed S] [--out DIR]

Exit codes: 0 ok, 1 verification mismatch, 2 config error, 3 generative
failure, 4 parameter mismatch between counters and config.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

from . import dictionary as dictmod
from .complexity import (ComplexityParams, ParamMismatch, complexity_report, reconcile, regime_report,
                         write_reconcile, write_regime_curve)
from .config import ConfigError, ExperimentConfig, load
from .dictionary import DictionaryError, HierarchicalDictionary, RegimeSpec, build_regime_dictionary, hump_sizes
from .generative import FeatureImage, GenerativeError, sample_scene
from .inference import MODES, OpCounter, detect_all, run_params
from .lattice import LatticeHierarchy, build_hierarchy
from .verify import run_sweep

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_GENERATIVE, EXIT_PARAMS = 0, 1, 2, 3, 4
FAULT = (1, 0, 0, 0.5)  # (level, ordinal, config, delta) for --inject-fault


def lattice_of(cfg: ExperimentConfig) -> LatticeHierarchy:
    return build_hierarchy(cfg.lattice.extent, cfg.lattice.q, cfg.lattice.H)


def regime_of(cfg: ExperimentConfig, r: int | None = None) -> RegimeSpec:
    d = cfg.dictionary
    sizes = d.sizes
    if sizes == "hump":
        sizes = hump_sizes(cfg.lattice.H, cfg.lattice.q, r or d.r)
    return RegimeSpec(d.regime, d.a, sizes if d.regime == "UserSupplied" else None)


def dictionary_of(cfg: ExperimentConfig, lattice: LatticeHierarchy) -> HierarchicalDictionary:
    d = cfg.dictionary
    if d.file is not None:
        out = dictmod.load(d.file)
        if out.H != lattice.H or out.q != lattice.q or out.ndim != lattice.ndim:
            raise ConfigError(f"dictionary {d.file} (H={out.H}, q={out.q}, ndim={out.ndim}) does not fit "
                              f"the lattice (H={lattice.H}, q={lattice.q}, ndim={lattice.ndim})")
        return out
    return build_regime_dictionary(regime_of(cfg), lattice.H, d.r, d.C_r, d.seed, q=lattice.q,
                                   ndim=lattice.ndim, alphabet_size=d.alphabet_size,
                                   locality_radius=d.locality_radius, leaves=d.leaves,
                                   config_weights=d.config_weights)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def cmd_build(cfg: ExperimentConfig) -> Path:
    lattice = lattice_of(cfg)
    d = dictionary_of(cfg, lattice)
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "dictionary.txt"
    dictmod.save(d, path)
    print("level sizes:", " ".join(str(s) for s in d.sizes))
    return path


def cmd_sample(cfg: ExperimentConfig) -> tuple[Path, Path]:
    lattice = lattice_of(cfg)
    d = dictionary_of(cfg, lattice)
    scene = sample_scene(d, lattice, cfg.scene.objects, cfg.scene.seed, cfg.scene.noise)
    cfg.out.mkdir(parents=True, exist_ok=True)
    image_path, scene_path = cfg.out / "image.txt", cfg.out / "scene.json"
    scene.image.save(image_path)
    scene_path.write_text(scene.sidecar(lattice))
    return image_path, scene_path


def cmd_detect(cfg: ExperimentConfig) -> dict[str, Path]:
    lattice = lattice_of(cfg)
    d = dictionary_of(cfg, lattice)
    image_path = cfg.scene.image or cfg.out / "image.txt"
    if not image_path.exists():
        raise ConfigError(f"image {image_path} does not exist (run sample first or set scene.image)")
    image = FeatureImage.load(image_path, lattice.base_extent)
    inf = cfg.inference
    detections, counter, schedule = detect_all(image, d, lattice, inf.T, inf.mode, inf.workers)

    cfg.out.mkdir(parents=True, exist_ok=True)
    out = {"detections": cfg.out / "detections.csv", "counters": cfg.out / "counters.json"}
    with open(out["detections"], "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["x_H", "type", "score"])
        for det in detections:
            w.writerow([lattice.flat(lattice.H, det.root), det.object_type, format(det.score, ".17g")])
    _write_json(out["counters"], {"run": run_params(d, lattice, inf.mode), "counters": counter.to_dict()})
    if schedule is not None:
        out["schedule"] = cfg.out / "schedule.json"
        _write_json(out["schedule"], schedule.to_dict())
    if inf.dump_parses:
        out["parses"] = cfg.out / "parses.json"
        _write_json(out["parses"], [det.parse.to_dict(lattice) for det in detections])
    print(f"{len(detections)} detections ({inf.mode}); config evaluations {counter.total()}")
    return out


def _params(cfg: ExperimentConfig, lattice: LatticeHierarchy, r: int) -> ComplexityParams:
    d = cfg.dictionary
    if d.file is not None:
        loaded = dictionary_of(cfg, lattice)
        if loaded.r != r:
            raise ConfigError(f"r={r} requested but dictionary file has r={loaded.r}")
        sizes, C_r = loaded.sizes, loaded.C_r
    else:
        sizes, C_r = regime_of(cfg, r).level_sizes(lattice.H, lattice.q, r), d.C_r
    return ComplexityParams(lattice.size(0), lattice.q, lattice.H, r, C_r, tuple(sizes[1:]))


def cmd_complexity(cfg: ExperimentConfig) -> dict[str, Path]:
    lattice = lattice_of(cfg)
    sweep = cfg.complexity.r_values
    r_values = sweep if sweep else [cfg.dictionary.r]
    cfg.out.mkdir(parents=True, exist_ok=True)
    out, summary = {}, {}
    for r in r_values:
        p = _params(cfg, lattice, r)
        rep = regime_report(cfg.dictionary.regime, p)
        name = f"regime_curve_r{r}.csv" if sweep else "regime_curve.csv"
        write_regime_curve(rep, cfg.out / name)
        out[name] = cfg.out / name
        predicted = complexity_report(p).predicted
        summary[str(r)] = {"level_sizes": list(p.level_sizes), "checks": rep.checks,
                           "verdicts": rep.verdicts, "predicted": predicted,
                           "parallel_depth": rep.parallel_depth}
        for v in rep.verdicts:
            print(f"r={r}: {v}")
    out["summary"] = cfg.out / "complexity.json"
    _write_json(out["summary"], summary)

    if cfg.complexity.counters is not None:
        if not cfg.complexity.counters.exists():
            raise ConfigError(f"counter file {cfg.complexity.counters} does not exist")
        blob = json.loads(cfg.complexity.counters.read_text())
        counter = OpCounter.from_dict(blob["counters"])
        rows = reconcile(_params(cfg, lattice, cfg.dictionary.r), counter, blob["run"])
        write_reconcile(rows, cfg.out / "reconcile.csv")
        out["reconcile"] = cfg.out / "reconcile.csv"
        bad = [row.level for row in rows if not row.ok]
        print("reconcile: all levels exact" if not bad else f"reconcile: mismatch at levels {bad}")
    return out


def cmd_verify(cfg: ExperimentConfig, inject_fault: bool = False) -> list[int]:
    """Returns the failing seeds."""
    n = cfg.verify.instances
    if n == 0:
        warnings.warn("verify: 0 instances requested, nothing checked")
        print("verify: vacuous pass (0 instances)")
        return []
    results = run_sweep(n, cfg.verify.seed, FAULT if inject_fault else None)
    failed = [r.seed for r in results if not r.ok]
    for r in results:
        if not r.ok:
            print(f"FAIL seed {r.seed}: {r.failures[0]}")
    print(f"verify: {n - len(failed)}/{n} instances passed")
    return failed


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="partshare", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("build", "sample", "detect", "complexity", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument("--mode", choices=MODES, help="override inference.mode")
        p.add_argument("--seed", type=int, help="override the seed this command consumes")
        p.add_argument("--out", help="override the output directory")
        if name == "complexity":
            p.add_argument("--counters", help="counters.json from a detect run to reconcile against")
        if name == "verify":
            p.add_argument("--instances", type=int, help="override verify.instances")
            p.add_argument("--inject-fault", action="store_true",
                           help="perturb one log-probability on the DP side only")
    return ap


def _apply_overrides(cfg: ExperimentConfig, args) -> None:
    if args.mode:
        cfg.inference.mode = args.mode
    if args.out:
        cfg.out = Path(args.out)
    if args.seed is not None:
        if args.command == "build":
            cfg.dictionary.seed = args.seed
        elif args.command == "verify":
            cfg.verify.seed = args.seed
        else:
            cfg.scene.seed = args.seed
    if getattr(args, "counters", None):
        cfg.complexity.counters = Path(args.counters)
    if getattr(args, "instances", None) is not None:
        cfg.verify.instances = args.instances


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load(args.config)
        _apply_overrides(cfg, args)
        if args.command == "build":
            cmd_build(cfg)
        elif args.command == "sample":
            cmd_sample(cfg)
        elif args.command == "detect":
            cmd_detect(cfg)
        elif args.command == "complexity":
            cmd_complexity(cfg)
        elif cmd_verify(cfg, args.inject_fault):
            return EXIT_MISMATCH
    except ParamMismatch as exc:
        print(f"error: parameter mismatch: {exc}", file=sys.stderr)
        return EXIT_PARAMS
    except GenerativeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_GENERATIVE
    except (ConfigError, DictionaryError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
