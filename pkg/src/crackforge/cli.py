"""Command-line interface: simulate, generate, evaluate, export.

Configuration lives in a plain key = value text file that is snapshotted
into the dataset manifest, so a (bitmap, seed, config) triple fully
reproduces every artifact.  Sample outputs are written atomically
(temp file + rename) and the manifest is assembled last.

Exit codes: 0 success, 1 usage/config error, 2 simulation failure,
3 evaluation mismatch.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .bitmap import BadMagic, IntensityGrid, Truncated, parse_idx, read_pgm, write_pgm
from .constitutive import derive_params
from .material import (
    MaterialField,
    MaterialGenParams,
    centers_from_csv,
    centers_to_csv,
    homogeneous_field,
    place_inclusions,
    rasterize_rigidity,
)
from .metrics import (
    MissingPair,
    aggregate_report,
    full_report,
    threshold_sweep,
)
from .sampling import (
    binarize,
    curve_to_csv,
    raster_to_csv,
    read_raster,
    sample_to_raster,
    write_raster,
)
from .solver import LoadProgram, NoConvergence, SingularSystem, run_simulation

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SIMULATION = 2
EXIT_EVALUATION = 3


class ConfigError(ValueError):
    pass


def parse_config_text(text: str) -> dict:
    """key = value lines; '#' comments; bool/int/float/string values."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = _parse_value(val)
    return out


def _parse_value(val: str):
    low = val.lower()
    if low in ("true", "false"):
        return low == "true"
    if len(val) >= 2 and val[0] == val[-1] and val[0] in "\"'":
        return val[1:-1]
    try:
        return int(val)
    except ValueError:
        pass
    try:
        return float(val)
    except ValueError:
        pass
    return val


@dataclass
class SimConfig:
    """Everything one simulation needs; defaults are the dataset program
    at desk-scale mesh resolution."""

    mesh_n: int = 100
    l0: float = 0.05
    e0: float = 210000.0
    nu: float = 0.3
    gf: float = 2.7
    ft: float = 2445.42
    n_steps: int = 200
    increment: float = 0.0001
    crack_y: float = 0.5
    crack_length: float = 0.25
    rigidity_raster_n: int = 64
    damage_raster_n: int = 256
    save_every: int = 0
    subregion_fraction: float = 0.6
    min_center_distance: float = 0.0525
    intensity_threshold: int = 10
    max_attempts: int = 100
    seed: int = 0
    bitmap: str = ""
    bitmap_index: int = 0
    centers_csv: str = ""
    stop_after_peak_fraction: float = 0.0
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_file(cls, path: str) -> "SimConfig":
        with open(path, "r", encoding="utf-8") as fh:
            data = parse_config_text(fh.read())
        cfg = cls(raw=dict(data))
        for key, val in data.items():
            if not hasattr(cfg, key) or key == "raw":
                raise ConfigError(f"unknown config key {key!r}")
            want = type(getattr(cfg, key))
            if want is float and isinstance(val, int):
                val = float(val)
            if not isinstance(val, want):
                raise ConfigError(f"config key {key!r} expects {want.__name__}, got {val!r}")
            setattr(cfg, key, val)
        return cfg

    def load_program(self) -> LoadProgram:
        return LoadProgram(n_steps=self.n_steps, increment=self.increment,
                           max_displacement=self.n_steps * self.increment)

    def gen_params(self, seed: int) -> MaterialGenParams:
        return MaterialGenParams(
            pixel_subregion_fraction=self.subregion_fraction,
            min_center_distance=self.min_center_distance,
            intensity_threshold=self.intensity_threshold,
            max_rejection_attempts=self.max_attempts,
            seed=seed)

    def snapshot(self) -> dict:
        d = asdict(self)
        d.pop("raw")
        return d


def _read_bitmap_file(path: str) -> list[IntensityGrid]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"P5":
        return [read_pgm(data)]
    return parse_idx(data)


def _atomic_write(path: str, data: bytes):
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def sample_seed(dataset_seed: int, index: int) -> int:
    """Stable per-sample key so batch generation is order-independent."""
    ss = np.random.SeedSequence([int(dataset_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def _build_material(cfg: SimConfig, grid: IntensityGrid | None, seed: int) -> MaterialField:
    base = dict(e0=cfg.e0, gf=cfg.gf, ft=cfg.ft)
    if grid is not None:
        fld = place_inclusions(grid, cfg.gen_params(seed))
        return MaterialField(centers=fld.centers, skipped_pixels=fld.skipped_pixels, **base)
    if cfg.centers_csv:
        with open(cfg.centers_csv, "r", encoding="utf-8") as fh:
            return centers_from_csv(fh.read(), **base)
    return homogeneous_field(**base)


def _run_sample(cfg: SimConfig, material: MaterialField, out_dir: str,
                prefix: str) -> dict:
    """Simulate one material sample and write its artifacts.

    Returns the manifest entry fields shared by simulate and generate.
    """
    params = derive_params(cfg.e0, cfg.nu, cfg.gf, cfg.ft, cfg.l0)
    program = cfg.load_program()
    stop = cfg.stop_after_peak_fraction if cfg.stop_after_peak_fraction > 0 else None
    result = run_simulation(
        material, params, program, n_cells=cfg.mesh_n,
        crack_y=cfg.crack_y, crack_length=cfg.crack_length,
        allow_low_resolution=True,
        stop_after_peak_fraction=stop,
        snapshot_every=cfg.save_every)

    files = {}
    rigidity = rasterize_rigidity(material, cfg.rigidity_raster_n)
    files["rigidity"] = f"{prefix}rigidity.crk"
    _atomic_write(os.path.join(out_dir, files["rigidity"]), write_raster(rigidity))

    damage = sample_to_raster(result.mesh, result.phi, cfg.damage_raster_n).values
    files["damage"] = f"{prefix}damage.crk"
    _atomic_write(os.path.join(out_dir, files["damage"]),
                  write_raster(binarize(np.clip(damage, 0.0, 1.0))))

    files["curve"] = f"{prefix}curve.csv"
    _atomic_write(os.path.join(out_dir, files["curve"]),
                  curve_to_csv(result.curve).encode("ascii"))

    if material.n_centers:
        files["centers"] = f"{prefix}centers.csv"
        _atomic_write(os.path.join(out_dir, files["centers"]),
                      centers_to_csv(material).encode("ascii"))

    for step, phi in result.snapshots:
        name = f"{prefix}damage_step{step:04d}.crk"
        snap = sample_to_raster(result.mesh, phi, cfg.damage_raster_n).values
        _atomic_write(os.path.join(out_dir, name),
                      write_raster(binarize(np.clip(snap, 0.0, 1.0))))
        files.setdefault("snapshots", []).append(name)

    if cfg.save_every:
        # extended mode also keeps the final fields at full mesh resolution
        name = f"{prefix}nodal_fields.csv"
        mesh = result.mesh
        rows = ["x,y,ux,uy,phi"]
        rows += [f"{x:.17g},{y:.17g},{ux:.17g},{uy:.17g},{p:.17g}"
                 for (x, y), ux, uy, p in zip(mesh.nodes, result.u[0::2],
                                              result.u[1::2], result.phi)]
        _atomic_write(os.path.join(out_dir, name),
                      ("\n".join(rows) + "\n").encode("ascii"))
        files["nodal_fields"] = name

    return {
        "inclusion_count": material.n_centers,
        "skip_log_size": len(material.skipped_pixels),
        "files": files,
        "peak_force": float(result.peak_force),
        "final_force": float(result.curve[-1, 1]),
    }


def cmd_simulate(args) -> int:
    cfg = SimConfig.from_file(args.config)
    os.makedirs(args.out, exist_ok=True)
    grid = None
    if cfg.bitmap:
        grids = _read_bitmap_file(cfg.bitmap)
        if not 0 <= cfg.bitmap_index < len(grids):
            raise ConfigError(f"bitmap_index {cfg.bitmap_index} outside file of {len(grids)}")
        grid = grids[cfg.bitmap_index]
    material = _build_material(cfg, grid, cfg.seed)
    try:
        entry = _run_sample(cfg, material, args.out, "")
    except (NoConvergence, SingularSystem) as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    print(json.dumps(entry, indent=2))
    return EXIT_OK


def _generate_worker(payload: tuple) -> dict:
    """Worker for one dataset sample; lives at module scope for pickling."""
    cfg_data, grid_values, index, seed, out_dir = payload
    cfg = SimConfig(**cfg_data)
    grid = IntensityGrid(np.asarray(grid_values, dtype=np.uint8))
    prefix = f"sample_{index:05d}_"
    entry = {"index": index, "bitmap_index": index, "status": "ok"}
    try:
        material = _build_material(cfg, grid, sample_seed(seed, index))
        entry.update(_run_sample(cfg, material, out_dir, prefix))
    except (NoConvergence, SingularSystem) as exc:
        entry["status"] = "failed"
        entry["error"] = str(exc)
    return entry


def _parse_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = text.split("..")
        lo, hi = int(lo), int(hi)
    except ValueError as exc:
        raise ConfigError(f"range must look like A..B, got {text!r}") from exc
    if hi <= lo:
        raise ConfigError(f"empty range {text!r}")
    return lo, hi


def cmd_generate(args) -> int:
    cfg = SimConfig.from_file(args.config)
    lo, hi = _parse_range(args.range)
    grids = _read_bitmap_file(args.bitmap)
    if hi > len(grids):
        raise ConfigError(f"range {args.range} outside bitmap file of {len(grids)} images")
    os.makedirs(args.out, exist_ok=True)

    cfg_data = cfg.snapshot()
    cfg_data.pop("bitmap", None)
    cfg_data.pop("bitmap_index", None)
    cfg_data.pop("centers_csv", None)
    payloads = [
        ((dict(cfg_data, bitmap="", bitmap_index=0, centers_csv="")),
         grids[i].values.tolist(), i, args.seed, args.out)
        for i in range(lo, hi)
    ]
    payloads = [tuple(p) for p in payloads]

    if args.jobs <= 1:
        entries = [_generate_worker(p) for p in payloads]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            entries = list(pool.map(_generate_worker, payloads))
    entries.sort(key=lambda e: e["index"])

    manifest = {
        "tool_version": __version__,
        "seed": args.seed,
        "bitmap": os.path.basename(args.bitmap),
        "range": [lo, hi],
        "config": cfg.snapshot(),
        "samples": entries,
    }
    _atomic_write(os.path.join(args.out, "manifest.json"),
                  json.dumps(manifest, indent=2, sort_keys=True).encode("ascii"))
    failed = [e["index"] for e in entries if e["status"] != "ok"]
    if failed:
        print(f"{len(failed)} sample(s) failed: {failed}", file=sys.stderr)
        return EXIT_SIMULATION
    return EXIT_OK


def _load_binary_raster(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"P5":
        return (read_pgm(data).values > 0).astype(np.uint8)
    return (read_raster(data) > 0).astype(np.uint8)


def cmd_evaluate(args) -> int:
    exts = (".crk", ".pgm")

    def listing(d):
        return {f for f in os.listdir(d) if f.lower().endswith(exts)}

    pred_files = listing(args.pred)
    truth_files = listing(args.truth)
    if pred_files != truth_files:
        only_pred = sorted(pred_files - truth_files)
        only_truth = sorted(truth_files - pred_files)
        raise MissingPair(f"unmatched files; pred-only {only_pred}, truth-only {only_truth}")
    if not pred_files:
        raise MissingPair("no raster pairs found")

    names = sorted(pred_files)
    rows = []
    pairs = []
    reports = []
    for name in names:
        pred = _load_binary_raster(os.path.join(args.pred, name))
        truth = _load_binary_raster(os.path.join(args.truth, name))
        report = full_report(pred, truth, cutoff=args.cutoff)
        reports.append(report)
        rows.append({"sample": name, **report.as_dict()})
        pairs.append((pred, truth))
    summary = aggregate_report(reports)
    out = {"cutoff": args.cutoff, "samples": rows, "aggregate": summary}

    os.makedirs(args.out, exist_ok=True)
    _atomic_write(os.path.join(args.out, "report.json"),
                  json.dumps(out, indent=2, sort_keys=True).encode("ascii"))
    header = "sample,tp,fp,fn,tn,f1,wrong_pixels,continuous,label"
    lines = [header] + [
        f"{r['sample']},{r['tp']},{r['fp']},{r['fn']},{r['tn']},"
        f"{r['f1']:.6f},{r['wrong_pixels']},{int(bool(r['continuous']))},{r['label']}"
        for r in rows
    ]
    _atomic_write(os.path.join(args.out, "report.csv"),
                  ("\n".join(lines) + "\n").encode("ascii"))

    if args.sweep:
        cutoffs = [float(c) for c in args.sweep.split(",")]
        fracs = threshold_sweep(pairs, cutoffs)
        sweep_lines = ["cutoff,fraction_correct"] + [
            f"{c:.6g},{f:.6f}" for c, f in zip(cutoffs, fracs)]
        _atomic_write(os.path.join(args.out, "sweep.csv"),
                      ("\n".join(sweep_lines) + "\n").encode("ascii"))

    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_export(args) -> int:
    with open(args.raster, "rb") as fh:
        values = read_raster(fh.read())
    if args.out.lower().endswith(".pgm"):
        if values.dtype != np.uint8:
            raise ConfigError("PGM export needs a uint8 raster; use .csv for float data")
        # stretch 0/1 crack masks to full contrast
        v = values * 255 if values.max() <= 1 else values
        _atomic_write(args.out, write_pgm(IntensityGrid(v)))
    elif args.out.lower().endswith(".csv"):
        _atomic_write(args.out, raster_to_csv(values).encode("ascii"))
    else:
        raise ConfigError("export target must end in .pgm or .csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crackforge",
        description="Quasi-static brittle-fracture dataset generation and scoring")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one simulation from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("generate", help="generate a dataset from a bitmap file")
    p.add_argument("bitmap")
    p.add_argument("--config", required=True)
    p.add_argument("--range", required=True, help="sample indices A..B (half-open)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score predicted crack rasters against truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--cutoff", type=float, default=0.85)
    p.add_argument("--sweep", default="", help="comma-separated cutoffs for a sweep CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export", help="convert a raster container to PGM or CSV")
    p.add_argument("raster")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, BadMagic, Truncated, FileNotFoundError, ValueError) as exc:
        if isinstance(exc, MissingPair):
            print(f"evaluation mismatch: {exc}", file=sys.stderr)
            return EXIT_EVALUATION
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
