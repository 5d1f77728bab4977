"""Command-line surface: counting, sampling, data, sweeps, checks, tables.

Subcommands: count, sample, synth, train, gradcheck, report.  Every command
is deterministic for fixed seeds except wall-clock fields; all randomness
enters through explicit --seed flags or SweepConfig seed fields.
"""

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .activations import (
    ACTIVATION_KINDS,
    DEFAULT_ELU_ALPHA,
    PER_BLOCK,
    PER_FEATURE_MAP,
    ActivationAssignment,
)
from .config import COMPRESSED, FULL, ArchConfig, preset, validate_config
from .data import generate_synthetic, load_manifest, stratified_folds
from .errors import StructuralError
from .gradcheck import (
    NETWORK_TOLERANCE,
    OP_TOLERANCE,
    network_gradient_errors,
    standard_op_checks,
)
from .network import build_network
from .sampler import SamplePlan, baseline_assignment, sample_assignments, sample_one
from .stats import summary
from .training import RunReport, TrainConfig, aggregate_reports, cross_validate

PRESET_NAMES = ("cmi1", "cmi2", "cmi3", "mi", "ci1", "ci2", "ci3", "i")
# Canonical Table-1 column order; unknown architecture ids follow, sorted.
REPORT_ORDER = ("cmi1", "cmi2", "cmi3", "mi", "ci1", "ci2", "ci3", "i")
BASELINE_ID = {"cmi1": "ci1", "cmi2": "ci2", "cmi3": "ci3", "mi": "i"}


def _add_arch_flags(p):
    p.add_argument("--preset", choices=PRESET_NAMES, help="named architecture")
    p.add_argument("--k", type=int, help="Inception-A blocks")
    p.add_argument("--m", type=int, help="Inception-B blocks")
    p.add_argument("--n", type=int, help="Inception-C blocks")
    p.add_argument("--mode", choices=(COMPRESSED, FULL), default=COMPRESSED)
    p.add_argument("--width", type=float, default=1.0, help="width multiplier")
    p.add_argument("--resolution", type=_resolution, default=(299, 299),
                   help="input HxW, e.g. 64x64")
    p.add_argument("--channels", type=int, default=3, help="input channels")
    p.add_argument("--num-classes", type=int, default=4)
    p.add_argument("--no-batchnorm", action="store_true")


def _resolution(text):
    try:
        h, w = text.lower().split("x")
        return (int(h), int(w))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None


def _arch_from_args(args):
    overrides = dict(
        width_multiplier=args.width,
        input_resolution=args.resolution,
        channels_in=args.channels,
        num_classes=args.num_classes,
        batchnorm_enabled=not args.no_batchnorm,
    )
    if args.preset:
        if args.k is not None or args.m is not None or args.n is not None:
            raise StructuralError("give --preset or explicit --k/--m/--n, not both")
        return preset(args.preset, **overrides), args.preset
    if None in (args.k, args.m, args.n):
        raise StructuralError("need --preset or all of --k --m --n")
    cfg = ArchConfig(k=args.k, m=args.m, n=args.n, mode=args.mode, **overrides)
    return cfg, f"k{cfg.k}m{cfg.m}n{cfg.n}"


def cmd_count(args):
    cfg, _ = _arch_from_args(args)
    violations = validate_config(cfg)
    if violations:
        for v in violations:
            print(v, file=sys.stderr)
        return 1
    plan = build_network(cfg, baseline_assignment(cfg), init_seed=0)
    print(json.dumps(summary(plan), indent=2))
    return 0


def cmd_sample(args):
    cfg, arch_id = _arch_from_args(args)
    kinds = tuple(k.strip().upper() for k in args.set.split(",")) \
        if args.set else ACTIVATION_KINDS
    plan = SamplePlan(
        arch=cfg, num_models=args.num, base_seed=args.seed,
        activation_set=kinds, granularity=args.granularity,
        elu_alpha=args.elu_alpha,
    )
    assignments = sample_assignments(plan)
    os.makedirs(args.out, exist_ok=True)
    for i, assignment in enumerate(assignments):
        name = f"{arch_id}_model{i:02d}_seed{args.seed}.json"
        path = os.path.join(args.out, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(assignment.to_json())
            fh.write("\n")
        print(path)
    return 0


def cmd_synth(args):
    from PIL import Image

    ds = generate_synthetic(
        num_classes=args.num_classes, per_class=args.per_class,
        resolution=args.resolution, seed=args.seed,
        channels=args.channels, noise_std=args.noise_std,
    )
    image_dir = os.path.join(args.out, "images")
    os.makedirs(image_dir, exist_ok=True)
    rows = []
    for i in range(len(ds)):
        chw = np.clip(ds.images[i], 0.0, 1.0)
        arr = np.round(chw * 255.0).astype(np.uint8)
        name = f"sample{i:04d}_class{int(ds.labels[i])}.png"
        if arr.shape[0] == 1:
            img = Image.fromarray(arr[0], mode="L")
        elif arr.shape[0] == 3:
            img = Image.fromarray(np.moveaxis(arr, 0, -1), mode="RGB")
        else:
            raise StructuralError("PNG export needs 1 or 3 channels")
        img.save(os.path.join(image_dir, name))
        rows.append((os.path.join("images", name), ds.class_names[ds.labels[i]]))
    manifest = os.path.join(args.out, "manifest.csv")
    with open(manifest, "w", encoding="utf-8") as fh:
        fh.write("path,label\n")
        for path, label in rows:
            fh.write(f"{path},{label}\n")
    print(f"wrote {len(rows)} images and {manifest}")
    return 0


def cmd_gradcheck(args):
    failures = 0
    for name, run in standard_op_checks(seed=args.seed):
        err = run()
        ok = err <= args.tolerance
        failures += 0 if ok else 1
        print(f"{'PASS' if ok else 'FAIL'} {name:<24s} max rel err {err:.3e}")
    if args.network:
        err = _network_gradcheck(args.seed)
        ok = err <= NETWORK_TOLERANCE
        failures += 0 if ok else 1
        print(f"{'PASS' if ok else 'FAIL'} {'network-end-to-end':<24s} "
              f"max rel err {err:.3e}")
    return 1 if failures else 0


def _network_gradcheck(seed):
    """Whole-plan check on one random block of a small float64 network."""
    rng = np.random.default_rng(seed)
    cfg = preset("cmi1", width_multiplier=1 / 16, input_resolution=(32, 32))
    plan_seed = int(rng.integers(0, 2**31))
    assignment = sample_one(
        SamplePlan(arch=cfg, num_models=1, base_seed=plan_seed), 0
    )
    plan = build_network(cfg, assignment, plan_seed, dtype=np.float64)
    block = plan.blocks[int(rng.integers(0, len(plan.blocks)))]
    params = [(f"cb{block.cb_index}.{n}", p) for n, p in block.parameters()]
    images = rng.uniform(0.0, 1.0, size=(2, cfg.channels_in, 32, 32))
    labels = rng.integers(0, cfg.num_classes, size=2)
    errors = network_gradient_errors(plan, images, labels, params)
    return max(errors.values())


@dataclass(frozen=True)
class SweepConfig:
    """A training sweep: architectures x sampled models (+ RELU baselines)."""

    architectures: tuple
    dataset: dict
    num_models: int = 10
    activation_set: tuple = ACTIVATION_KINDS
    granularity: str = PER_BLOCK
    elu_alpha: float = DEFAULT_ELU_ALPHA
    include_baseline: bool = True
    folds: int = 3
    sample_seed: int = 0
    init_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    width_multiplier: float = 1.0
    batchnorm_enabled: bool = True
    resolution: tuple = (64, 64)
    channels: int = 3
    output_dir: str = "runs"
    save_checkpoints: bool = False

    @classmethod
    def from_json(cls, doc):
        if not isinstance(doc, dict):
            raise StructuralError("sweep config must be a JSON object")
        doc = dict(doc)
        for name in ("architectures", "dataset"):
            if name not in doc:
                raise StructuralError(f"sweep config missing field {name!r}")
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise StructuralError(f"unknown sweep config fields: {sorted(unknown)}")
        archs = doc["architectures"]
        if not isinstance(archs, list) or not archs:
            raise StructuralError("architectures: need a non-empty list")
        doc["architectures"] = tuple(
            a if isinstance(a, str) else tuple(a.items()) if isinstance(a, dict)
            else _bad_arch(a)
            for a in archs
        )
        if "activation_set" in doc:
            doc["activation_set"] = tuple(doc["activation_set"])
        if "resolution" in doc:
            doc["resolution"] = tuple(doc["resolution"])
        if "train" in doc:
            if not isinstance(doc["train"], dict):
                raise StructuralError("train: must be an object of TrainConfig fields")
            try:
                doc["train"] = TrainConfig(**doc["train"])
            except TypeError as exc:
                raise StructuralError(f"train: {exc}") from None
        return cls(**doc)


def _bad_arch(a):
    raise StructuralError(
        f"architectures entries must be preset names or k/m/n objects, got {a!r}"
    )


def _sweep_architectures(sweep, dataset):
    """Resolve (arch_id, ArchConfig) pairs, geometry taken from the dataset."""
    n, c, h, w = dataset.images.shape
    overrides = dict(
        width_multiplier=sweep.width_multiplier,
        input_resolution=(h, w),
        channels_in=c,
        num_classes=dataset.num_classes,
        batchnorm_enabled=sweep.batchnorm_enabled,
    )
    out = []
    for entry in sweep.architectures:
        if isinstance(entry, str):
            out.append((entry.lower(), preset(entry, **overrides)))
        else:
            fields = dict(entry)
            extra = set(fields) - {"k", "m", "n", "mode"}
            if extra:
                raise StructuralError(f"architecture entry has unknown keys {sorted(extra)}")
            try:
                cfg = ArchConfig(
                    k=fields["k"], m=fields["m"], n=fields["n"],
                    mode=fields.get("mode", COMPRESSED), **overrides,
                )
            except KeyError as exc:
                raise StructuralError(f"architecture entry missing {exc}") from None
            out.append((f"k{cfg.k}m{cfg.m}n{cfg.n}", cfg))
    return out


def _baseline_arch_id(arch_id):
    return BASELINE_ID.get(arch_id, f"{arch_id}-relu")


def _load_sweep_dataset(sweep, base_dir):
    src = sweep.dataset
    if not isinstance(src, dict) or len(src) != 1:
        raise StructuralError(
            'dataset: need {"manifest": path} or {"synthetic": {...}}'
        )
    if "manifest" in src:
        path = src["manifest"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return load_manifest(path, sweep.resolution, sweep.channels)
    if "synthetic" in src:
        spec = dict(src["synthetic"])
        spec.setdefault("resolution", sweep.resolution)
        spec.setdefault("channels", sweep.channels)
        try:
            return generate_synthetic(**spec)
        except TypeError as exc:
            raise StructuralError(f"dataset.synthetic: {exc}") from None
    raise StructuralError(f"dataset: unknown source {sorted(src)}")


def _derive_init_seed(base, arch_index, model_slot):
    ss = np.random.SeedSequence(base, spawn_key=(arch_index, model_slot))
    return int(ss.generate_state(1)[0])


def _sweep_jobs(sweep, dataset):
    """The deterministic job list: (arch_id, config, model_index, assignment,
    init_seed) with the RELU baseline, when enabled, as the last model of
    each architecture."""
    jobs = []
    for arch_index, (arch_id, cfg) in enumerate(_sweep_architectures(sweep, dataset)):
        plan = SamplePlan(
            arch=cfg, num_models=sweep.num_models, base_seed=sweep.sample_seed,
            activation_set=sweep.activation_set, granularity=sweep.granularity,
            elu_alpha=sweep.elu_alpha,
        )
        for i, assignment in enumerate(sample_assignments(plan)):
            jobs.append((
                arch_id, cfg, i, assignment,
                _derive_init_seed(sweep.init_seed, arch_index, i),
            ))
        if sweep.include_baseline:
            jobs.append((
                _baseline_arch_id(arch_id), cfg, 0,
                baseline_assignment(cfg, "RELU", sweep.granularity,
                                    sweep.elu_alpha),
                _derive_init_seed(sweep.init_seed, arch_index, sweep.num_models),
            ))
    return jobs


def _run_sweep_job(payload):
    """Execute one (arch, model) cross-validation; a top-level function so
    worker processes can receive it."""
    sweep = SweepConfig.from_json(payload["sweep"])
    dataset = _load_sweep_dataset(sweep, payload["base_dir"])
    jobs = _sweep_jobs(sweep, dataset)
    arch_id, cfg, model_index, assignment, init_seed = jobs[payload["job_index"]]
    fold_plan = stratified_folds(dataset, sweep.folds, seed=sweep.train.seed)
    checkpoint_path = payload.get("checkpoint_path")
    report = cross_validate(
        cfg, assignment, dataset, fold_plan, sweep.train,
        arch_id=arch_id, model_index=model_index, init_seed=init_seed,
        checkpoint_path=checkpoint_path,
    )
    with open(payload["out_path"], "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2)
        fh.write("\n")
    return payload["out_path"]


def cmd_train(args):
    with open(args.config, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            print(f"{args.config}: not valid JSON ({exc})", file=sys.stderr)
            return 1
    try:
        sweep = SweepConfig.from_json(doc)
        base_dir = os.path.dirname(os.path.abspath(args.config))
        dataset = _load_sweep_dataset(sweep, base_dir)
        jobs = _sweep_jobs(sweep, dataset)
    except StructuralError as exc:
        print(f"sweep config: {exc}", file=sys.stderr)
        return 1
    out_dir = sweep.output_dir
    if not os.path.isabs(out_dir):
        out_dir = os.path.join(base_dir, out_dir)
    os.makedirs(out_dir, exist_ok=True)

    payloads, skipped = [], 0
    for job_index, (arch_id, _, model_index, _, _) in enumerate(jobs):
        out_path = os.path.join(out_dir, f"{arch_id}__model{model_index:02d}.json")
        if os.path.exists(out_path):  # resumable: completed runs are skipped
            skipped += 1
            continue
        payload = {
            "sweep": doc, "base_dir": base_dir,
            "job_index": job_index, "out_path": out_path,
        }
        if sweep.save_checkpoints:
            payload["checkpoint_path"] = out_path[: -len(".json")] + ".ckpt"
        payloads.append(payload)
    print(f"{len(jobs)} jobs: {skipped} already done, {len(payloads)} to run")

    if args.workers > 1 and payloads:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            for path in pool.map(_run_sweep_job, payloads):
                print(f"wrote {path}")
    else:
        for payload in payloads:
            print(f"wrote {_run_sweep_job(payload)}")
    return 0


def _load_reports(run_dir):
    paths = sorted(
        os.path.join(run_dir, name)
        for name in os.listdir(run_dir)
        if name.endswith(".json")
    )
    if not paths:
        raise StructuralError(f"{run_dir}: no RunReport files")
    reports = []
    for path in paths:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                reports.append(RunReport.from_json(json.load(fh)))
            except (json.JSONDecodeError, TypeError, KeyError) as exc:
                raise StructuralError(f"{path}: not a RunReport ({exc})") from None
    return reports


def _column_order(arch_ids):
    known = [a for a in REPORT_ORDER if a in arch_ids]
    rest = sorted(set(arch_ids) - set(REPORT_ORDER))
    return known + rest


TABLE_ROWS = (
    ("F1_train", "f1_train", "{:.4f}"),
    ("F1_valid", "f1_valid", "{:.4f}"),
    ("T_train (s)", "t_train_seconds", "{:.2f}"),
    ("T_test (s)", "t_test_seconds", "{:.2f}"),
)


def _markdown_table(title, columns, cells):
    lines = [f"### {title}", ""]
    header = ["metric"] + [c.upper() for c in columns]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "---|" * len(header))
    for label, key, fmt in TABLE_ROWS:
        row = [label] + [fmt.format(cells[c][key]) for c in columns]
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def _csv_table(columns, cells, extra_keys=()):
    keys = [key for _, key, _ in TABLE_ROWS] + list(extra_keys)
    lines = ["arch," + ",".join(keys)]
    for c in columns:
        lines.append(c + "," + ",".join(repr(cells[c][k]) for k in keys))
    return "\n".join(lines) + "\n"


def cmd_report(args):
    reports = _load_reports(args.runs)
    groups = {}
    for r in reports:
        groups.setdefault(r.arch_id, []).append(r)
    columns = _column_order(groups)
    best_cells, mean_cells = {}, {}
    for arch_id, group in groups.items():
        agg = aggregate_reports(group)
        best = agg["best"]
        best_cells[arch_id] = {
            "f1_train": best.f1_train, "f1_valid": best.f1_valid,
            "t_train_seconds": best.t_train_seconds,
            "t_test_seconds": best.t_test_seconds,
            "model_index": best.model_index,
            "parameter_count": best.parameter_count,
            "serialized_bytes": best.serialized_bytes,
        }
        mean_cells[arch_id] = agg["mean"]
    best_md = _markdown_table("Best model per architecture", columns, best_cells)
    mean_md = _markdown_table("Average over sampled models", columns, mean_cells)
    print(best_md)
    print(mean_md)
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        with open(os.path.join(args.out_dir, "tables.md"), "w", encoding="utf-8") as fh:
            fh.write(best_md + "\n" + mean_md)
        with open(os.path.join(args.out_dir, "best.csv"), "w", encoding="utf-8") as fh:
            fh.write(_csv_table(columns, best_cells,
                                ("model_index", "parameter_count", "serialized_bytes")))
        with open(os.path.join(args.out_dir, "mean.csv"), "w", encoding="utf-8") as fh:
            fh.write(_csv_table(columns, mean_cells, ("models",)))
        print(f"tables written to {args.out_dir}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mfinception",
        description="Compressed multi-function Inception-V4 toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("count", help="print the architecture summary JSON")
    _add_arch_flags(p)
    p.set_defaults(fn=cmd_count)

    p = sub.add_parser("sample", help="sample random activation assignments")
    _add_arch_flags(p)
    p.add_argument("--num", type=int, default=10, help="models to sample")
    p.add_argument("--seed", type=int, default=0, help="base sampling seed")
    p.add_argument("--set", default=None,
                   help="comma-separated activation kinds (default: all four)")
    p.add_argument("--granularity", choices=(PER_BLOCK, PER_FEATURE_MAP),
                   default=PER_BLOCK)
    p.add_argument("--elu-alpha", type=float, default=DEFAULT_ELU_ALPHA)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("synth", help="generate a synthetic PNG dataset")
    p.add_argument("--num-classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=30)
    p.add_argument("--resolution", type=_resolution, default=(64, 64))
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-std", type=float, default=0.05)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="run a cross-validation sweep")
    p.add_argument("--config", required=True, help="SweepConfig JSON file")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel worker processes (1 = in-process)")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=OP_TOLERANCE)
    p.add_argument("--network", action="store_true",
                   help="also check one block of a small end-to-end network")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("report", help="render Table-style best/mean tables")
    p.add_argument("--runs", required=True, help="directory of RunReport files")
    p.add_argument("--out-dir", default=None, help="write markdown+CSV here")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except StructuralError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
