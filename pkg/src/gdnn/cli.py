"""Command-line surface.

Subcommands: prepare-data, train, eval, profile, govern, report. Every
command emits a RunManifest JSON (next to the primary output, or on
stderr for commands that print to stdout) recording the resolved
configuration, seeds, SHA-256 digests of the inputs, and the output
paths, so deterministic commands can be reproduced bit-exactly.

Exit codes: 0 success; 2 usage; 3 ingestion or unreadable file; 4 state;
5 infeasible budget; 6 configuration; 7 malformed container/profile;
8 bad input value or dimension; 9 measurement failure; 1 anything else.
"""

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .data import (build_bundle, load_archive, load_cifar_dir,
                   make_synthetic_raw, save_archive,
                   CIFAR_TRAIN_FILES, CIFAR_TEST_FILE)
from .errors import (ConfigError, DimensionError, FormatError, GdnnError,
                     InfeasibleError, IngestError, InputError,
                     MeasurementError, StateError)
from .governor import (Budget, dynamic_range, load_profile, parse_knobs,
                       save_profile, select_point)
from .model import GroupNetArch, param_count
from .profiling import profile_host, stats_to_profile
from .training import TrainPlan, evaluate_accuracy, evaluate_confidence, run_full_training

_EXIT_CODES = (
    (IngestError, 3),
    (StateError, 4),
    (InfeasibleError, 5),
    (ConfigError, 6),
    (FormatError, 7),
    (InputError, 8),
    (DimensionError, 8),
    (MeasurementError, 9),
)

_KNOB_SETS = ("config", "config+dvfs", "config+dvfs+map")


# -------------------------------------------------------------- manifest


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _manifest(args, inputs, outputs, seeds=None) -> dict:
    config = {k: (str(v) if isinstance(v, Path) else v)
              for k, v in vars(args).items() if k not in ("func", "command")}
    return {
        "command": args.command,
        "config": config,
        "seeds": seeds or {},
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "version": __version__,
    }


def _emit_manifest(manifest: dict, path=None):
    text = json.dumps(manifest, indent=2, sort_keys=True)
    if path is None:
        print(text, file=sys.stderr)
    else:
        Path(path).write_text(text + "\n", encoding="utf-8")


def _split_of(bundle, name: str):
    return {"train": bundle.train, "val": bundle.val, "test": bundle.test}[name]


def _k_of_pct(pct: int, num_groups: int) -> int:
    k, rem = divmod(pct * num_groups, 100)
    if rem or k < 1:
        raise ConfigError(f"config {pct}% does not map to a whole group count of {num_groups}")
    return k


# -------------------------------------------------------------- commands


def cmd_prepare_data(args) -> int:
    inputs = []
    if args.cifar_dir is not None:
        if args.classes != 10:
            raise ConfigError("CIFAR-10 ingestion implies 10 classes")
        train_raw, test_raw = load_cifar_dir(args.cifar_dir)
        inputs = [Path(args.cifar_dir) / f for f in CIFAR_TRAIN_FILES + (CIFAR_TEST_FILE,)]
        val_count = args.val_count if args.val_count is not None else 5000
    else:
        n = args.synthetic
        test_count = args.test_count if args.test_count is not None else max(1, n // 5)
        labels, pixels = make_synthetic_raw(n + test_count, args.classes, args.seed)
        train_raw = (labels[:n], pixels[:n])
        test_raw = (labels[n:], pixels[n:])
        val_count = args.val_count if args.val_count is not None else max(1, n // 10)
    bundle = build_bundle(train_raw, test_raw, val_count, args.classes)
    out = save_archive(bundle, args.out)
    print(f"wrote {out}: train={len(bundle.train)} val={len(bundle.val)} "
          f"test={len(bundle.test)} classes={bundle.num_classes} "
          f"mean={np.array2string(bundle.channel_mean, precision=4)}")
    _emit_manifest(_manifest(args, inputs, [out], seeds={"seed": args.seed}),
                   str(out) + ".manifest.json")
    return 0


def cmd_train(args) -> int:
    bundle = load_archive(args.data)
    arch = GroupNetArch(num_groups=args.groups,
                        channels_per_group=args.channels_per_group,
                        num_classes=bundle.num_classes)
    plan = TrainPlan(epochs_per_step=args.epochs, batch_size=args.batch_size,
                     base_lr=args.lr, momentum=args.momentum,
                     fc_lr_decay=args.fc_lr_decay,
                     target_improvement=args.target_improvement,
                     max_repeats=args.max_repeats, rng_seed=args.seed,
                     lr_step_epochs=args.lr_step_epochs, lr_gamma=args.lr_gamma)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_dir = out_dir if args.epoch_checkpoints else None
    model, reports = run_full_training(arch, bundle, plan, checkpoint_dir=ckpt_dir)
    model.channel_mean = bundle.channel_mean
    final = out_dir / "final.gdnn"
    save_checkpoint(model, final)
    steps_csv = out_dir / "steps.csv"
    with open(steps_csv, "w", encoding="utf-8") as f:
        f.write("step,attempt,epoch,val_accuracy,chosen,repeats\n")
        for r in reports:
            for rec in r.records:
                chosen = int(rec.attempt == r.chosen_attempt and rec.epoch == r.chosen_epoch)
                f.write(f"{r.step},{rec.attempt},{rec.epoch},{rec.val_accuracy!r},"
                        f"{chosen},{r.repeats_used}\n")
    for r in reports:
        line = (f"step {r.step}: accuracy {r.chosen_accuracy:.4f} "
                f"(attempt {r.chosen_attempt}, epoch {r.chosen_epoch}, fc_lr {r.fc_lr:g})")
        if r.warning:
            line += f" [warning: {r.warning}]"
        print(line)
    outputs = [final, steps_csv]
    _emit_manifest(_manifest(args, [args.data], outputs, seeds={"rng_seed": plan.rng_seed}),
                   out_dir / "manifest.json")
    print(f"wrote {final}")
    return 0


def cmd_eval(args) -> int:
    model = load_checkpoint(args.model)
    bundle = load_archive(args.data)
    dataset = _split_of(bundle, args.split)
    G = model.arch.num_groups
    if args.config == "all":
        if model.trained_groups < 1:
            raise ConfigError("model has no trained groups to evaluate")
        ks = list(range(1, model.trained_groups + 1))
    else:
        ks = [_k_of_pct(int(args.config), G)]
    lines = []
    header = ["config_pct", "k", "accuracy", "confidence_total", "confidence_normalized"]
    header += [f"class_{c}" for c in range(dataset.num_classes)]
    lines.append(",".join(header))
    for k in ks:
        acc, per_class = evaluate_accuracy(model, k, dataset)
        conf = evaluate_confidence(model, k, dataset, correct_only=args.correct_only)
        row = [str(k * 100 // G), str(k), repr(acc), repr(conf.total), repr(conf.normalized)]
        row += [repr(float(v)) for v in per_class]
        lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    outputs = []
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        outputs.append(args.out)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    _emit_manifest(_manifest(args, [args.model, args.data], outputs),
                   str(args.out) + ".manifest.json" if args.out else None)
    return 0


def cmd_profile(args) -> int:
    model = load_checkpoint(args.model)
    bundle = load_archive(args.data)
    dataset = _split_of(bundle, args.split)
    sample = dataset
    if args.limit and args.limit < len(dataset):
        sample = type(dataset)(dataset.images[:args.limit],
                               dataset.labels[:args.limit], dataset.num_classes)
    stats = profile_host(model, sample, args.reps)
    acc_by_k = {k: evaluate_accuracy(model, k, dataset)[0]
                for k in range(1, model.trained_groups + 1)}
    profile = stats_to_profile(stats, acc_by_k)
    out = save_profile(profile, args.out)
    for s in stats:
        print(f"k={s.config_k}: mean {s.mean_ms:.3f} ms, p95 {s.p95_ms:.3f} ms "
              f"({s.samples} samples)")
    _emit_manifest(_manifest(args, [args.model, args.data], [out]),
                   str(out) + ".manifest.json")
    print(f"wrote {out}")
    return 0


def cmd_govern(args) -> int:
    profile = load_profile(args.profile)
    budget = Budget(args.budget_metric, args.budget)
    knobs = parse_knobs(args.knobs)
    point = select_point(profile, budget, knobs, reference_core=args.core)
    print(f"selected: core={point.core} freq={point.freq_hz} config={point.config_k * 25}% "
          f"latency_ms={point.latency_ms:g} "
          f"power_mw={'-' if point.power_mw is None else f'{point.power_mw:g}'} "
          f"energy_mj={'-' if point.energy_mj is None else f'{point.energy_mj:g}'} "
          f"accuracy={point.accuracy:g}")
    for knob_text in _KNOB_SETS:
        ks = parse_knobs(knob_text)
        parts = []
        for metric in ("time_ms", "energy_mj"):
            try:
                parts.append(f"{metric} {dynamic_range(profile, metric, ks, args.core):.2f}x")
            except (InputError, ConfigError):
                parts.append(f"{metric} n/a")
        print(f"range[{knob_text}]: " + ", ".join(parts))
    _emit_manifest(_manifest(args, [args.profile], []))
    return 0


def cmd_report(args) -> int:
    model = load_checkpoint(args.model)
    bundle = load_archive(args.data)
    dataset = _split_of(bundle, args.split)
    profile = load_profile(args.profile)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    G = model.arch.num_groups

    fig2 = out_dir / "fig2.csv"
    fig3 = out_dir / "fig3.csv"
    with open(fig2, "w", encoding="utf-8") as f2, open(fig3, "w", encoding="utf-8") as f3:
        f2.write("k,config_pct,accuracy\n")
        f3.write("k,config_pct,confidence_total,confidence_normalized\n")
        for k in range(1, model.trained_groups + 1):
            acc, _ = evaluate_accuracy(model, k, dataset)
            conf = evaluate_confidence(model, k, dataset)
            f2.write(f"{k},{k * 100 // G},{acc!r}\n")
            f3.write(f"{k},{k * 100 // G},{conf.total!r},{conf.normalized!r}\n")

    fig4 = out_dir / "fig4.csv"
    with open(fig4, "w", encoding="utf-8") as f:
        f.write("core,freq_hz,k,config_pct,latency_ms\n")
        fmax = {}
        for p in profile.points:
            fmax[p.core] = max(fmax.get(p.core, 0), p.freq_hz)
        for p in profile.points:
            if p.freq_hz == fmax[p.core]:
                f.write(f"{p.core},{p.freq_hz},{p.config_k},{p.config_k * 25},"
                        f"{p.latency_ms!r}\n")

    fig5 = out_dir / "fig5.csv"
    with open(fig5, "w", encoding="utf-8") as f:
        f.write("platform,core,freq_hz,k,config_pct,latency_ms,power_mw,energy_mj,accuracy\n")
        for p in profile.points:
            f.write(f"{p.platform},{p.core},{p.freq_hz},{p.config_k},{p.config_k * 25},"
                    f"{p.latency_ms!r},"
                    f"{'' if p.power_mw is None else repr(p.power_mw)},"
                    f"{'' if p.energy_mj is None else repr(p.energy_mj)},"
                    f"{p.accuracy!r}\n")

    summary = out_dir / "summary.csv"
    rrcr_pct = 100.0 * (G - 1) / G
    size_kb = Path(args.model).stat().st_size / 1000.0
    analytic_kb = 4 * param_count(model, G) / 1000.0
    with open(summary, "w", encoding="utf-8") as f:
        f.write("knobs,time_range,energy_range,rrcr_pct,model_size_kb,analytic_size_kb\n")
        for knob_text in _KNOB_SETS:
            ks = parse_knobs(knob_text)
            cells = []
            for metric in ("time_ms", "energy_mj"):
                try:
                    cells.append(repr(dynamic_range(profile, metric, ks)))
                except (InputError, ConfigError):
                    cells.append("")
            f.write(f"{knob_text},{cells[0]},{cells[1]},{rrcr_pct!r},"
                    f"{size_kb!r},{analytic_kb!r}\n")

    outputs = [fig2, fig3, fig4, fig5, summary]
    for p in outputs:
        print(f"wrote {p}")
    _emit_manifest(_manifest(args, [args.model, args.data, args.profile], outputs),
                   out_dir / "report.manifest.json")
    return 0


# --------------------------------------------------------------- parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gdnn",
        description="Grouped dynamic DNN: train incrementally, switch width at "
                    "inference, pick operating points under a budget.")
    parser.add_argument("--version", action="version", version=f"gdnn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-data", help="ingest CIFAR-10 binaries or generate synthetic data")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--cifar-dir", type=Path, help="directory with data_batch_*.bin + test_batch.bin")
    src.add_argument("--synthetic", type=int, metavar="N", help="generate N synthetic training images")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-count", type=int, default=None,
                   help="validation images held out from the end of train (default: 5000 CIFAR, N/10 synthetic)")
    p.add_argument("--test-count", type=int, default=None,
                   help="synthetic test images (default N/5)")
    p.add_argument("--out", type=Path, required=True, help="output archive path (.gdnd)")
    p.set_defaults(func=cmd_prepare_data)

    p = sub.add_parser("train", help="run the full incremental training")
    p.add_argument("--data", type=Path, required=True, help="dataset archive from prepare-data")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--groups", type=int, default=4)
    p.add_argument("--channels-per-group", type=int, default=16)
    p.add_argument("--epochs", type=int, default=10, help="epochs per training step")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--fc-lr-decay", type=float, default=0.1)
    p.add_argument("--target-improvement", type=float, default=1.0,
                   help="required val-accuracy gain in percentage points for steps 3+")
    p.add_argument("--max-repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr-step-epochs", type=int, default=0)
    p.add_argument("--lr-gamma", type=float, default=1.0)
    p.add_argument("--no-epoch-checkpoints", dest="epoch_checkpoints",
                   action="store_false",
                   help="skip writing a checkpoint per epoch (standard arch only)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy, per-class accuracy, confidence at a width")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="val")
    p.add_argument("--config", choices=("25", "50", "75", "100", "all"), required=True)
    p.add_argument("--correct-only", action="store_true",
                   help="confidence counts only correctly classified images")
    p.add_argument("--out", type=Path, default=None, help="CSV path (default stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("profile", help="measure per-width latency on this host")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="val")
    p.add_argument("--limit", type=int, default=32, help="images per timing pass")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--out", type=Path, required=True, help="profile CSV path")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("govern", help="select an operating point under a budget")
    p.add_argument("--profile", type=Path, required=True)
    p.add_argument("--budget-metric", choices=("time_ms", "power_mw", "energy_mj"),
                   required=True)
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--knobs", default="config+dvfs+map",
                   help="enabled knobs, e.g. config, config+dvfs, config+dvfs+map")
    p.add_argument("--core", default=None,
                   help="reference core when mapping is disabled (default: first profile row)")
    p.set_defaults(func=cmd_govern)

    p = sub.add_parser("report", help="emit plot-ready CSVs and a summary table")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--profile", type=Path, required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--out-dir", type=Path, required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except OSError as e:
        # unreadable or unwritable file; same exit code as ingestion
        print(f"error: {e}", file=sys.stderr)
        return 3
    except GdnnError as e:
        for cls, code in _EXIT_CODES:
            if isinstance(e, cls):
                break
        else:
            code = 1
        print(f"error: {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
