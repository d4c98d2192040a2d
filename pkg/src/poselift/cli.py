"""Command-line entry point: ``poselift <subcommand> [options]``.

Options can also come from ``--config FILE`` holding ``key=value`` lines whose
keys are option names without the leading dashes. Explicit flags win over the
file, which wins over built-in defaults.
"""

import argparse
import csv
import io
import logging
import os
import sys

import numpy as np

from . import plotting
from .datagen import (
    DatasetRecord,
    SynthConfig,
    build_dataset,
    generate_synthetic,
    read_dataset,
    split,
    stack_records,
    write_dataset,
)
from .errors import ParseError, PoseliftError
from .evaluation import (
    ablation_curve,
    diversity_stats,
    evaluate,
    format_table,
    reports_to_csv,
)
from .lifter import (
    CvaeConfig,
    baseline_gaussian_sample,
    baseline_regress,
    build_model,
    load_model,
    save_model,
    train,
    train_baseline,
)
from .nn import RngStream
from .pipeline import (
    DEFAULT_T_GRID,
    draw_candidates,
    ground_truth_poses,
    gt_references,
    noisy_references,
    predict_methods,
    read_ordinal_file,
    tune_temperature,
)
from .pose import POSE3D_ROOTCENTERED, CameraIntrinsics, write_poseset
from .skeleton import H36M_SKELETON

log = logging.getLogger("poselift")

PAPER_VARIANCES = (1.0, 5.0, 10.0, 20.0, 100.0, 400.0)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _common(p):
    p.add_argument("--config", help="key=value file supplying option defaults")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--dataset")
    p.add_argument("--checkpoint")
    p.add_argument("--k-test", type=int, default=200)
    p.add_argument("--temperature", type=float, default=0.3,
                   help="softmax temperature for predicted/noisy ordinals")
    p.add_argument("--temperature-gt", type=float, default=0.9,
                   help="softmax temperature for ground-truth ordinals")
    p.add_argument("--ordinal-source", choices=("gt", "noisy", "file"), default="noisy")
    p.add_argument("--ordinals-file", help="per-item predicted ordinals (--ordinal-source file)")
    p.add_argument("--ordinal-accuracy", type=float, default=0.868)
    p.add_argument("--epsilon-mm", type=float, default=100.0)
    p.add_argument("--with-scale", dest="with_scale", action="store_true", default=True,
                   help="Procrustes alignment with uniform scale (default)")
    p.add_argument("--no-scale", dest="with_scale", action="store_false",
                   help="Procrustes alignment with rotation and translation only")
    p.add_argument("-v", "--verbose", action="store_true")


def _model_options(p):
    p.add_argument("--model", choices=("cvae", "baseline"), default="cvae")
    p.add_argument("--preset", choices=("desk", "full"), default="desk")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--latent-dim", type=int)
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--blocks", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--k-train", type=int)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--alpha", type=float)


def build_parser():
    parser = _Parser(prog="poselift", description="Generative 2D-to-3D pose lifting.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _common(p)
    p.add_argument("--num-poses", type=int, default=1600)
    p.add_argument("--mirror-fraction", type=float, default=0.5)
    p.add_argument("--camera-distance", type=float, default=5500.0)
    p.add_argument("--rotations", type=_floats, default=[90.0, 180.0, 270.0])
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--focal", type=_floats, default=[1145.0, 1145.0])
    p.add_argument("--principal", type=_floats, default=[512.0, 512.0])
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the CVAE or the baseline regressor")
    _common(p)
    _model_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="sample candidates and predict final poses")
    _common(p)
    p.add_argument("--baseline-checkpoint")
    p.add_argument("--dump-samples", type=int, default=10,
                   help="write the candidate sets of the first N items")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="MPJPE / PA-MPJPE report for prediction files")
    _common(p)
    p.add_argument("--predictions", nargs="*", help="pred_<method>.poseset files")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="error against number of samples")
    _common(p)
    p.add_argument("--baseline-checkpoint")
    p.add_argument("--k-list", type=_ints, default=[1, 5, 10, 50, 200])
    p.add_argument("--variances", type=_floats, default=list(PAPER_VARIANCES))
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("tune-temp", help="cross-validate the softmax temperature")
    _common(p)
    p.add_argument("--grid", type=_floats, default=list(DEFAULT_T_GRID))
    p.set_defaults(func=cmd_tune_temperature)
    return parser, sub.choices


def read_config(path):
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError("expected key=value", lineno, path)
            key, value = line.split("=", 1)
            values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def _apply_config(subparser, values, path):
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, raw in values.items():
        if key in ("config", "help") or key not in actions:
            raise ParseError(f"unknown config key {key!r}", None, path)
        act = actions[key]
        if isinstance(act, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ParseError(f"{key} must be true or false", None, path)
            defaults[key] = raw.lower() in ("true", "1", "yes")
        elif act.nargs in ("*", "+"):
            defaults[key] = raw.split()
        else:
            try:
                defaults[key] = act.type(raw) if act.type else raw
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ParseError(f"bad value for {key}: {exc}", None, path) from None
            if act.choices and defaults[key] not in act.choices:
                raise ParseError(f"{key} must be one of {sorted(act.choices)}", None, path)
    subparser.set_defaults(**defaults)


def parse_args(argv=None):
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        _apply_config(subparsers[args.command], read_config(args.config), args.config)
        args = parser.parse_args(argv)
    return args


def _require(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise ValueError(f"--{n.replace('_', '-')} is required for '{args.command}'")


def _out(args, name):
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# --- subcommands ----------------------------------------------------------


def cmd_synth(args):
    cfg = SynthConfig(seed=args.seed, pose_count=args.num_poses,
                      mirror_fraction=args.mirror_fraction,
                      camera_distance=args.camera_distance, rotations=tuple(args.rotations),
                      epsilon_mm=args.epsilon_mm)
    cam = CameraIntrinsics(tuple(args.focal), tuple(args.principal))
    rng = RngStream(args.seed)
    synth = generate_synthetic(cfg, rng.child("synth"))
    records = build_dataset(synth, cam, cfg)
    train_set, rest = split(records, args.train_fraction, rng.child("split"))
    val_set, test_set = split(rest, 0.5, rng.child("split-holdout"))
    for name, recs in (("train", train_set), ("val", val_set), ("test", test_set)):
        write_dataset(recs, _out(args, f"{name}.poseset"))
    print(f"wrote {len(train_set)} train / {len(val_set)} val / {len(test_set)} test records "
          f"to {args.out_dir}")
    return 0


def _config_from_args(args):
    base = CvaeConfig.desk() if args.preset == "desk" else CvaeConfig()
    return base.with_overrides(
        epochs=args.epochs, batch_size=args.batch_size, base_lr=args.lr,
        latent_dim=args.latent_dim, hidden_dim=args.hidden_dim, blocks_per_net=args.blocks,
        dropout=args.dropout, k_train=args.k_train, lambda1=args.lambda1,
        lambda2=args.lambda2, alpha=args.alpha, k_test=args.k_test,
    )


def cmd_train(args):
    _require(args, "dataset")
    records = read_dataset(args.dataset, epsilon=args.epsilon_mm)
    pose2d, pose3d = stack_records(records)
    cfg = _config_from_args(args)
    rng = RngStream(args.seed)
    model = build_model(args.model, cfg, pose2d, pose3d, rng.child("init"))
    fit = train if args.model == "cvae" else train_baseline
    on_epoch = (lambda row: log.info("epoch %d loss %.4f", row["epoch"], row["loss"]))
    model, history = fit(model, pose2d, pose3d, rng.child("train"), on_epoch=on_epoch)
    ckpt = args.checkpoint or _out(args, f"{args.model}.ckpt")
    save_model(ckpt, model)
    keys = list(history[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    for row in history:
        w.writerow([row[k] if k == "epoch" else f"{row[k]:.9g}" for k in keys])
    _write_text(_out(args, f"{args.model}_loss.csv"), buf.getvalue())
    plotting.plot_loss_curve(history, _out(args, f"{args.model}_loss.svg"),
                             keys=[k for k in keys if k not in ("epoch", "lr")])
    print(f"trained {args.model} for {len(history)} epochs, final loss "
          f"{history[-1]['loss']:.4f}; checkpoint {ckpt}")
    return 0


def _predicted_references(args, records, refs_gt, rng):
    if args.ordinal_source == "gt":
        return refs_gt
    if args.ordinal_source == "noisy":
        return noisy_references(refs_gt, [r.item_id for r in records], args.ordinal_accuracy,
                                rng.child("noisy-ordinals"))
    _require(args, "ordinals_file")
    table = read_ordinal_file(args.ordinals_file, args.epsilon_mm)
    missing = [r.item_id for r in records if r.item_id not in table]
    if missing:
        raise ValueError(f"{len(missing)} item(s) lack predicted ordinals, e.g. {missing[0]}")
    return [table[r.item_id] for r in records]


def _load_cvae(args):
    _require(args, "checkpoint", "dataset")
    model = load_model(args.checkpoint)
    if model.kind != "cvae":
        raise ValueError(f"{args.checkpoint} holds a {model.kind} model, expected cvae")
    records = read_dataset(args.dataset, epsilon=args.epsilon_mm)
    if not records:
        raise ValueError(f"{args.dataset} has no records")
    return model, records


def _load_baseline(path):
    model = load_model(path)
    if model.kind != "baseline":
        raise ValueError(f"{path} holds a {model.kind} model, expected baseline")
    return model


def cmd_infer(args):
    model, records = _load_cvae(args)
    rng = RngStream(args.seed)
    gts = ground_truth_poses(records)
    cands = draw_candidates(model, records, args.k_test, rng.child("samples"))
    refs_gt = gt_references(records, args.epsilon_mm)
    refs_pred = _predicted_references(args, records, refs_gt, rng)
    preds = predict_methods(cands, gts, refs_gt, refs_pred, args.temperature_gt, args.temperature)
    if args.baseline_checkpoint:
        preds["baseline"] = baseline_regress(_load_baseline(args.baseline_checkpoint),
                                             np.stack([r.pose2d for r in records]))
    for method, poses in preds.items():
        out = [DatasetRecord(r.item_id, r.action, p, r.pose2d) for r, p in zip(records, poses)]
        write_dataset(out, _out(args, f"pred_{method}.poseset"))
    n_dump = min(args.dump_samples, len(records))
    if n_dump:
        os.makedirs(_out(args, "samples"), exist_ok=True)
    for r, c in zip(records[:n_dump], cands[:n_dump]):
        write_poseset(_out(args, os.path.join("samples", f"{r.item_id}.poseset")), c,
                      POSE3D_ROOTCENTERED)
    if args.k_test >= 2:
        spread = np.stack([diversity_stats(c)[0] for c in cands]).mean(axis=0)
        rows = "".join(f"{name},{s:.6f}\n" for name, s in zip(H36M_SKELETON.joint_names, spread))
        _write_text(_out(args, "diversity.csv"), "joint,std_mm\n" + rows)
        plotting.plot_diversity(H36M_SKELETON.joint_names, spread, _out(args, "diversity.svg"))
    print(f"predicted {len(records)} items with methods: {', '.join(preds)}")
    return 0


def cmd_eval(args):
    _require(args, "dataset")
    records = read_dataset(args.dataset, epsilon=args.epsilon_mm)
    gt_by_id = {r.item_id: r for r in records}
    paths = args.predictions
    if not paths:
        paths = sorted(os.path.join(args.out_dir, f) for f in os.listdir(args.out_dir)
                       if f.startswith("pred_") and f.endswith(".poseset"))
    if not paths:
        raise ValueError("no prediction files given or found in --out-dir")
    reports = []
    for path in paths:
        method = os.path.basename(path)
        method = method[len("pred_"):] if method.startswith("pred_") else method
        method = method.rsplit(".", 1)[0]
        preds = read_dataset(path, epsilon=args.epsilon_mm)
        missing = [p.item_id for p in preds if p.item_id not in gt_by_id]
        if missing:
            raise ValueError(f"{path}: unknown item id {missing[0]}")
        ids = [p.item_id for p in preds]
        pred3d = ground_truth_poses(preds)
        gt3d = ground_truth_poses([gt_by_id[i] for i in ids])
        actions = [gt_by_id[i].action for i in ids]
        reports.append(evaluate(ids, actions, pred3d, gt3d, method, "mpjpe"))
        reports.append(evaluate(ids, actions, pred3d, gt3d, method, "pa-mpjpe", args.with_scale))
    _write_text(_out(args, "eval.csv"), reports_to_csv(reports))
    print(format_table(reports))
    return 0


def cmd_ablate(args):
    model, records = _load_cvae(args)
    rng = RngStream(args.seed)
    ks = sorted(set(args.k_list))
    gts = ground_truth_poses(records)
    cands = draw_candidates(model, records, ks[-1], rng.child("samples"))
    refs_gt = gt_references(records, args.epsilon_mm)
    refs_pred = _predicted_references(args, records, refs_gt, rng)
    extra = {}
    if args.baseline_checkpoint:
        base = baseline_regress(_load_baseline(args.baseline_checkpoint),
                                np.stack([r.pose2d for r in records]))
        for var in args.variances:
            stream = rng.child("baseline-sampling").child(repr(float(var)))
            extra[f"baseline-var{var:g}"] = np.stack([
                baseline_gaussian_sample(b, var, ks[-1], stream.child(r.item_id)).candidates
                for b, r in zip(base, records)
            ])
    curve = ablation_curve(
        cands, gts, ks,
        references={"ordinal-gt": refs_gt, "ordinal-pred": refs_pred},
        temperatures={"ordinal-gt": args.temperature_gt, "ordinal-pred": args.temperature},
        extra_sets=extra,
    )
    _write_text(_out(args, "ablation.csv"), curve.to_csv())
    plotting.plot_ablation(curve, _out(args, "ablation_methods.svg"),
                           methods=["oracle", "ordinal-gt", "ordinal-pred", "mean"])
    if extra:
        plotting.plot_ablation(curve, _out(args, "ablation_sampling.svg"),
                               methods=["oracle"] + list(extra),
                               title="Generative vs. baseline sampling (oracle)")
    print(curve.to_csv(), end="")
    return 0


def cmd_tune_temperature(args):
    model, records = _load_cvae(args)
    rng = RngStream(args.seed)
    gts = ground_truth_poses(records)
    cands = draw_candidates(model, records, args.k_test, rng.child("samples"))
    refs_gt = gt_references(records, args.epsilon_mm)
    refs_pred = _predicted_references(args, records, refs_gt, rng)
    grid = list(args.grid)
    best_gt, err_gt = tune_temperature(cands, gts, refs_gt, grid)
    best_pred, err_pred = tune_temperature(cands, gts, refs_pred, grid)
    lines = ["temperature,gt_error_mm,pred_error_mm"]
    lines += [f"{t:g},{a:.6f},{b:.6f}" for t, a, b in zip(grid, err_gt, err_pred)]
    _write_text(_out(args, "temperature_sweep.csv"), "\n".join(lines) + "\n")
    print(f"best temperature: gt={best_gt:g} ({min(err_gt):.2f} mm), "
          f"{args.ordinal_source}={best_pred:g} ({min(err_pred):.2f} mm)")
    return 0


def main(argv=None):
    try:
        args = parse_args(argv)
    except (PoseliftError, OSError) as exc:
        print(f"poselift: error: bad config: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (PoseliftError, OSError, ValueError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"poselift {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
