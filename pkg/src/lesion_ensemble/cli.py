"""Command-line entry point: ``lesion-ensemble <subcommand> ...``.

Every subcommand that writes files also writes a provenance record (config
echo, seeds, connectivity, HD95 convention) next to its output. A JSON file
passed with ``--config`` overrides the corresponding command-line values.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
import numpy as np

from . import __version__
from .activation import ActivationKind
from .components import DEFAULT_CONNECTIVITY, SIZE_THRESHOLD, label_components, split_pred, split_train
from .ensemble import (
    DEFAULT_LEARNING_RATE,
    OpinionSet,
    TrainConfig,
    fuse,
    load_model,
    majority_vote,
    save_model,
    train_ensemble,
)
from .errors import LesionEnsembleError
from .experiment import (
    XvalConfig,
    aggregate,
    format_report,
    group_sets,
    run_xval,
    training_summary,
)
from .metrics import HD95_CONVENTION, evaluate
from .patching import (
    DEFAULT_SPECS,
    SCALE_TAGS,
    balance_patches,
    extract_patches,
    lesion_patch_flags,
    read_patch_set,
    stitch,
    write_patch_set,
)
from .phantom import PhantomSpec, generate_suite, read_suite, write_suite
from .volume import Volume3, normalize_intensity, read_v3d, threshold, write_v3d

ARTIFACT = "(artifact default)"
# options that name files; left out of config echoes so reruns into other
# directories produce identical outputs
_PATH_KEYS = {"out", "out_small", "out_large", "table", "json", "config"}


def provenance(args) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",) and k not in _PATH_KEYS}
    return {
        "tool": f"lesion_ensemble {__version__}",
        "command": args.command,
        "config": cfg,
        "connectivity": getattr(args, "connectivity", DEFAULT_CONNECTIVITY),
        "hd95": HD95_CONVENTION,
    }


def write_sidecar(path, args) -> None:
    with open(f"{path}.provenance.json", "w") as fh:
        json.dump(provenance(args), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _opinion_set(paths, gt=None) -> OpinionSet:
    vols = [read_v3d(p) for p in paths]
    return OpinionSet(*vols, gt=read_v3d(gt) if gt else None)


def cmd_phantom(args) -> int:
    spec = PhantomSpec(dims=tuple(args.dims), noise=args.noise, size_threshold=args.size_threshold)
    subjects = generate_suite(args.subjects, args.seed, spec, via_patches=not args.no_patches)
    write_suite(args.out, subjects)
    write_sidecar(os.path.join(args.out, "suite"), args)
    print(f"wrote {len(subjects)} subjects to {args.out}")
    return 0


def cmd_patches(args) -> int:
    image = read_v3d(args.image)
    if args.normalize:
        image = normalize_intensity(image)
    gt = read_v3d(args.gt) if args.gt else None
    tags = args.scales.split(",")
    for tag in tags:
        spec = DEFAULT_SPECS[SCALE_TAGS.index(tag)]
        patches = extract_patches(image, spec)
        extra = None
        if gt is not None:
            flags = lesion_patch_flags(patches, gt)
            keep = set(balance_patches(patches, gt, args.seed))
            extra = [{"lesion": bool(f), "selected": i in keep} for i, f in enumerate(flags)]
            if args.balanced_only:
                patches = [p for i, p in enumerate(patches) if i in keep]
                extra = [e for i, e in enumerate(extra) if i in keep]
        out = os.path.join(args.out, tag)
        write_patch_set(out, patches, spec, image, tag, extra)
        print(f"{tag}: {len(patches)} patches -> {out}")
    write_sidecar(os.path.join(args.out, "patches"), args)
    return 0


def cmd_stitch(args) -> int:
    patches, records = read_patch_set(args.patches)
    if not records:
        raise LesionEnsembleError("patch manifest is empty")
    dims = tuple(args.dims) if args.dims else tuple(records[0]["parent_dims"])
    spacing = tuple(records[0].get("spacing", (1.0, 1.0, 1.0)))
    out = stitch(patches, dims, spacing)
    write_v3d(out, args.out)
    write_sidecar(args.out, args)
    print(f"stitched {len(patches)} patches into {args.out}")
    return 0


def cmd_split(args) -> int:
    pred = read_v3d(args.pred)
    if args.gt:
        small, large = split_train(pred, read_v3d(args.gt), args.size_threshold, args.connectivity)
    else:
        small, large = split_pred(pred, args.size_threshold, args.connectivity)
    write_v3d(small, args.out_small)
    write_v3d(large, args.out_large)
    write_sidecar(args.out_small, args)
    if args.table:
        label_components(threshold(pred), args.connectivity, args.size_threshold).write_table(args.table)
    mode = "train" if args.gt else "test"
    print(f"split ({mode} mode): small {int(np.count_nonzero(small.data))} voxels, "
          f"large {int(np.count_nonzero(large.data))} voxels")
    return 0


def cmd_fuse_train(args) -> int:
    subjects = read_suite(args.suite)
    if args.subject_ids:
        wanted = {int(i) for i in args.subject_ids.split(",")}
        subjects = [s for s in subjects if s.id in wanted]
    if args.group == "all":
        data = [OpinionSet(*s.opinion_list(), gt=s.gt) for s in subjects]
    else:
        k = 0 if args.group == "small" else 1
        data = [group_sets(s, True, args.size_threshold, args.connectivity)[k] for s in subjects]
    cfg = TrainConfig(args.epochs, args.lr, args.seed)
    model, history = train_ensemble(data, cfg, args.activation)
    save_model(args.out, model, cfg, history)
    write_sidecar(args.out, args)
    print(f"weights {list(model.weights)}; loss {history[0]:.6f} -> {history[-1]:.6f}")
    return 0


def cmd_fuse_apply(args) -> int:
    model = load_model(args.model)
    out = fuse(_opinion_set(args.opinions), model)
    if args.binary:
        out = threshold(out)
    write_v3d(out, args.out)
    write_sidecar(args.out, args)
    return 0


def cmd_vote(args) -> int:
    out = majority_vote(_opinion_set(args.opinions))
    write_v3d(out, args.out)
    write_sidecar(args.out, args)
    return 0


def cmd_eval(args) -> int:
    pred = read_v3d(args.pred)
    gt = read_v3d(args.gt)
    rep = evaluate(threshold(pred), gt, gt.spacing, args.connectivity)
    for name, value in zip(("Dice", "HD95_mm", "AVD_pct", "Detection_pct", "F1"), rep.as_tuple()):
        print(f"{name}: {value:.4f}")
    if rep.flags:
        print(f"flags: {', '.join(rep.flags)}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"provenance": provenance(args), **rep.to_dict()}, fh, sort_keys=True)
            fh.write("\n")
    return 0


def _write_jsonl(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def cmd_xval(args) -> int:
    phantom = PhantomSpec(dims=tuple(args.dims), size_threshold=args.size_threshold)
    cfg = XvalConfig(n_subjects=args.subjects, repeats=args.repeats, train_fraction=args.train_fraction,
                     seed=args.seed, size_threshold=args.size_threshold, connectivity=args.connectivity,
                     epochs=args.epochs, learning_rate=args.lr, phantom=phantom,
                     via_patches=not args.no_patches)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        records, training = run_xval(cfg)
    rows = aggregate(records)
    os.makedirs(args.out, exist_ok=True)
    config = cfg.to_dict()
    extra = {"training": training_summary(training),
             "group_overlap_voxels": training["group_overlap_voxels"]}
    with open(os.path.join(args.out, "report.txt"), "w") as fh:
        fh.write(format_report(config, rows, extra))
    _write_jsonl(os.path.join(args.out, "records.jsonl"), records)
    _write_jsonl(os.path.join(args.out, "summary.jsonl"), rows)
    _write_jsonl(os.path.join(args.out, "training.jsonl"), training["models"])
    with open(os.path.join(args.out, "config.json"), "w") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(open(os.path.join(args.out, "report.txt")).read(), end="")
    return 0


def cmd_report(args) -> int:
    records = []
    for path in args.records:
        with open(path) as fh:
            records.extend(json.loads(line) for line in fh if line.strip())
    rows = aggregate(records)
    text = format_report({"sources": [os.path.basename(p) for p in args.records],
                          "connectivity": args.connectivity}, rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lesion-ensemble",
                                description="Multi-scale opinion fusion for lesion segmentation.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--config", help="JSON file whose keys override command-line values")
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def common(sp, threshold_opts=True):
        if threshold_opts:
            sp.add_argument("--size-threshold", type=int, default=SIZE_THRESHOLD,
                            help="voxel count above which a lesion is large (default 1000)")
            sp.add_argument("--connectivity", type=int, choices=(6, 18, 26), default=DEFAULT_CONNECTIVITY,
                            help=f"component connectivity (default 26) {ARTIFACT}")

    sp = sub.add_parser("phantom", help="generate a synthetic suite with oracle opinions")
    sp.add_argument("--out", required=True)
    sp.add_argument("--subjects", type=int, default=20)
    sp.add_argument("--seed", type=int, default=7, help=f"master seed {ARTIFACT}")
    sp.add_argument("--dims", type=int, nargs=3, default=list(PhantomSpec().dims), help=f"{ARTIFACT}")
    sp.add_argument("--noise", type=float, default=PhantomSpec().noise, help=f"{ARTIFACT}")
    sp.add_argument("--no-patches", action="store_true",
                    help="skip routing oracle opinions through patch extraction and stitching")
    sp.add_argument("--size-threshold", type=int, default=SIZE_THRESHOLD)
    sp.set_defaults(func=cmd_phantom)

    sp = sub.add_parser("patches", help="extract sliding-window patches at the three scales")
    sp.add_argument("--image", required=True)
    sp.add_argument("--gt", help="ground truth; enables lesion/empty balancing")
    sp.add_argument("--out", required=True)
    sp.add_argument("--scales", default=",".join(SCALE_TAGS),
                    help="comma list from fine (6x10x6), mid (12x20x12), coarse (24x40x24)")
    sp.add_argument("--seed", type=int, default=0, help=f"balancing seed {ARTIFACT}")
    sp.add_argument("--normalize", action="store_true", help="rescale intensities to [0, 1] first")
    sp.add_argument("--balanced-only", action="store_true", help="write only the balanced selection")
    sp.set_defaults(func=cmd_patches)

    sp = sub.add_parser("stitch", help="average a patch directory back into one volume")
    sp.add_argument("--patches", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--dims", type=int, nargs=3)
    sp.set_defaults(func=cmd_stitch)

    sp = sub.add_parser("split", help="separate a prediction into small and large lesion maps")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gt", help="training mode: categorize by the matching ground-truth lesion")
    sp.add_argument("--out-small", required=True)
    sp.add_argument("--out-large", required=True)
    sp.add_argument("--table", help="write the component table as JSON lines")
    common(sp)
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("fuse-train", help="train an ensemble model on a phantom suite")
    sp.add_argument("--suite", required=True)
    sp.add_argument("--subject-ids", help="comma-separated subject ids (default all)")
    sp.add_argument("--group", choices=("all", "small", "large"), default="all")
    sp.add_argument("--activation", default="SinAct", choices=[k.value for k in ActivationKind if k.value != "Step"])
    sp.add_argument("--epochs", type=int, default=10)
    sp.add_argument("--lr", type=float, default=DEFAULT_LEARNING_RATE, help=f"{ARTIFACT}")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_fuse_train)

    sp = sub.add_parser("fuse-apply", help="fuse three opinions with a trained model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--opinions", nargs=3, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--binary", action="store_true", help="threshold the fused map at 0.5")
    sp.set_defaults(func=cmd_fuse_apply)

    sp = sub.add_parser("vote", help="majority vote of three opinions")
    sp.add_argument("--opinions", nargs=3, required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_vote)

    sp = sub.add_parser("eval", help="five-metric evaluation of a prediction")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--json", help="also write the metrics as JSON")
    common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("xval", help="Monte Carlo cross-validation on phantoms")
    sp.add_argument("--subjects", type=int, default=20)
    sp.add_argument("--repeats", type=int, default=5)
    sp.add_argument("--train-fraction", type=float, default=0.9, help=f"{ARTIFACT}")
    sp.add_argument("--seed", type=int, default=7, help=f"{ARTIFACT}")
    sp.add_argument("--epochs", type=int, default=10)
    sp.add_argument("--lr", type=float, default=DEFAULT_LEARNING_RATE, help=f"{ARTIFACT}")
    sp.add_argument("--dims", type=int, nargs=3, default=list(PhantomSpec().dims), help=f"{ARTIFACT}")
    sp.add_argument("--no-patches", action="store_true")
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_xval)

    sp = sub.add_parser("report", help="aggregate metric records into tables")
    sp.add_argument("--records", nargs="+", required=True)
    sp.add_argument("--out")
    sp.add_argument("--connectivity", type=int, default=DEFAULT_CONNECTIVITY)
    sp.set_defaults(func=cmd_report)
    for sp in sub.choices.values():
        sp.add_argument("--config", default=argparse.SUPPRESS,
                        help="JSON file whose keys override command-line values")
    return p


def _apply_config(args) -> None:
    if not args.config:
        return
    with open(args.config) as fh:
        overrides = json.load(fh)
    for key, value in overrides.items():
        key = key.replace("-", "_")
        if not hasattr(args, key):
            raise LesionEnsembleError(f"unknown config key {key!r} for {args.command}")
        setattr(args, key, value)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args)
        return args.func(args)
    except LesionEnsembleError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
