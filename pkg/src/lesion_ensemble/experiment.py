"""Monte Carlo cross-validation of single opinions and ensembles on phantoms.

``run_xval`` produces per-subject metric records; ``aggregate`` folds them
into the all/small/large tables; ``format_report`` renders the tables with
a provenance header.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .components import DEFAULT_CONNECTIVITY, SIZE_THRESHOLD, split_mask, split_pred, split_train
from .ensemble import DEFAULT_LEARNING_RATE, FusionOverlapWarning, OpinionSet, TrainConfig, fuse, majority_vote, merge_groups, train_ensemble
from .metrics import HD95_CONVENTION, evaluate
from .patching import DEFAULT_SCALES, SCALE_TAGS
from .phantom import DEFAULT_ORACLES, PhantomSpec, generate_suite, mc_split
from .volume import threshold

TABLES = ("all", "small", "large")
TABLE_TITLES = {"all": "All lesions", "small": "Small lesions", "large": "Large lesions"}
METRIC_KEYS = ("dice", "hd95_mm", "avd_pct", "detection_pct", "f1")
ENSEMBLES = ("Vote", "Sigmoid", "SinAct")

DISCLAIMER = ("Synthetic phantom run. These numbers are NOT comparable to results on real "
              "MR scans; only the relative ordering of rows is meaningful.")


@dataclass
class XvalConfig:
    n_subjects: int = 20
    repeats: int = 5
    train_fraction: float = 0.9
    seed: int = 7
    size_threshold: int = SIZE_THRESHOLD
    connectivity: int = DEFAULT_CONNECTIVITY
    epochs: int = 10
    learning_rate: float = DEFAULT_LEARNING_RATE
    phantom: PhantomSpec = field(default_factory=PhantomSpec)
    via_patches: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d["oracles"] = {t: asdict(o) for t, o in DEFAULT_ORACLES.items()}
        return d


# values that the method prescribes; everything else in XvalConfig is an artifact default
METHOD_CONSTANTS = {
    "scales": [list(s) for s in DEFAULT_SCALES],
    "stride": "half patch size",
    "size_threshold": SIZE_THRESHOLD,
    "initial_weights": "1/3",
    "epochs": 10,
    "binarization_threshold": 0.5,
    "activation": "SinAct",
}
ARTIFACT_DEFAULTS = ("learning_rate", "optimizer (full-batch gradient descent)", "connectivity",
                     "train_fraction", "phantom", "oracles", "sigmoid offset -0.5")


def group_sets(subject, train: bool, size_threshold: int = SIZE_THRESHOLD,
               connectivity: int = DEFAULT_CONNECTIVITY):
    """Small- and large-group OpinionSets of one subject.

    Training opinions are split by their matching ground-truth lesion, test
    opinions by their own component size. Group targets are the split of gt.
    """
    gt = subject.gt
    gt_small, gt_large = split_mask(gt, size_threshold, connectivity)
    smalls, larges = [], []
    for op in subject.opinion_list():
        if train:
            s, l = split_train(op, gt, size_threshold, connectivity)
        else:
            s, l = split_pred(op, size_threshold, connectivity)
        smalls.append(s)
        larges.append(l)
    return OpinionSet(*smalls, gt=gt_small), OpinionSet(*larges, gt=gt_large)


def _record(table, source, ensemble, repeat, subject, report) -> dict:
    rec = {"table": table, "source": source, "ensemble": ensemble, "repeat": repeat, "subject": subject}
    rec.update({k: (None if math.isnan(v) else v) for k, v in zip(METRIC_KEYS, report.as_tuple())})
    rec["flags"] = report.flags
    return rec


def run_xval(cfg: XvalConfig, subjects=None):
    """Run the full cross-validation.

    Returns ``(records, training)`` where ``records`` holds one metric record
    per (repeat, test subject, table, row) and ``training`` one entry per
    trained model with its weights and loss history.
    """
    if subjects is None:
        subjects = generate_suite(cfg.n_subjects, cfg.seed, cfg.phantom, via_patches=cfg.via_patches)
    by_id = {s.id: s for s in subjects}
    cache = {}

    def cached(sid, train):
        if (sid, train) not in cache:
            cache[sid, train] = group_sets(by_id[sid], train, cfg.size_threshold, cfg.connectivity)
        return cache[sid, train]

    ids = sorted(by_id)
    splits = mc_split(len(ids), cfg.train_fraction, cfg.repeats, cfg.seed)
    train_cfg = TrainConfig(cfg.epochs, cfg.learning_rate, cfg.seed)

    records, training = [], []
    overlap_voxels = 0
    for rep, (train_idx, test_idx) in enumerate(splits):
        train_sets = [cached(ids[i], True) for i in train_idx]
        models = {}
        for act in ("Sigmoid", "SinAct"):
            for g, group in enumerate(("small", "large")):
                model, hist = train_ensemble([ts[g] for ts in train_sets], train_cfg, act)
                models[act, group] = model
                training.append({"repeat": rep, "activation": act, "group": group,
                                 "weights": list(model.weights), "offset": model.offset,
                                 "loss_history": hist})

        for i in test_idx:
            subj = by_id[ids[i]]
            spacing = subj.gt.spacing
            small_set, large_set = cached(subj.id, False)
            gts = {"all": subj.gt, "small": small_set.gt, "large": large_set.gt}

            def add(source, ensemble, preds):
                for table in TABLES:
                    rep_ = evaluate(preds[table], gts[table], spacing, cfg.connectivity)
                    records.append(_record(table, source, ensemble, rep, subj.id, rep_))

            for k, tag in enumerate(SCALE_TAGS):
                op = subj.opinion_list()[k]
                preds = {"all": threshold(op),
                         "small": threshold(small_set.stack()[k]),
                         "large": threshold(large_set.stack()[k])}
                add(tag, "", preds)

            for ens in ENSEMBLES:
                if ens == "Vote":
                    ps, pl = majority_vote(small_set), majority_vote(large_set)
                else:
                    ps = fuse(small_set, models[ens, "small"])
                    pl = fuse(large_set, models[ens, "large"])
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always", FusionOverlapWarning)
                    merged = merge_groups(ps, pl)
                if caught:
                    overlap_voxels += int(np.count_nonzero((np.asarray(ps) >= 0.5) & (np.asarray(pl) >= 0.5)))
                add("3 opinions", ens, {"all": merged, "small": threshold(ps), "large": threshold(pl)})

    return records, {"models": training, "group_overlap_voxels": overlap_voxels}


def row_order():
    rows = [(tag, "") for tag in SCALE_TAGS]
    rows += [("3 opinions", e) for e in ENSEMBLES]
    return rows


def aggregate(records) -> list:
    """Mean of each metric per (table, source, ensemble); missing values are skipped."""
    groups = {}
    for rec in records:
        groups.setdefault((rec["table"], rec["source"], rec["ensemble"]), []).append(rec)
    rows = []
    known = row_order()
    extra = sorted(k for k in {(s, e) for _, s, e in groups} if k not in known)
    for table in TABLES:
        for source, ens in known + extra:
            recs = groups.get((table, source, ens))
            if not recs:
                continue
            row = {"table": table, "source": source, "ensemble": ens, "n": len(recs)}
            for key in METRIC_KEYS:
                vals = [r[key] for r in recs if r[key] is not None]
                row[key] = float(np.mean(vals)) if vals else None
                row[f"n_{key}"] = len(vals)
            rows.append(row)
    return rows


def _source_label(source: str) -> str:
    if source in SCALE_TAGS:
        scale = DEFAULT_SCALES[SCALE_TAGS.index(source)]
        return f"{source} {'x'.join(map(str, scale))}"
    return source


def _fmt(v, scale=1.0) -> str:
    return "n/a" if v is None else f"{v * scale:.2f}"


def format_tables(rows) -> str:
    header = ("Opinion", "Ensemble", "Dice", "HD", "AVD", "Detection", "F1")
    out = []
    for table in TABLES:
        body = [(_source_label(r["source"]), r["ensemble"], _fmt(r["dice"], 100), _fmt(r["hd95_mm"]),
                 _fmt(r["avd_pct"]), _fmt(r["detection_pct"]), _fmt(r["f1"], 100))
                for r in rows if r["table"] == table]
        if not body:
            continue
        widths = [max(len(str(c)) for c in col) for col in zip(header, *body)]
        line = lambda cells: " | ".join(str(c).rjust(w) if i > 1 else str(c).ljust(w)
                                        for i, (c, w) in enumerate(zip(cells, widths)))
        out.append(f"{TABLE_TITLES[table]}")
        out.append(line(header))
        out.append("-+-".join("-" * w for w in widths))
        out.extend(line(b) for b in body)
        out.append("")
    return "\n".join(out)


def provenance_header(config: dict, extra: dict = None) -> str:
    lines = [
        f"lesion_ensemble {__version__} cross-validation report",
        f"config: {json.dumps(config, sort_keys=True)}",
        f"method constants: {json.dumps(METHOD_CONSTANTS, sort_keys=True)}",
        f"artifact defaults (not prescribed by the method): {', '.join(ARTIFACT_DEFAULTS)}",
        f"connectivity: {config.get('connectivity', DEFAULT_CONNECTIVITY)}",
        f"hd95: {HD95_CONVENTION}",
        "units: Dice and F1 in %, HD in mm, AVD and Detection in %",
        DISCLAIMER,
    ]
    for k, v in (extra or {}).items():
        lines.append(f"{k}: {json.dumps(v, sort_keys=True)}")
    return "\n".join("# " + l for l in lines) + "\n"


def format_report(config: dict, rows, extra: dict = None) -> str:
    return provenance_header(config, extra) + "\n" + format_tables(rows)


def training_summary(training: dict) -> dict:
    """Mean first- and last-epoch loss per activation and group."""
    out = {}
    for m in training["models"]:
        key = f"{m['activation']}/{m['group']}"
        out.setdefault(key, []).append((m["loss_history"][0], m["loss_history"][-1]))
    return {k: {"initial_loss": float(np.mean([a for a, _ in v])), "final_loss": float(np.mean([b for _, b in v]))}
            for k, v in sorted(out.items())}
