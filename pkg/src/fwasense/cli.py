"""Command-line pipeline: dataset generation, training, evaluation,
selection analysis, and sensing-region export.

Subcommands: gen, train-detect, train-loc-individual, train-loc-coop,
eval, region-map, dump-ad. Every command takes one --seed; all internal
randomness is derived from it through named substreams. --threads (or
FWASENSE_THREADS) pins the BLAS thread count before numpy loads, so
replays with the same seed and thread count are byte-identical.

Exit codes: 0 success, 2 usage, 3 data/artifact error, 4 divergence.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import os
import sys

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4

SIGMA_GRID = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3)


def _pin_threads(argv: list[str]) -> None:
    """Set BLAS thread env vars before numpy is imported."""
    threads = os.environ.get("FWASENSE_THREADS", "1")
    for i, arg in enumerate(argv):
        if arg == "--threads" and i + 1 < len(argv):
            threads = argv[i + 1]
        elif arg.startswith("--threads="):
            threads = arg.split("=", 1)[1]
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, threads)


def _json_dump(path: str, obj: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(path: str, argv: list[str], scenario, seed: int,
                    datasets: dict[str, str], artifacts: dict[str, str],
                    metrics: dict | None = None, extra: dict | None = None) -> None:
    from .channel import file_sha256

    manifest = {
        "command": argv,
        "scenario_hash": scenario.hash(),
        "seed": seed,
        "datasets": {
            name: {"path": p, "sha256": file_sha256(p)} for name, p in datasets.items()
        },
        "artifacts": {
            name: {"path": p, "sha256": file_sha256(p)} for name, p in artifacts.items()
        },
        "metrics": metrics,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "complete": True,
    }
    if extra:
        manifest.update(extra)
    _json_dump(path, manifest)


def _write_curve(path: str, history: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "lr"])
        for row in history:
            writer.writerow(
                [row["epoch"], f"{row['train_loss']:.9g}", f"{row['val_loss']:.9g}", f"{row['lr']:.9g}"]
            )


def _resume_done(args) -> bool:
    if not getattr(args, "resume", False):
        return False
    manifest_path = args.out + ".manifest.json"
    if os.path.exists(args.out) and os.path.exists(manifest_path):
        with open(manifest_path, "r", encoding="utf-8") as fh:
            if json.load(fh).get("complete"):
                print(f"{args.out}: already trained (manifest complete); nothing to do")
                return True
    return False


def _parse_pair(text: str, scenario):
    from .scenario import PairId, ScenarioError

    try:
        m, n = (int(x) for x in text.split(":"))
    except ValueError as exc:
        raise ScenarioError(f"--pair must look like m:n, got {text!r}") from exc
    if not (1 <= m <= scenario.n_bs and 1 <= n <= scenario.n_cpe):
        raise ScenarioError(
            f"pair {m}:{n} outside the {scenario.n_bs}x{scenario.n_cpe} grid"
        )
    return PairId.of(m, n, scenario.n_cpe)


# -- gen ----------------------------------------------------------------------


def cmd_gen(args, argv: list[str]) -> int:
    from .channel import generate_dataset
    from .rng import derive_seed
    from .scenario import load_scenario

    scenario = load_scenario(args.config)
    if args.train + args.val + args.test == 0:
        print("error: all split sizes are zero", file=sys.stderr)
        return EXIT_DATA
    os.makedirs(args.out, exist_ok=True)
    datasets = {}
    for split, per_class in (("train", args.train), ("val", args.val), ("test", args.test)):
        if per_class == 0:
            continue
        path = os.path.join(args.out, f"{split}.bin")
        generate_dataset(scenario, per_class, per_class, derive_seed(args.seed, split), path)
        datasets[split] = path
        print(f"wrote {path}: {per_class} with-UAV + {per_class} without")
    _write_manifest(
        os.path.join(args.out, "gen.manifest.json"), argv, scenario, args.seed, datasets, {}
    )
    return EXIT_OK


# -- training commands --------------------------------------------------------


def _load_split(path: str, scenario):
    from .dsp import preprocess_dataset

    return preprocess_dataset(path, scenario.delay_keep)


def cmd_train_detect(args, argv: list[str]) -> int:
    from .detection import (
        DetectionSplit,
        DetectorConfig,
        DetectorHyper,
        save_detector,
        train_detector,
    )
    from .scenario import load_scenario

    if _resume_done(args):
        return EXIT_OK
    scenario = load_scenario(args.config)
    train_pp = _load_split(args.train, scenario)
    val_pp = _load_split(args.val, scenario)
    cfg = DetectorConfig(
        map_shape=(scenario.n_rx, scenario.n_tx, scenario.delay_keep),
        n_bs=scenario.n_bs,
        n_cpe=scenario.n_cpe,
        embed_dim=args.embed_dim,
        conv_channels=tuple(int(c) for c in args.channels.split(",")),
    )
    hyper = DetectorHyper(
        lr=args.lr, batch_size=args.batch, epochs=args.epochs,
        early_stop_patience=args.patience, model=cfg,
    )
    print(f"training detector: lr={hyper.lr} batch={hyper.batch_size} epochs<={hyper.epochs}")
    model, history = train_detector(
        DetectionSplit.from_preprocessed(train_pp),
        DetectionSplit.from_preprocessed(val_pp),
        hyper,
        args.seed,
        log_fn=lambda h: print(
            f"  epoch {h['epoch']}: train {h['train_loss']:.4f} val {h['val_loss']:.4f}"
        ),
    )
    save_detector(args.out, model, extra_meta={"seed": args.seed, "hyper": vars(args_hyper(args))})
    _write_curve(args.out + ".curve.csv", history)
    _write_manifest(
        args.out + ".manifest.json", argv, scenario, args.seed,
        {"train": args.train, "val": args.val}, {"checkpoint": args.out},
        metrics={"best_val_loss": min(h["val_loss"] for h in history)},
    )
    print(f"saved {args.out} (best val loss {min(h['val_loss'] for h in history):.4f})")
    return EXIT_OK


def args_hyper(args) -> argparse.Namespace:
    keys = ("lr", "batch", "epochs", "patience")
    return argparse.Namespace(**{k: getattr(args, k) for k in keys if hasattr(args, k)})


def _selections_for_split(detector, split, k: int, sigma_att: float, use_pair_labels: bool):
    """Per-sample selected flat pair ids (attention-guided by default, true
    pair labels with top-1 fallback when requested)."""
    from .detection import batch_reports
    from .selection import SelectionConfig, select_pairs

    reports = batch_reports(detector, split.maps)
    cfg = SelectionConfig(k=k, sigma_att=sigma_att)
    selections = []
    for i, report in enumerate(reports):
        if use_pair_labels:
            flats = [f for f in range(1, split.pair_labels.shape[1] + 1)
                     if split.pair_labels[i, f - 1]]
            if not flats:
                flats = [select_pairs(report, cfg).flat[0]]
            selections.append(flats)
        else:
            selections.append(select_pairs(report, cfg).flat)
    return reports, selections


def _individual_examples(split, selections):
    """(maps, targets) over selected pairs of with-UAV samples."""
    import numpy as np

    maps, targets = [], []
    for i in range(len(split)):
        if split.scene_labels[i] != 1:
            continue
        for flat in selections[i]:
            maps.append(split.maps[i, flat - 1])
            targets.append(split.uav_positions[i])
    return np.stack(maps), np.stack(targets)


def cmd_train_loc_individual(args, argv: list[str]) -> int:
    from .detection import load_detector
    from .localization import LocHyper, LocatorConfig, save_locator, train_individual
    from .scenario import load_scenario

    if _resume_done(args):
        return EXIT_OK
    scenario = load_scenario(args.config)
    detector = load_detector(args.detector)
    train_pp = _load_split(args.train, scenario)
    val_pp = _load_split(args.val, scenario)
    _, sel_train = _selections_for_split(detector, train_pp, args.k, args.sigma_att, args.use_pair_labels)
    _, sel_val = _selections_for_split(detector, val_pp, args.k, args.sigma_att, args.use_pair_labels)
    train_maps, train_targets = _individual_examples(train_pp, sel_train)
    val_maps, val_targets = _individual_examples(val_pp, sel_val)
    cfg = LocatorConfig(
        map_shape=(scenario.n_rx, scenario.n_tx, scenario.delay_keep),
        scale=scenario.uav_xy_range,
        conv_channels=tuple(int(c) for c in args.channels.split(",")),
        feature_tap=args.feature_tap,
    )
    hyper = LocHyper(lr=args.lr, batch_size=args.batch, epochs=args.epochs,
                     early_stop_patience=args.patience)
    print(f"training pair locator on {train_maps.shape[0]} examples")
    model, history = train_individual(
        train_maps, train_targets, val_maps, val_targets, cfg, hyper, args.seed,
        log_fn=lambda h: print(
            f"  epoch {h['epoch']}: train {h['train_loss']:.5f} val {h['val_loss']:.5f}"
        ),
    )
    save_locator(args.out, model, extra_meta={"seed": args.seed})
    _write_curve(args.out + ".curve.csv", history)
    _write_manifest(
        args.out + ".manifest.json", argv, scenario, args.seed,
        {"train": args.train, "val": args.val},
        {"checkpoint": args.out, "detector": args.detector},
        metrics={"best_val_loss": min(h["val_loss"] for h in history)},
    )
    print(f"saved {args.out}")
    return EXIT_OK


def _fusion_dataset(split, selections, locator, variant: str, scale: float):
    """Per-sample (tokens, indexes, target) for fusion training, with-UAV
    samples only."""
    import numpy as np

    from .localization import medium_tokens, soft_tokens

    tokens, indexes, targets = [], [], []
    for i in range(len(split)):
        if split.scene_labels[i] != 1:
            continue
        flats = selections[i]
        maps = split.maps[i, [f - 1 for f in flats]]
        if variant == "medium":
            est, feats = locator.estimate(maps)
            tokens.append(medium_tokens(est, feats, scale))
        else:
            tokens.append(soft_tokens(maps))
        indexes.append(np.array(flats, dtype=np.int64))
        targets.append(split.uav_positions[i])
    return tokens, indexes, np.stack(targets)


def cmd_train_loc_coop(args, argv: list[str]) -> int:
    from .detection import load_detector
    from .localization import (
        FusionConfig,
        LocHyper,
        load_locator,
        save_fusion,
        train_fusion,
    )
    from .scenario import load_scenario

    if _resume_done(args):
        return EXIT_OK
    scenario = load_scenario(args.config)
    detector = load_detector(args.detector)
    locator = load_locator(args.individual) if args.variant == "medium" else None
    train_pp = _load_split(args.train, scenario)
    val_pp = _load_split(args.val, scenario)
    _, sel_train = _selections_for_split(detector, train_pp, args.k, args.sigma_att, args.use_pair_labels)
    _, sel_val = _selections_for_split(detector, val_pp, args.k, args.sigma_att, args.use_pair_labels)
    scale = scenario.uav_xy_range
    tr = _fusion_dataset(train_pp, sel_train, locator, args.variant, scale)
    va = _fusion_dataset(val_pp, sel_val, locator, args.variant, scale)
    cfg = FusionConfig(
        token_dim=tr[0][0].shape[1],
        n_pairs=scenario.n_pairs,
        scale=scale,
        d_model=args.d_model,
    )
    hyper = LocHyper(lr=args.lr, batch_size=args.batch, epochs=args.epochs,
                     early_stop_patience=args.patience)
    print(f"training {args.variant}-fusion on {len(tr[0])} samples")
    model, history = train_fusion(
        tr[0], tr[1], tr[2], va[0], va[1], va[2], cfg, hyper, args.seed,
        log_fn=lambda h: print(
            f"  epoch {h['epoch']}: train {h['train_loss']:.5f} val {h['val_loss']:.5f}"
        ),
    )
    kind = "fusion_medium" if args.variant == "medium" else "fusion_soft"
    save_fusion(args.out, model, kind, extra_meta={"seed": args.seed})
    _write_curve(args.out + ".curve.csv", history)
    artifacts = {"checkpoint": args.out, "detector": args.detector}
    if args.variant == "medium":
        artifacts["individual"] = args.individual
    _write_manifest(
        args.out + ".manifest.json", argv, scenario, args.seed,
        {"train": args.train, "val": args.val}, artifacts,
        metrics={"best_val_loss": min(h["val_loss"] for h in history)},
    )
    print(f"saved {args.out}")
    return EXIT_OK


# -- eval ---------------------------------------------------------------------


def cmd_eval(args, argv: list[str]) -> int:
    import numpy as np

    from .detection import batch_reports, load_detector, predict_probs, export_attention_csv
    from .localization import (
        hard_fusion,
        load_fusion,
        load_locator,
        medium_tokens,
        soft_tokens,
    )
    from .metrics import (
        ape,
        ape_stats,
        attention_label_correlation,
        detection_metrics,
    )
    from .scenario import load_scenario
    from .selection import (
        ReliabilityCounts,
        SelectionConfig,
        export_reliability_csv,
        select_pairs,
        selection_reliability,
    )

    scenario = load_scenario(args.config)
    detector = load_detector(args.detector)
    locator = load_locator(args.individual)
    coop = load_fusion(args.coop, "fusion_medium")
    soft = load_fusion(args.soft, "fusion_soft") if args.soft else None
    split = _load_split(args.dataset, scenario)
    os.makedirs(args.out, exist_ok=True)
    scale = scenario.uav_xy_range

    # detection metrics over the whole split
    probs = predict_probs(detector, split.maps)
    det = detection_metrics((probs >= 0.5).astype(int), split.scene_labels)

    # attention reports, correlation, reliability sweep
    reports = batch_reports(detector, split.maps)
    weights = np.stack([r.weights for r in reports])
    try:
        pearson = attention_label_correlation(weights, split.pair_labels)
    except ValueError:
        pearson = None
    export_attention_csv(os.path.join(args.out, "attention.csv"), reports, split.pair_labels)
    reliability_rows = []
    for sigma in SIGMA_GRID:
        cfg = SelectionConfig(k=args.k, sigma_att=sigma)
        sels = [select_pairs(r, cfg) for r in reports]
        reliability_rows.append((cfg, selection_reliability(sels, split.pair_labels)))
    export_reliability_csv(os.path.join(args.out, "selection_reliability.csv"), reliability_rows)

    # localization over with-UAV samples
    sel_cfg = SelectionConfig(k=args.k, sigma_att=args.sigma_att)
    with_uav = [i for i in range(len(split)) if split.scene_labels[i] == 1]
    errors = {"cooperative": [], "hard": [], "soft": [], "label_selected": [], "scene_center": []}
    trace_rows = []
    center = np.array([0.0, 0.0, scenario.uav_altitude])
    for i in with_uav:
        truth = split.uav_positions[i]
        sel = select_pairs(reports[i], sel_cfg)
        flats = sel.flat
        maps = split.maps[i, [f - 1 for f in flats]]
        est_m, feats = locator.estimate(maps)
        coop_est = coop.fuse(medium_tokens(est_m, feats, scale), np.array(flats))
        hard_est = hard_fusion(est_m)
        errors["cooperative"].append(ape(coop_est, truth))
        errors["hard"].append(ape(hard_est, truth))
        errors["scene_center"].append(ape(center, truth))
        if soft is not None:
            soft_est = soft.fuse(soft_tokens(maps), np.array(flats))
            errors["soft"].append(ape(soft_est, truth))
        label_flats = [f for f in range(1, scenario.n_pairs + 1) if split.pair_labels[i, f - 1]]
        if not label_flats:
            label_flats = [flats[0]]
        lmaps = split.maps[i, [f - 1 for f in label_flats]]
        lest, lfeats = locator.estimate(lmaps)
        label_est = coop.fuse(medium_tokens(lest, lfeats, scale), np.array(label_flats))
        errors["label_selected"].append(ape(label_est, truth))
        trace_rows.append(
            [i, len(flats), " ".join(str(f) for f in flats),
             ";".join(",".join(f"{v:.3f}" for v in e) for e in est_m),
             ",".join(f"{v:.3f}" for v in coop_est),
             ",".join(f"{v:.3f}" for v in truth),
             f"{errors['cooperative'][-1]:.4f}"]
        )

    loc_stats = {
        name: ape_stats(vals).to_dict() for name, vals in errors.items() if vals
    }
    with open(os.path.join(args.out, "localization_trace.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample", "L", "selected_flat", "individual_estimates",
                         "fused_estimate", "true_position", "ape"])
        writer.writerows(trace_rows)

    report = {
        "detection": det.to_dict(),
        "attention_pearson": pearson,
        "selection_reliability": [
            {"sigma_att": cfg.sigma_att, "k": cfg.k, "tp": c.tp, "fp": c.fp, "fn": c.fn,
             "l_min": c.l_min, "l_max": c.l_max}
            for cfg, c in reliability_rows
        ],
        "localization": loc_stats,
        "selection": {"k": args.k, "sigma_att": args.sigma_att},
        "full_scale_reference": {
            "mdp": 0.0063, "fap": 0.0, "mean_ape_m": 3.09, "p95_ape_m": 6.50,
            "attention_pearson": 0.66,
        },
    }
    _json_dump(os.path.join(args.out, "metrics.json"), report)
    _write_manifest(
        os.path.join(args.out, "eval.manifest.json"), argv, scenario, args.seed,
        {"dataset": args.dataset},
        {"detector": args.detector, "individual": args.individual, "coop": args.coop,
         **({"soft": args.soft} if args.soft else {})},
        metrics={"mdp": det.mdp, "fap": det.fap,
                 "cooperative_mean_ape": loc_stats.get("cooperative", {}).get("mean")},
    )
    mdp = "n/a" if det.mdp is None else f"{det.mdp:.4f}"
    fap = "n/a" if det.fap is None else f"{det.fap:.4f}"
    print(f"detection: MDP {mdp} FAP {fap}")
    for name in ("cooperative", "hard", "soft", "label_selected", "scene_center"):
        if name in loc_stats:
            s = loc_stats[name]
            print(f"{name}: mean APE {s['mean']:.2f} m, p95 {s['p95']:.2f} m")
    return EXIT_OK


# -- region maps and debug dumps ---------------------------------------------


def cmd_region_map(args, argv: list[str]) -> int:
    import numpy as np

    from .metrics import sensing_region_map, write_grid_csv, write_pgm
    from .scenario import load_scenario

    scenario = load_scenario(args.config)
    split = _load_split(args.dataset, scenario)
    os.makedirs(args.out, exist_ok=True)
    pair_texts = [args.pair] if args.pair else []
    if args.pairs:
        pair_texts.extend(p.strip() for p in args.pairs.split(",") if p.strip())
    if not pair_texts:
        print("error: need --pair or --pairs", file=sys.stderr)
        return EXIT_DATA
    pairs = [_parse_pair(t, scenario) for t in pair_texts]
    half = scenario.uav_xy_range
    grids = []
    outputs = {}
    for pid in pairs:
        labels = split.pair_labels[:, pid.flat - 1]
        grid, edges = sensing_region_map(split.uav_positions[:, :2], labels, half, args.res)
        grids.append(grid.astype(bool))
        stem = os.path.join(args.out, f"region_{pid.m}_{pid.n}")
        write_grid_csv(stem + ".csv", grid, edges)
        write_pgm(stem + ".pgm", grid)
        outputs[f"{pid.m}:{pid.n}"] = stem + ".csv"
        print(f"pair {pid.m}:{pid.n}: {int(grid.sum())} affected samples -> {stem}.csv/.pgm")
    if args.combine != "none" and len(grids) > 1:
        combined = grids[0]
        for g in grids[1:]:
            combined = (combined | g) if args.combine == "union" else (combined & g)
        stem = os.path.join(args.out, f"region_{args.combine}")
        write_grid_csv(stem + ".csv", combined.astype(np.int64), edges)
        write_pgm(stem + ".pgm", combined.astype(np.int64))
        print(f"{args.combine} composite -> {stem}.csv/.pgm")
    _write_manifest(
        os.path.join(args.out, "region.manifest.json"), argv, scenario, args.seed,
        {"dataset": args.dataset}, {},
    )
    return EXIT_OK


def cmd_dump_ad(args, argv: list[str]) -> int:
    from .channel import DatasetReader
    from .dsp import preprocess
    from .metrics import write_pgm
    from .scenario import load_scenario

    scenario = load_scenario(args.config)
    reader = DatasetReader(args.dataset)
    if not 0 <= args.index < len(reader):
        print(f"error: sample index {args.index} out of range 0..{len(reader) - 1}",
              file=sys.stderr)
        return EXIT_DATA
    record = reader.read(args.index)
    pid = _parse_pair(args.pair, scenario)
    cfr = record.cfrs[pid.flat - 1]
    admap = preprocess(cfr.data, scenario.delay_keep)[..., 0]  # (N_r, N_t, N_c')
    scaled = (admap * 255).astype("uint8")
    for j in range(admap.shape[1]):
        path = f"{args.out}_tx{j}.pgm"
        write_pgm(path, scaled[:, j, :])
        print(f"wrote {path}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fwasense",
        description="Cooperative UAV sensing pipeline on a synthetic geometric channel",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="scenario JSON")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1, help="BLAS thread pin")

    p = sub.add_parser("gen", help="generate train/val/test dataset files")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--train", type=int, default=2000, help="train samples per class")
    p.add_argument("--val", type=int, default=400, help="val samples per class")
    p.add_argument("--test", type=int, default=600, help="test samples per class")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train-detect", help="train the cooperative detector")
    common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--patience", type=int, default=12)
    p.add_argument("--embed-dim", type=int, default=128)
    p.add_argument("--channels", default="8,16,32")
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_train_detect)

    p = sub.add_parser("train-loc-individual", help="train the per-pair locator")
    common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--detector", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--patience", type=int, default=15)
    p.add_argument("--channels", default="8,16,32")
    p.add_argument("--feature-tap", default="dense64")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--sigma-att", type=float, default=0.1)
    p.add_argument("--use-pair-labels", action="store_true",
                   help="select pairs by true labels instead of attention")
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_train_loc_individual)

    p = sub.add_parser("train-loc-coop", help="train the fusion localizer")
    common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--detector", required=True)
    p.add_argument("--individual", help="locator checkpoint (medium variant)")
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=("medium", "soft"), default="medium")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--patience", type=int, default=15)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--sigma-att", type=float, default=0.1)
    p.add_argument("--use-pair-labels", action="store_true")
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_train_loc_coop)

    p = sub.add_parser("eval", help="evaluate detection + localization")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--detector", required=True)
    p.add_argument("--individual", required=True)
    p.add_argument("--coop", required=True)
    p.add_argument("--soft", help="soft-fusion checkpoint (optional)")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--sigma-att", type=float, default=0.1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("region-map", help="sensing-region occupancy grids")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--pair", help="single pair m:n")
    p.add_argument("--pairs", help="comma list of pairs for composites")
    p.add_argument("--combine", choices=("none", "union", "intersection"), default="none")
    p.add_argument("--res", type=float, default=5.0, help="cell size, meters")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_region_map)

    p = sub.add_parser("dump-ad", help="dump one angle-delay map as PGM slices")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--pair", required=True)
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_dump_ad)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _pin_threads(argv)
    parser = build_parser()
    args = parser.parse_args(argv)

    from .channel import DatasetError
    from .scenario import ScenarioError
    from .tensornet import CheckpointError, TrainingDiverged

    try:
        return args.func(args, ["fwasense", *argv])
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ScenarioError, DatasetError, CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
