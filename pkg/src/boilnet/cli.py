"""boilnet command line: generate -> average -> extract -> train -> evaluate -> hpsearch.

Everything is written under ``--workspace``::

    raw/case_<q>/        fine-grid BLFD fields + manifest.json
    averaged/case_<q>/   averaged BLFD fields (+ alpha) + manifest.json
    datasets/case_<q>.csv
    models/split_<n>.json, models/history_split_<n>.csv
    report/split_<n>/    report.json, histograms.csv, maps_*.csv
    report/summary.csv
    sweep.csv
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import math
import os
import sys

import numpy as np

from boilnet import experiment as ex
from boilnet import nn, synthgen
from boilnet.featext import (apply_normalization, concat, extract_near_wall,
                             fit_normalization, read_dataset_csv, write_dataset_csv)
from boilnet.fieldavg import AvgSpec, average4d, average_surface, void_fraction
from boilnet.fieldio import BlfdError
from boilnet.optim import TrainConfig, TrainingDiverged, train

log = logging.getLogger("boilnet")


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "generation": {"q_list": list(synthgen.DEFAULT_HEAT_FLUXES), "base_seed": 0},
    "averaging": {"l": 0.25e-3, "tau": 0.1, "convention": "liquid"},
    "training": {"epochs": 200, "batch_size": 256, "optimizer": "adam", "learning_rate": 1e-3,
                 "lam": 1e-4, "norm": "L2", "regularizer": "L2", "hidden": [64, 64, 64],
                 "alpha": 1.0, "seed": 0},
    "experiment": {"split": 1, "sweep_epochs": 20, "hidden_layers": 3,
                   "lhs": {"n_samples": 8, "seed": 0, "anchors": []}},
}
_SEED_KEYS = {"generation": "base_seed", "training": "seed"}


def load_config(path, seed=None):
    cfg = json.loads(json.dumps(DEFAULTS))
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path) as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be an object")
        unknown = set(user) - set(cfg)
        if unknown:
            raise ConfigError(f"{path}: unknown section(s) {sorted(unknown)}")
        for section, values in user.items():
            if seed is None and section in _SEED_KEYS and _SEED_KEYS[section] not in values:
                raise ConfigError(f"{path}: {section}.{_SEED_KEYS[section]} is required")
            if section == "experiment" and "lhs" in values:
                if seed is None and "seed" not in values["lhs"]:
                    raise ConfigError(f"{path}: experiment.lhs.seed is required")
                cfg["experiment"]["lhs"].update(values.pop("lhs"))
            cfg[section].update(values)
    if seed is not None:
        cfg["generation"]["base_seed"] = seed
        cfg["training"]["seed"] = seed
        cfg["experiment"]["lhs"]["seed"] = seed
    return cfg


def _ws(args, *parts):
    return os.path.join(args.workspace, *parts)


def _case_dirs(root):
    dirs = sorted(glob.glob(os.path.join(root, "case_*")),
                  key=lambda d: float(d.rsplit("_", 1)[1]))
    if not dirs:
        raise FileNotFoundError(f"no case directories under {root}")
    return dirs


# ---------------------------------------------------------------- commands

def cmd_generate(args, cfg):
    gen = dict(cfg["generation"])
    q_list = gen.pop("q_list")
    base_seed = gen.pop("base_seed")
    bundles = synthgen.generate_suite(q_list, base_seed, **gen)
    for b in bundles:
        d = _ws(args, "raw", synthgen.case_dirname(b.meta["q_total"]))
        synthgen.write_case(b, d)
        print(f"wrote {d} ({b.meta['n_sites']} sites, {b.meta['n_active']} active)")


def cmd_average(args, cfg):
    avg = cfg["averaging"]
    spec = AvgSpec(args.l if args.l is not None else avg["l"],
                   args.tau if args.tau is not None else avg["tau"])
    for d in _case_dirs(_ws(args, "raw")):
        b = synthgen.read_case(d)
        vol = {n: average4d(f, spec) for n, f in b.volume.items()}
        if "phi" in vol:
            vol["alpha"] = void_fraction(vol["phi"], avg.get("convention", "liquid"))
        surf = {n: average_surface(s, spec) for n, s in b.surface.items()}
        meta = dict(b.meta, averaging={"l": spec.l, "tau": spec.tau})
        out = _ws(args, "averaged", os.path.basename(d))
        synthgen.write_case(synthgen.CaseBundle(vol, surf, meta), out)
        print(f"wrote {out} grid {vol['p'].dims}")


def cmd_extract(args, cfg):
    os.makedirs(_ws(args, "datasets"), exist_ok=True)
    for d in _case_dirs(_ws(args, "averaged")):
        b = synthgen.read_case(d)
        data = extract_near_wall(b.volume, b.surface, b.meta["q_total"])
        out = _ws(args, "datasets", os.path.basename(d) + ".csv")
        write_dataset_csv(out, data)
        print(f"wrote {out} ({len(data)} rows)")


def _datasets(args):
    paths = sorted(glob.glob(_ws(args, "datasets", "case_*.csv")),
                   key=lambda p: float(os.path.basename(p)[5:-4]))
    if not paths:
        raise FileNotFoundError(f"no datasets under {_ws(args, 'datasets')}")
    return [read_dataset_csv(p) for p in paths]


def _grid_of(data):
    s = math.isqrt(len(data))
    return (s, s) if s * s == len(data) else None


def _split_ids(value, default):
    v = value if value is not None else default
    if str(v) == "all":
        return [1, 2, 3, 4]
    try:
        i = int(v)
    except ValueError:
        raise ConfigError(f"split must be 1-4 or 'all', got {v!r}") from None
    if not 1 <= i <= 4:
        raise ConfigError(f"split must be 1-4 or 'all', got {v!r}")
    return [i]


def _train_one(train_raw, test_raw, tcfg):
    stats = fit_normalization(train_raw)
    trn = apply_normalization(train_raw, stats)
    ten = apply_normalization(test_raw, stats) if test_raw is not None else None
    sizes = [trn.X.shape[1], *[int(u) for u in tcfg["hidden"]], trn.Y.shape[1]]
    net = nn.build_network(sizes, np.random.default_rng(tcfg["seed"]), alpha=tcfg["alpha"])
    loss = nn.LossConfig(norm=tcfg["norm"], lam=tcfg["lam"], regularizer=tcfg["regularizer"])
    cfg = TrainConfig(epochs=tcfg["epochs"], batch_size=min(tcfg["batch_size"], len(trn)),
                      optimizer=tcfg["optimizer"], learning_rate=tcfg["learning_rate"],
                      loss=loss, seed=tcfg["seed"])
    net, hist = train(net, trn, ten, cfg)
    return ex.attach_stats(net, stats), hist


def cmd_train(args, cfg):
    tcfg = dict(cfg["training"])
    if args.hyper:
        with open(args.hyper) as fh:
            tcfg.update(json.load(fh))
    os.makedirs(_ws(args, "models"), exist_ok=True)
    if args.train:
        train_raw = concat([read_dataset_csv(p) for p in args.train])
        test_raw = read_dataset_csv(args.test) if args.test else None
        net, hist = _train_one(train_raw, test_raw, tcfg)
        out = args.out or _ws(args, "models", "model.json")
        nn.save_network(net, out)
        hist.write_csv(os.path.splitext(out)[0] + "_history.csv")
        print(f"wrote {out}")
        return
    datasets = _datasets(args)
    splits = ex.make_splits([d.case_label for d in datasets])
    by = {d.case_label: d for d in datasets}
    ids = _split_ids(args.split, cfg["experiment"]["split"])
    for sid in ids:
        sp = splits[sid - 1]
        net, hist = _train_one(concat([by[l] for l in sp.train_labels]), by[sp.test_label], tcfg)
        out = args.out if args.out and len(ids) == 1 else _ws(args, "models", f"split_{sid}.json")
        nn.save_network(net, out)
        hist.write_csv(_ws(args, "models", f"history_split_{sid}.csv"))
        print(f"split {sid} (test {sp.test_label:g}, {sp.kind}): final objective "
              f"{hist.train_objective[-1]:.4g}, wrote {out}")


def _report(net, test_raw, baseline, case, kind):
    pred = ex.predict_physical(net, test_raw.X)
    return ex.evaluate(pred, test_raw.Y, test_raw.grid_shape or _grid_of(test_raw),
                       baseline, case, kind)


def cmd_evaluate(args, cfg):
    if args.model:
        if not os.path.isfile(args.model):
            raise FileNotFoundError(f"model file not found: {args.model}")
        if not args.test:
            raise ConfigError("--model needs --test")
        net = nn.load_network(args.model)
        test = read_dataset_csv(args.test)
        rep = _report(net, test, None, os.path.basename(args.test), "")
        out = args.out or _ws(args, "report", "model")
        ex.write_report(rep, out)
        print(ex.format_summary_table([rep]))
        return
    datasets = _datasets(args)
    splits = ex.make_splits([d.case_label for d in datasets])
    by = {d.case_label: d for d in datasets}
    reports = []
    ids = _split_ids(args.split, cfg["experiment"]["split"])
    for sid in ids:
        sp = splits[sid - 1]
        path = _ws(args, "models", f"split_{sid}.json")
        if not os.path.isfile(path):
            raise FileNotFoundError(f"model file not found: {path}")
        net = nn.load_network(path)
        train_raw = concat([by[l] for l in sp.train_labels])
        stats = fit_normalization(train_raw)
        base = ex.baseline_linear(apply_normalization(train_raw, stats),
                                  apply_normalization(by[sp.test_label], stats))
        rep = _report(net, by[sp.test_label], base, f"Case {sid}", sp.kind)
        ex.write_report(rep, args.out if args.out and len(ids) == 1 else
                        _ws(args, "report", f"split_{sid}"))
        reports.append(rep)
    ex.write_summary_table(reports, _ws(args, "report", "summary.csv"))
    print(ex.format_summary_table(reports))


def cmd_hpsearch(args, cfg):
    e = cfg["experiment"]
    lhs = dict(e["lhs"])
    if args.plan:
        with open(args.plan) as fh:
            lhs.update(json.load(fh))
    base = ex.default_plan(lhs.get("n_samples", 8), lhs["seed"], lhs.get("anchors", []))
    plan = ex.LhsPlan(lhs.get("dims", base.dims), lhs.get("n_samples", 8), lhs["seed"],
                      lhs.get("anchors", []))
    datasets = _datasets(args)
    sid = _split_ids(args.split, e["split"])
    if len(sid) != 1:
        raise ConfigError("hpsearch runs on one split")
    sp = ex.make_splits([d.case_label for d in datasets])[sid[0] - 1]
    trn, ten, _ = ex.split_data(datasets, sp)
    rows = ex.run_sweep(plan, trn, ten, epochs=args.epochs or e["sweep_epochs"],
                        hidden_layers=e["hidden_layers"], seed=lhs["seed"],
                        lam=cfg["training"]["lam"])
    out = args.out or _ws(args, "sweep.csv")
    ex.write_sweep(rows, out)
    print(f"wrote {out} ({len(rows)} settings, {sum(r.diverged for r in rows)} diverged)")


# ---------------------------------------------------------------- entry point

def build_parser():
    p = argparse.ArgumentParser(prog="boilnet", description=__doc__.split("\n")[0])
    p.add_argument("--config", help="JSON pipeline config")
    p.add_argument("--seed", type=int, help="overrides every seed in the config")
    p.add_argument("--workspace", default="workspace", help="output root (default ./workspace)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", help="synthesize the four heat-flux cases")
    a = sub.add_parser("average", help="space-time average raw fields")
    a.add_argument("--l", type=float, help="averaging length [m]")
    a.add_argument("--tau", type=float, help="averaging time [s]")
    sub.add_parser("extract", help="near-wall datasets from averaged fields")
    t = sub.add_parser("train", help="train a DFNN")
    t.add_argument("--split", help="1-4 or 'all'")
    t.add_argument("--train", nargs="+", help="training CSVs (instead of --split)")
    t.add_argument("--test", help="test CSV")
    t.add_argument("--hyper", help="JSON overriding training settings")
    t.add_argument("--out", help="model JSON path")
    e = sub.add_parser("evaluate", help="write report files")
    e.add_argument("--split", help="1-4 or 'all'")
    e.add_argument("--model", help="model JSON (instead of --split)")
    e.add_argument("--test", help="test CSV for --model")
    e.add_argument("--out", help="report directory")
    h = sub.add_parser("hpsearch", help="LHS hyperparameter sweep")
    h.add_argument("--plan", help="JSON LHS plan")
    h.add_argument("--split", help="1-4")
    h.add_argument("--epochs", type=int, help="epochs per setting")
    h.add_argument("--out", help="sweep CSV path")
    return p


COMMANDS = {"generate": cmd_generate, "average": cmd_average, "extract": cmd_extract,
            "train": cmd_train, "evaluate": cmd_evaluate, "hpsearch": cmd_hpsearch}


def _category(exc):
    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, BlfdError):
        return "format"
    if isinstance(exc, TrainingDiverged):
        return "training"
    if isinstance(exc, OSError):
        return "io"
    if isinstance(exc, (ValueError, KeyError, TypeError, np.linalg.LinAlgError)):
        return "data"
    return "internal"


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed)
        COMMANDS[args.command](args, cfg)
    except Exception as exc:   # noqa: BLE001 - every failure becomes one parseable line
        if args.verbose:
            log.exception("command failed")
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"error: {_category(exc)}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
