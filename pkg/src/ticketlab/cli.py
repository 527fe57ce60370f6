"""Command-line front end and deterministic report emission.

Subcommands: distill, prune, lmc, weights, report, validate.  Configs are
JSON; reports are CSV tables plus a summary JSON written atomically.  Exit
codes: 0 ok, 2 config error, 3 runtime divergence, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import struct
import sys
import tempfile
from dataclasses import dataclass

import numpy as np

from . import analysis, data as data_mod, engines, nn, pruning

SCHEMA_VERSION = 1
MASK_MAGIC = b"MASK"

ITERATIONS_HEADER = ("method", "seed", "iteration", "sparsity", "test_accuracy",
                     "mask_phase_seconds", "finetune_seconds")
LMC_HEADER = ("alpha", "accuracy", "loss", "mask_sparsity", "seed_a", "seed_b")
HIST_HEADER = ("bin_left", "bin_right", "count", "sparsity")

EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_IO = 4


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Atomic file output

def atomic_write_text(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path, blob):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".12g")
    return str(value)


def csv_text(header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def strip_timing_columns(csv_body: str) -> str:
    """Drop wall-clock columns so tables can be compared byte-for-byte."""
    lines = csv_body.splitlines()
    header = lines[0].split(",")
    keep = [i for i, name in enumerate(header) if not name.endswith("_seconds")]
    out = [",".join(line.split(",")[i] for i in keep) for line in lines]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Mask persistence: bit-packed binary + JSON sidecar

def save_mask(path, mask: pruning.SparsityMask, method="", seed=0):
    bits = mask.bits.astype(np.uint8)
    blob = MASK_MAGIC + struct.pack("<I", bits.size) + np.packbits(bits).tobytes()
    atomic_write_bytes(path, blob)
    sidecar = {
        "schema_version": SCHEMA_VERSION,
        "layer_map": [{"name": e.name, "offset": e.offset, "length": e.length,
                       "kind": e.kind} for e in mask.layer_map],
        "sparsity": pruning.sparsity(mask),
        "whole_vector_sparsity": pruning.whole_vector_sparsity(mask),
        "method": method,
        "seed": seed,
    }
    atomic_write_text(path + ".json", json.dumps(sidecar, indent=2) + "\n")


def load_mask(path) -> pruning.SparsityMask:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MASK_MAGIC:
        raise data_mod.FormatError(f"bad magic in {path}")
    n, = struct.unpack("<I", blob[4:8])
    bits = np.unpackbits(np.frombuffer(blob[8:], dtype=np.uint8), count=n)
    with open(path + ".json") as f:
        sidecar = json.load(f)
    layer_map = tuple(nn.LayerEntry(e["name"], e["offset"], e["length"], e["kind"])
                      for e in sidecar["layer_map"])
    return pruning.SparsityMask(bits.astype(np.float64), layer_map)


# ---------------------------------------------------------------------------
# Experiment configuration

@dataclass
class ExperimentConfig:
    raw: dict

    @classmethod
    def load(cls, path):
        with open(path) as f:
            raw = json.load(f)
        diagnostics = validate_config_dict(raw, base_dir=os.path.dirname(path))
        if diagnostics:
            raise ConfigError("; ".join(diagnostics))
        return cls(raw)

    def model_spec(self) -> nn.ModelSpec:
        m = self.raw["model"]
        return nn.ModelSpec(
            architecture=m["architecture"],
            input_shape=tuple(m["input_shape"]),
            num_classes=m["num_classes"],
            hidden=tuple(m.get("hidden", ())),
            channels=tuple(m.get("channels", ())),
        )

    def _train_config(self, key, epochs):
        sub = self.raw.get("prune", {}).get(key, {})
        return nn.TrainConfig(
            epochs=epochs,
            learning_rate=sub.get("learning_rate", 0.1),
            momentum=sub.get("momentum", 0.9),
            weight_decay=sub.get("weight_decay", 0.0),
            batch_size=sub.get("batch_size", 32),
            milestones=tuple(sub.get("milestones", ())),
            gamma=sub.get("gamma", 1.0),
            shuffle_seed=sub.get("shuffle_seed", 0),
        )

    def prune_config(self) -> engines.PruneRunConfig:
        p = self.raw.get("prune", {})
        t = p.get("mask_train_epochs", 3)
        n = p.get("finetune_epochs", 3)
        return engines.PruneRunConfig(
            desired_sparsity=p.get("desired_sparsity", 0.5),
            amount=p.get("amount", 0.2),
            mask_train_epochs=t,
            finetune_epochs=n,
            rewind_epoch=p.get("rewind_epoch", 0),
            prune_scope=pruning.PruneScope(p.get("scope", "global")),
            train_config_mask=self._train_config("mask_train", t),
            train_config_finetune=self._train_config("finetune", n),
            iteration_cap=p.get("iteration_cap", engines.DEFAULT_ITERATION_CAP),
            seeds=tuple(self.raw.get("seeds", (0, 1, 2, 3, 4))),
        )

    def datasets(self):
        """(train dataset, eval dataset) from the configured source."""
        d = self.raw["dataset"]
        if d["source"] == "idx":
            train = data_mod.load_idx(d["images"], d["labels"])
            if "test_images" in d:
                test = data_mod.load_idx(d["test_images"], d["test_labels"],
                                         num_classes=train.num_classes)
            else:
                test = train
            return train, test
        shape = tuple(d.get("input_shape", (2,)))
        train = data_mod.synth_dataset(d["kind"], d["num_classes"], d["per_class"],
                                       d.get("noise", 0.5), d.get("seed", 0), shape)
        test = data_mod.synth_dataset(d["kind"], d["num_classes"],
                                      d.get("test_per_class", d["per_class"] // 4 or 1),
                                      d.get("noise", 0.5), d.get("seed", 0) + 10_000,
                                      shape)
        return train, test

    def distilled(self, train_set) -> data_mod.DistilledDataset:
        d = self.raw.get("distiller", {"kind": "kmeansHerding", "ipc": 10})
        kind = d.get("kind", "kmeansHerding")
        if kind == "external":
            return data_mod.load_distilled(d["path"])
        if kind == "classMean":
            return data_mod.distill_class_mean(train_set)
        if kind == "random":
            return data_mod.distill_random(train_set, d.get("ipc", 10),
                                           d.get("seed", 0))
        return data_mod.distill_kmeans_herding(train_set, d.get("ipc", 10),
                                               d.get("iterations", 50),
                                               d.get("seed", 0))

    def report_options(self):
        r = self.raw.get("report", {})
        return {
            "finetune_each": r.get("finetune_each", True),
            "lmc": r.get("lmc", False),
            "histograms": r.get("histograms", False),
            "lmc_points": r.get("lmc_points", 21),
            "threshold": r.get("threshold", 0.02),
            "num_bins": r.get("num_bins", 30),
        }


def validate_config_dict(raw, base_dir=""):
    """All violations, not fail-fast; empty list means valid."""
    out = []
    if not isinstance(raw, dict):
        return ["config root must be a JSON object"]
    for key in ("dataset", "model"):
        if key not in raw:
            out.append(f"missing section '{key}'")
    method = raw.get("method", "imp")
    if method not in ("imp", "distilled", "random"):
        out.append(f"unknown method '{method}'")
    p = raw.get("prune", {})
    amount = p.get("amount", 0.2)
    if not 0 < amount < 1:
        out.append("amount must be in (0,1)")
    ds = p.get("desired_sparsity", 0.5)
    if not 0 < ds < 1:
        out.append("desired_sparsity must be in (0,1)")
    k = p.get("rewind_epoch", 0)
    t = p.get("mask_train_epochs", 3)
    if k < 0:
        out.append("rewind_epoch must be >= 0")
    elif k > 0 and k >= t:
        out.append("rewind_epoch must be < mask_train_epochs")
    if p.get("scope", "global") not in ("global", "layerwise"):
        out.append("scope must be global or layerwise")
    seeds = raw.get("seeds", [0, 1, 2, 3, 4])
    if not seeds or not all(isinstance(s, int) for s in seeds):
        out.append("seeds must be a non-empty list of integers")
    d = raw.get("dataset", {})
    if d.get("source") == "idx":
        for key in ("images", "labels"):
            path = d.get(key)
            if path is None:
                out.append(f"dataset.{key} missing")
            elif not os.path.exists(os.path.join(base_dir, path)) \
                    and not os.path.exists(path):
                out.append(f"dataset.{key} file not found: {path}")
    elif d.get("source") == "synth":
        if d.get("kind") not in ("gaussianBlobs", "spirals"):
            out.append("dataset.kind must be gaussianBlobs or spirals")
    elif "source" in d:
        out.append(f"unknown dataset source '{d.get('source')}'")
    dist = raw.get("distiller", {})
    if dist.get("kind") == "external":
        path = dist.get("path")
        if path is None or not os.path.exists(path):
            out.append(f"distiller.path file not found: {path}")
    return out


def validate_config(path):
    try:
        with open(path) as f:
            raw = json.load(f)
    except OSError as e:
        raise
    except json.JSONDecodeError as e:
        return [f"invalid JSON: {e}"]
    return validate_config_dict(raw, base_dir=os.path.dirname(path))


# ---------------------------------------------------------------------------
# Experiment orchestration

@dataclass
class ReportBundle:
    summary: dict
    csv_paths: dict


def _run_one(method, spec, theta, d_real, d_syn, cfg, eval_data, finetune_each, seed):
    if method == "imp":
        return engines.imp_run(spec, theta, d_real, cfg, eval_data=eval_data,
                               finetune_each=finetune_each, seed=seed)
    if method == "random":
        return engines.random_prune_run(spec, theta, d_real, cfg,
                                        eval_data=eval_data,
                                        finetune_each=finetune_each, seed=seed)
    _, _, rec = engines.distilled_prune_run(spec, theta, d_syn, d_real, cfg,
                                            eval_data=eval_data,
                                            finetune_each=finetune_each, seed=seed)
    return rec


def run_experiment(config: ExperimentConfig, out_dir, method=None,
                   seeds=None) -> ReportBundle:
    """Execute the configured engine over all seeds and emit the report."""
    spec = config.model_spec()
    cfg = config.prune_config()
    opts = config.report_options()
    method = method or config.raw.get("method", "imp")
    seeds = tuple(seeds) if seeds else cfg.seeds
    d_real, d_test = config.datasets()
    d_syn = config.distilled(d_real) if method == "distilled" else None

    records = []
    for seed in seeds:
        theta = nn.init_params(spec, seed)
        records.append(_run_one(method, spec, theta, d_real, d_syn, cfg,
                                d_test, opts["finetune_each"], seed))

    rows = []
    for rec in records:
        for it in rec.iterations:
            rows.append((rec.method, rec.seed, it.index, it.sparsity,
                         it.finetune_accuracy, it.mask_phase_seconds,
                         it.finetune_seconds))
    iterations_csv = csv_text(ITERATIONS_HEADER, rows)
    paths = {"iterations": os.path.join(out_dir, "iterations.csv")}
    atomic_write_text(paths["iterations"], iterations_csv)

    for rec in records:
        mask_path = os.path.join(out_dir, f"mask_{rec.method}_seed{rec.seed}.mask")
        save_mask(mask_path, rec.final_mask, rec.method, rec.seed)

    summary = summarize(records, seeds)
    if opts["lmc"]:
        paths["lmc"] = os.path.join(out_dir, "lmc.csv")
        summary["lmc"] = _emit_lmc(config, spec, cfg, d_real, d_test, records[0],
                                   opts, paths["lmc"])
    if opts["histograms"]:
        _emit_histograms(spec, records[0], opts, out_dir, paths)

    atomic_write_text(os.path.join(out_dir, "summary.json"),
                      json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return ReportBundle(summary, paths)


def summarize(records, seeds):
    """Best-seed and mean/std accuracy per sparsity level; timing totals."""
    by_level = {}
    for rec in records:
        for it in rec.iterations:
            if it.finetune_accuracy is not None:
                by_level.setdefault(round(it.sparsity, 12), []).append(
                    (rec.seed, it.finetune_accuracy))
    levels = []
    for level in sorted(by_level):
        pairs = by_level[level]
        accs = np.array([a for _, a in pairs])
        best_seed, best_acc = max(pairs, key=lambda p: (p[1], -p[0]))
        levels.append({
            "sparsity": level,
            "mean_accuracy": float(accs.mean()),
            "std_accuracy": float(accs.std()),
            "best_seed": int(best_seed),
            "best_accuracy": float(best_acc),
        })
    return {
        "schema_version": SCHEMA_VERSION,
        "method": records[0].method,
        "seeds": list(seeds),
        "final_sparsity": records[0].final_sparsity,
        "levels": levels,
        "time_to_mask_seconds": {
            str(rec.seed): {
                "mask_only": engines.time_to_mask(rec, False),
                "with_final_retrain": engines.time_to_mask(rec, True),
            } for rec in records
        },
    }


def _emit_lmc(config, spec, cfg, d_real, d_test, record, opts, path):
    seed_a, seed_b = 1, 2
    theta = nn.init_params(spec, record.seed)
    mask = record.final_mask
    ta, tb = analysis.train_twin(spec, theta, mask, d_real,
                                 cfg.train_config_finetune, seed_a, seed_b)
    curve = analysis.interpolate_curve(spec, ta, tb, mask, d_test,
                                       opts["lmc_points"], (seed_a, seed_b))
    rows = [(a, acc, loss, curve.mask_sparsity, seed_a, seed_b)
            for a, acc, loss in zip(curve.alphas, curve.accuracies, curve.losses)]
    atomic_write_text(path, csv_text(LMC_HEADER, rows))
    rep = analysis.instability(curve, opts["threshold"])
    return {"error_barrier": rep.error_barrier, "stable": rep.stable,
            "threshold": rep.threshold}


def _emit_histograms(spec, record, opts, out_dir, paths):
    theta = nn.init_params(spec, record.seed)
    mask = record.final_mask
    for name in dict.fromkeys(e.name for e in theta.layer_map):
        hist = analysis.weight_histogram(theta, mask, name, opts["num_bins"])
        rows = [(hist.bin_edges[i], hist.bin_edges[i + 1], int(hist.counts[i]),
                 hist.sparsity) for i in range(len(hist.counts))]
        path = os.path.join(out_dir, f"hist_{name}.csv")
        paths[f"hist_{name}"] = path
        atomic_write_text(path, csv_text(HIST_HEADER, rows))


def rebuild_summary(out_dir):
    """Recompute summary accuracy levels from iterations.csv alone."""
    path = os.path.join(out_dir, "iterations.csv")
    with open(path) as f:
        lines = f.read().splitlines()
    header = lines[0].split(",")
    idx = {name: i for i, name in enumerate(header)}
    by_level = {}
    methods, seeds = set(), set()
    for line in lines[1:]:
        cells = line.split(",")
        methods.add(cells[idx["method"]])
        seed = int(cells[idx["seed"]])
        seeds.add(seed)
        if cells[idx["test_accuracy"]]:
            level = round(float(cells[idx["sparsity"]]), 12)
            by_level.setdefault(level, []).append(
                (seed, float(cells[idx["test_accuracy"]])))
    levels = []
    for level in sorted(by_level):
        accs = np.array([a for _, a in by_level[level]])
        best_seed, best_acc = max(by_level[level], key=lambda p: (p[1], -p[0]))
        levels.append({"sparsity": level, "mean_accuracy": float(accs.mean()),
                       "std_accuracy": float(accs.std()),
                       "best_seed": int(best_seed),
                       "best_accuracy": float(best_acc)})
    return {"schema_version": SCHEMA_VERSION, "method": ",".join(sorted(methods)),
            "seeds": sorted(seeds), "levels": levels}


# ---------------------------------------------------------------------------
# Entry point

def _parser():
    p = argparse.ArgumentParser(prog="ticketlab",
                                description="Sparse-subnetwork pruning laboratory")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("distill", "prune", "lmc", "weights"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int, action="append", default=None)
        sp.add_argument("--out", default=None)
        if name == "prune":
            sp.add_argument("--method", choices=("imp", "distilled", "random"),
                            default=None)
    sp = sub.add_parser("report")
    sp.add_argument("--out", required=True)
    sp = sub.add_parser("validate")
    sp.add_argument("--config", required=True)
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (nn.TrainingDiverged, engines.SparsityUnreachable) as e:
        print(f"runtime failure: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, data_mod.FormatError) as e:
        print(f"i/o failure: {e}", file=sys.stderr)
        return EXIT_IO


def _dispatch(args):
    if args.command == "validate":
        try:
            diagnostics = validate_config(args.config)
        except OSError as e:
            print(f"i/o failure: {e}", file=sys.stderr)
            return EXIT_IO
        print(json.dumps({"diagnostics": diagnostics}))
        return 0 if not diagnostics else EXIT_CONFIG

    if args.command == "report":
        summary = rebuild_summary(args.out)
        atomic_write_text(os.path.join(args.out, "summary.json"),
                          json.dumps(summary, indent=2, sort_keys=True) + "\n")
        print(json.dumps(summary, sort_keys=True))
        return 0

    config = ExperimentConfig.load(args.config)
    out_dir = args.out or config.raw.get("out_dir", "ticketlab_out")

    if args.command == "distill":
        d_real, _ = config.datasets()
        dsyn = config.distilled(d_real)
        path = os.path.join(out_dir, "dsyn.dstl")
        os.makedirs(out_dir, exist_ok=True)
        data_mod.save_distilled(dsyn, path)
        print(json.dumps({"path": path, "ipc": dsyn.ipc, "size": dsyn.size,
                          "provenance": dsyn.provenance}))
        return 0

    if args.command == "prune":
        bundle = run_experiment(config, out_dir, method=args.method,
                                seeds=args.seed)
        print(json.dumps(bundle.summary, sort_keys=True))
        return 0

    if args.command == "lmc":
        opts = config.report_options()
        opts["lmc"] = True
        spec = config.model_spec()
        cfg = config.prune_config()
        d_real, d_test = config.datasets()
        seeds = tuple(args.seed) if args.seed else cfg.seeds[:1]
        method = config.raw.get("method", "imp")
        d_syn = config.distilled(d_real) if method == "distilled" else None
        rec = _run_one(method, spec, nn.init_params(spec, seeds[0]), d_real,
                       d_syn, cfg, d_test, False, seeds[0])
        result = _emit_lmc(config, spec, cfg, d_real, d_test, rec, opts,
                           os.path.join(out_dir, "lmc.csv"))
        print(json.dumps(result, sort_keys=True))
        return 0

    if args.command == "weights":
        opts = config.report_options()
        spec = config.model_spec()
        cfg = config.prune_config()
        d_real, d_test = config.datasets()
        seeds = tuple(args.seed) if args.seed else cfg.seeds[:1]
        method = config.raw.get("method", "imp")
        d_syn = config.distilled(d_real) if method == "distilled" else None
        rec = _run_one(method, spec, nn.init_params(spec, seeds[0]), d_real,
                       d_syn, cfg, d_test, False, seeds[0])
        paths = {}
        _emit_histograms(spec, rec, opts, out_dir, paths)
        theta = nn.init_params(spec, seeds[0])
        ratio = analysis.survivor_magnitude_ratio(theta, rec.final_mask)
        print(json.dumps({"survivor_magnitude_ratio": ratio,
                          "files": sorted(paths.values())}, sort_keys=True))
        return 0

    raise ConfigError(f"unknown command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
