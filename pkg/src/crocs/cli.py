"""Command line front end: ``crocs gen-data | train | eval | analyze``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis, checkpoint, evaluation, plotting
from .attributes import AttributeSpace
from .data import (TRAIN, VAL, Dataset, NormMode, apply_patient_splits, bin_ages, generate_synthetic,
                   ingest_csv, normalize, split_patients, write_csv)
from .evaluation import summarize, write_clustering_csv, write_retrieval_csv, write_rows
from .inference import embed_all, export_embeddings_csv
from .metrics import THRESHOLDS
from .training import TrainConfig, format_tau, parse_tau, train

log = logging.getLogger("crocs")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


# --- run configuration -----------------------------------------------------

@dataclasses.dataclass
class RunConfig:
    # training
    tau_s: float = 0.1
    tau_omega: float = 1.0
    beta: float = 0.2
    E: int = 128
    batch_size: int = 256
    learning_rate: float = 1e-4
    epochs: int = 50
    ablation_mode: str = "soft_reg"
    label_fraction: float = 1.0
    dropout: float = 0.1
    seeds: list = dataclasses.field(default_factory=lambda: [0])
    # data
    data: Optional[str] = None
    vocabulary: Optional[dict] = None
    normalization: str = "minmax"
    split_ratios: list = dataclasses.field(default_factory=lambda: [0.6, 0.2, 0.2])
    split_seed: int = 0
    # inference
    k_list: list = dataclasses.field(default_factory=lambda: [1, 5, 10])
    thresholds: list = dataclasses.field(default_factory=lambda: list(THRESHOLDS))
    normalize_at_inference: bool = True
    # output
    output_dir: Optional[str] = None
    checkpoint_every: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        self.tau_omega = parse_tau(self.tau_omega)
        try:
            for s in self.seeds:
                self.train_config(s)
            NormMode(self.normalization)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if not self.seeds:
            raise UsageError("at least one seed is required")
        bad = [t for t in self.thresholds if t not in THRESHOLDS]
        if bad:
            raise UsageError(f"unknown thresholds {bad}; choose from {list(THRESHOLDS)}")
        if not self.k_list or min(self.k_list) < 1:
            raise UsageError("k_list must hold positive integers")
        if self.checkpoint_every < 0:
            raise UsageError("checkpoint_every must be non-negative")

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(tau_s=self.tau_s, tau_omega=self.tau_omega, beta=self.beta, E=self.E,
                           batch_size=self.batch_size, learning_rate=self.learning_rate, epochs=self.epochs,
                           ablation_mode=self.ablation_mode, label_fraction=self.label_fraction,
                           seed=int(seed), dropout=self.dropout)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["tau_omega"] = format_tau(self.tau_omega)
        return d


def load_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise UsageError("config must be a JSON object")
    return RunConfig.from_dict(raw)


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def git_hash(path) -> str:
    """Content hash in git's blob format."""
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def write_manifest(run_dir: Path, command: str, inputs: dict, seeds) -> None:
    path = run_dir / "manifest.json"
    manifest = json.loads(path.read_text()) if path.exists() else {"commands": {}}
    artifacts = {}
    for p in sorted(run_dir.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            artifacts[p.relative_to(run_dir).as_posix()] = git_hash(p)
    manifest["commands"][command] = {
        "inputs": {str(k): git_hash(k) if Path(k).is_file() else None for k in inputs},
        "seeds": list(seeds),
    }
    manifest["artifacts"] = artifacts
    dump_json(manifest, path)


# --- dataset loading -------------------------------------------------------

def vocab_path_for(data_path) -> Path:
    p = Path(data_path)
    return p.with_name(p.stem + ".vocab.json")


def space_from_vocab(vocab: dict) -> AttributeSpace:
    return AttributeSpace(len(vocab["class_names"]), len(vocab["sex_labels"]), int(vocab["age_bin_count"]))


def load_dataset(cfg: RunConfig) -> tuple[Dataset, dict]:
    if not cfg.data:
        raise UsageError("no dataset given (--data or the 'data' config key)")
    vocab = cfg.vocabulary
    if vocab is None and vocab_path_for(cfg.data).exists():
        vocab = json.loads(vocab_path_for(cfg.data).read_text())
    space = space_from_vocab(vocab) if vocab else None
    ds = ingest_csv(cfg.data, space)
    if vocab and vocab.get("patient_splits"):
        ds = apply_patient_splits(ds, {int(k): v for k, v in vocab["patient_splits"].items()})
    else:
        ds = split_patients(ds, cfg.split_ratios, cfg.split_seed)
    ds = bin_ages(ds)
    ds = normalize(ds, NormMode(cfg.normalization))
    if vocab is None:
        vocab = default_vocab(ds.space)
    return ds, vocab


def default_vocab(space: AttributeSpace) -> dict:
    return {
        "class_names": [f"class{c}" for c in range(space.class_count)],
        "sex_labels": ["M", "F"][:space.sex_count] + [f"sex{s}" for s in range(2, space.sex_count)],
        "age_bin_count": space.age_bin_count,
    }


def combo_labels(bank, vocab: dict) -> list[str]:
    cn, sl = vocab["class_names"], vocab["sex_labels"]
    return [f"{cn[c.class_id]}/{sl[c.sex_id]}/age{c.age_bin}" for c in bank.combos]


# --- commands --------------------------------------------------------------

def cmd_gen_data(args) -> int:
    out = Path(args.out)
    if not out.is_dir():
        raise FileNotFoundError(f"output directory {out} does not exist")
    space = AttributeSpace(args.classes, args.sexes, args.age_bins)
    ds = generate_synthetic(space, args.patients, args.segments, args.length, args.noise, args.seed)
    ds = bin_ages(split_patients(ds, (0.6, 0.2, 0.2), args.seed))
    data_path = out / f"{args.name}.csv"
    write_csv(normalize(ds, NormMode(args.norm)), data_path)
    vocab = default_vocab(space)
    vocab.update({
        "age_boundaries": list(ds.age_boundaries),
        "combinations": space.size,
        "patient_splits": {str(k): v for k, v in sorted(ds.patient_splits().items())},
        "split_seed": args.seed,
    })
    dump_json(vocab, vocab_path_for(data_path))
    log.info("wrote %d segments (%d combinations) to %s", len(ds), space.size, data_path)
    print(data_path)
    return EXIT_OK


def _effective_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {
        "data": args.data, "output_dir": args.out, "ablation_mode": args.ablation,
        "label_fraction": args.label_fraction, "epochs": args.epochs, "E": args.embedding_dim,
        "beta": args.beta, "batch_size": args.batch_size, "learning_rate": args.lr,
        "normalization": args.norm, "checkpoint_every": args.checkpoint_every,
    }
    for key, val in overrides.items():
        if val is not None:
            setattr(cfg, key, val)
    if args.tau_omega is not None:
        cfg.tau_omega = parse_tau(args.tau_omega)
    if args.seeds is not None:
        cfg.seeds = _int_list(args.seeds)
    for key in ("data", "output_dir"):
        if getattr(cfg, key):
            setattr(cfg, key, str(Path(getattr(cfg, key)).resolve()))
    cfg.validate()
    return cfg


def cmd_train(args) -> int:
    cfg = _effective_config(args)
    if not cfg.output_dir:
        raise UsageError("no output directory given (--out or 'output_dir')")
    run = Path(cfg.output_dir)
    run.mkdir(exist_ok=True)
    ds, vocab = load_dataset(cfg)
    if cfg.vocabulary is None:
        cfg.vocabulary = vocab
    dump_json(cfg.to_dict(), run / "effective_config.json")
    for seed in cfg.seeds:
        sdir = run / f"seed{seed}"
        sdir.mkdir(exist_ok=True)

        def on_epoch(epoch, params, bank, sdir=sdir):
            if cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
                checkpoint.save(sdir / f"model_epoch{epoch}.crocs", params, bank)

        result = train(ds, cfg.train_config(seed), on_epoch)
        checkpoint.save(sdir / "model.crocs", result.params, result.bank)
        write_rows(sdir / "loss_trace.csv", ["epoch", "split", "nce", "reg", "total"],
                   [(r.epoch, r.split, r.nce, r.reg, r.total) for r in result.trace])
        if result.trace:
            plotting.loss_trace(result.trace, sdir / "loss_trace.png")
        log.info("seed %s done", seed)
    write_manifest(run, "train", [cfg.data], cfg.seeds)
    print(run)
    return EXIT_OK


def _run_config(run: Path) -> RunConfig:
    path = run / "effective_config.json"
    if not path.exists():
        raise FileNotFoundError(f"{run} has no effective_config.json; run 'crocs train' first")
    return load_config(path)


def _seed_list(cfg: RunConfig, n: Optional[int]) -> list[int]:
    seeds = list(cfg.seeds)
    if n is not None:
        if n > len(seeds):
            raise UsageError(f"run has {len(seeds)} seeds, {n} requested")
        seeds = seeds[:n]
    return seeds


def cmd_eval(args) -> int:
    run = Path(args.run)
    cfg = _run_config(run)
    if args.data:
        cfg.data = str(Path(args.data).resolve())
        cfg.vocabulary = None
    ks = _int_list(args.k) if args.k else cfg.k_list
    normalize_inf = cfg.normalize_at_inference if args.no_normalize is False else False
    ds, _ = load_dataset(cfg)
    seeds = _seed_list(cfg, args.seeds)
    out = run / f"eval_{args.split}_{args.query}"
    out.mkdir(exist_ok=True)
    cp_rows, ret_rows, km_raw, km_crocs = [], [], [], []
    for seed in seeds:
        params, bank = checkpoint.load(run / f"seed{seed}" / "model.crocs")
        rep = evaluation.evaluate(params, bank, ds, args.split, args.query, ks, cfg.thresholds, normalize_inf)
        write_clustering_csv(out / f"clustering_seed{seed}.csv", rep.clustering)
        write_retrieval_csv(out / f"retrieval_seed{seed}.csv", rep.retrieval)
        export_embeddings_csv(out / f"embeddings_seed{seed}.csv", rep.extra["segments"], rep.extra["embeddings"])
        cp_rows.append(rep.clustering)
        ret_rows.append(rep.retrieval)
        if args.baselines:
            raw = evaluation.kmeans_baseline(ds, args.split, seed)
            km = evaluation.kmeans_baseline(ds, args.split, seed, params=params)
            write_clustering_csv(out / f"km_raw_seed{seed}.csv", raw)
            write_clustering_csv(out / f"km_crocs_seed{seed}.csv", km)
            km_raw.append(raw)
            km_crocs.append(km)
        plotting.retrieval_curves(rep.retrieval, out / f"retrieval_seed{seed}.png",
                                  title=f"{args.query.upper()} queries, seed {seed}")
    write_rows(out / "clustering_summary.csv", ["attribute", "metric", "mean", "sd"], summarize(cp_rows))
    write_rows(out / "retrieval_summary.csv", ["threshold", "K", "mean", "sd"], summarize(ret_rows))
    if args.baselines:
        write_rows(out / "km_raw_summary.csv", ["attribute", "metric", "mean", "sd"], summarize(km_raw))
        write_rows(out / "km_crocs_summary.csv", ["attribute", "metric", "mean", "sd"], summarize(km_crocs))
    write_manifest(run, f"eval_{args.split}_{args.query}", [cfg.data], seeds)
    for attribute, metric, mean, sd in summarize(cp_rows):
        print(f"{attribute:>5} {metric}: {mean:.4f} ({sd:.4f})")
    return EXIT_OK


def cmd_analyze(args) -> int:
    run = Path(args.run)
    cfg = _run_config(run)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    params, bank = checkpoint.load(run / f"seed{seed}" / "model.crocs")
    vocab = cfg.vocabulary or default_vocab(bank.space)
    labels = combo_labels(bank, vocab)
    out = run / f"analysis_seed{seed}"
    out.mkdir(exist_ok=True)
    unit = bank.matrix / np.linalg.norm(bank.matrix, axis=1, keepdims=True)
    if not (args.hac or args.project):
        raise UsageError("nothing to do: pass --hac and/or --project")
    if args.hac in ("rows", "both"):
        rows = analysis.hac(unit, labels=labels)
        analysis.write_dendrogram_csv(rows, out / "dendrogram_rows.csv", out / "dendrogram_rows_leaves.csv")
        clusters = analysis.cut_tree(rows, bank.space.class_count)
        p = analysis.purity(clusters, [c.class_id for c in bank.combos])
        print(f"row dendrogram: class purity at {bank.space.class_count} clusters = {p:.4f}")
    if args.hac in ("cols", "both"):
        cols = analysis.hac(unit.T)
        analysis.write_dendrogram_csv(cols, out / "dendrogram_cols.csv", out / "dendrogram_cols_leaves.csv")
    if args.hac == "both":
        plotting.clustered_heatmap(unit, rows, cols, labels, out / "prototype_heatmap.png")
    if args.project:
        pts = [unit]
        kinds = [("prototype", i, c.as_tuple()) for i, c in enumerate(bank.combos)]
        if cfg.data or args.data:
            if args.data:
                cfg.data = str(Path(args.data).resolve())
                cfg.vocabulary = None
            ds, _ = load_dataset(cfg)
            segs = ds.select(args.split, labelled=True)
            V = embed_all(params, segs)
            pts.append(V / np.linalg.norm(V, axis=1, keepdims=True))
            kinds += [("instance", s.instance_id, s.attrs.as_tuple()) for s in segs]
        proj = analysis.pca_2d(np.vstack(pts), seed=seed)
        write_rows(out / "projection.csv", ["kind", "id", "class", "sex", "age_bin", "pc1", "pc2"],
                   [(k, i, *a, float(x), float(y)) for (k, i, a), (x, y) in zip(kinds, proj.coords)])
        M = bank.M
        inst = proj.coords[M:]
        plotting.projection(inst if len(inst) else proj.coords[:M],
                            [a[0] for _, _, a in kinds[M:]] if len(inst) else [c.class_id for c in bank.combos],
                            out / "projection.png", proto_coords=proj.coords[:M],
                            proto_classes=[c.class_id for c in bank.combos], explained=proj.explained)
    write_manifest(run, f"analyze_seed{seed}", [], [seed])
    return EXIT_OK


# --- argument parsing ------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated integer list, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="crocs", description="Clinical prototype learning, clustering and retrieval.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate a synthetic segment dataset")
    g.add_argument("--out", required=True, help="existing output directory")
    g.add_argument("--name", default="data")
    g.add_argument("--patients", type=int, default=200)
    g.add_argument("--segments", type=int, default=5, help="segments per patient")
    g.add_argument("--length", type=int, default=512, help="samples per segment (D)")
    g.add_argument("--noise", type=float, default=0.15)
    g.add_argument("--classes", type=int, default=4)
    g.add_argument("--sexes", type=int, default=2)
    g.add_argument("--age-bins", type=int, default=4)
    g.add_argument("--norm", choices=[m.value for m in NormMode], default="minmax")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train encoder and prototypes")
    t.add_argument("--config", help="JSON run configuration")
    t.add_argument("--data")
    t.add_argument("--out", help="run directory")
    t.add_argument("--ablation", choices=["hard", "soft", "soft_reg"])
    t.add_argument("--tau-omega", help="positive number or 'inf'")
    t.add_argument("--label-fraction", type=float)
    t.add_argument("--epochs", type=int)
    t.add_argument("--embedding-dim", type=int)
    t.add_argument("--beta", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--norm", choices=[m.value for m in NormMode])
    t.add_argument("--seeds", help="comma-separated seeds")
    t.add_argument("--checkpoint-every", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="clustering and retrieval metrics for a run")
    e.add_argument("--run", required=True)
    e.add_argument("--data", help="override the run's dataset")
    e.add_argument("--split", choices=[VAL, "test", TRAIN], default=VAL)
    e.add_argument("--query", choices=list(evaluation.QUERIES), default="cp")
    e.add_argument("--k", help="comma-separated K values (default from config)")
    e.add_argument("--seeds", type=int, help="use the first N seeds of the run")
    e.add_argument("--baselines", action="store_true", help="also report k-means on raw signals and embeddings")
    e.add_argument("--no-normalize", action="store_true", help="skip L2 normalisation before distances")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("analyze", help="dendrograms and projections of trained prototypes")
    a.add_argument("--run", required=True)
    a.add_argument("--seed", type=int)
    a.add_argument("--hac", choices=["rows", "cols", "both"])
    a.add_argument("--project", action="store_true")
    a.add_argument("--data", help="dataset whose embeddings join the projection")
    a.add_argument("--split", choices=[VAL, "test", TRAIN], default=VAL)
    a.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"crocs: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"crocs: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
