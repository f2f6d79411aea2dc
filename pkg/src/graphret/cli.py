"""Command-line entry point: ``graphret <command> ...``.

Commands: ``synth``, ``build-graphs``, ``train``, ``retrieve``, ``eval``.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every command writes a JSON manifest (config hash and seed) next to its
output so the run can be repeated.

The training config is a JSON file::

    {
      "seed": 0,
      "paths": {"corpus": "corpus.jsonl", "labels": "train_labels.jsonl",
                "checkpoint": "run/model.ckpt", "report_dir": "run"},
      "encoder": {"kind": "hashing", "dim": 32, "normalize": true, "seed": 0},
      "model": {"layer_dims": [32, 32], "n_heads": 2, "readout": "virtual_global",
                "variant": "edgegat", "dropout": 0.1, "virtual_node": true},
      "train": {"tau": 0.1, "n_easy": 1, "m_hard": 5, "batch_size": 16,
                "learning_rate": 0.005, "weight_decay": 0.0001, "epochs": 20,
                "similarity": "dot", "checkpoint_every": 5},
      "retrieval": {"first_stage_k": 10}
    }

Relative paths are resolved against the config file's directory. Only
``seed`` and ``paths.corpus``/``paths.labels``/``paths.checkpoint`` are
required; everything else falls back to the defaults shown.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .encoder import HashingEncoder, TableEncoder
from .estimator import EdgeGATRetriever
from .graph import GraphBuilder, GraphConstructionError
from .io import DataError, iter_cases, iter_jsonl, load_cases, load_labels, load_query_ids, save_labels, write_jsonl
from .metrics import evaluate, format_report
from .model import CheckpointFormatError
from .ranking import RankedList
from .synth import SynthConfig, generate
from .training import NumericalError

log = logging.getLogger("graphret")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

MODEL_KEYS = ("layer_dims", "n_heads", "readout", "variant", "dropout", "virtual_node")
TRAIN_KEYS = (
    "tau", "n_easy", "m_hard", "batch_size", "learning_rate",
    "weight_decay", "epochs", "similarity",
)


class ConfigError(DataError):
    """Invalid run configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def config_hash(cfg) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def write_manifest(path, command: str, config: dict, seed, outputs: dict) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": config,
        "config_sha256": config_hash(config),
        "outputs": {k: str(v) for k, v in outputs.items()},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _manifest_for(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _encoder(cfg: dict, base: Path):
    cfg = dict(cfg)
    kind = cfg.pop("kind", "hashing")
    if kind == "hashing":
        return HashingEncoder(**cfg).fit()
    if kind == "table":
        path = base / cfg.pop("path")
        fallback = cfg.pop("fallback", None)
        fb = HashingEncoder(**fallback).fit() if fallback else None
        return TableEncoder(path=str(path), fallback=fb, **cfg).fit()
    raise ConfigError(f"unknown encoder kind {kind!r}")


# -- commands -------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = SynthConfig(n_cases=args.n_cases, n_clusters=args.n_clusters, seed=args.seed)
    cases, train_labels, test_labels = generate(cfg)
    out = Path(args.out)
    write_jsonl(out / "corpus.jsonl", (c.to_dict() for c in cases))
    save_labels(out / "train_labels.jsonl", train_labels)
    save_labels(out / "test_labels.jsonl", test_labels)
    write_manifest(
        out / "manifest.json", "synth", vars(cfg), cfg.seed,
        {"corpus": "corpus.jsonl", "train_labels": "train_labels.jsonl", "test_labels": "test_labels.jsonl"},
    )
    print(f"wrote {len(cases)} cases, {len(train_labels)} train and {len(test_labels)} test queries to {out}")
    return EXIT_OK


def cmd_build_graphs(args) -> int:
    enc_cfg = {"kind": "hashing", "dim": args.dim, "normalize": not args.no_normalize, "seed": args.encoder_seed}
    builder = GraphBuilder(_encoder(enc_cfg, Path.cwd()), virtual_node=not args.no_virtual_node)
    records = []
    for lineno, case in iter_cases(args.corpus):
        try:
            fact, issue = builder.build_case(case)
        except (GraphConstructionError, ValueError) as exc:
            raise DataError(f"{args.corpus}:{lineno}: {exc}") from None
        for section, g in (("fact", fact), ("issue", issue)):
            records.append({"case_id": case.case_id, "section": section, "graph": g.to_dict()})
    out = Path(args.out)
    write_jsonl(out, records)
    config = {"corpus": str(args.corpus), "encoder": enc_cfg, "virtual_node": not args.no_virtual_node}
    write_manifest(_manifest_for(out), "build-graphs", config, args.encoder_seed, {"graphs": out})
    print(f"wrote {len(records)} graphs to {out}")
    return EXIT_OK


def load_run_config(path) -> tuple[dict, Path]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such config file: {path}")
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    if "seed" not in cfg or not isinstance(cfg["seed"], int):
        raise ConfigError(f"{path}: an integer 'seed' is required")
    paths = cfg.get("paths", {})
    for key in ("corpus", "labels", "checkpoint"):
        if key not in paths:
            raise ConfigError(f"{path}: paths.{key} is required")
    for section, allowed in (("model", MODEL_KEYS), ("train", TRAIN_KEYS + ("checkpoint_every",))):
        unknown = set(cfg.get(section, {})) - set(allowed)
        if unknown:
            raise ConfigError(f"{path}: unknown {section} keys {sorted(unknown)}")
    return cfg, path.parent


def estimator_from_config(cfg: dict, base: Path) -> EdgeGATRetriever:
    enc_cfg = dict(cfg.get("encoder", {}))
    encoder = _encoder(enc_cfg, base)
    params = {k: v for k, v in cfg.get("model", {}).items()}
    if "layer_dims" in params:
        params["layer_dims"] = tuple(params["layer_dims"])
    params.update({k: v for k, v in cfg.get("train", {}).items() if k in TRAIN_KEYS})
    params["first_stage_k"] = cfg.get("retrieval", {}).get("first_stage_k", 10)
    est = EdgeGATRetriever(seed=cfg["seed"], dim=encoder.dim, encoder=encoder, **params)
    try:
        est.model_config()
        est.train_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return est


def cmd_train(args) -> int:
    cfg, base = load_run_config(args.config)
    paths = cfg["paths"]
    corpus = load_cases(base / paths["corpus"])
    labels = load_labels(base / paths["labels"])
    ckpt = base / paths["checkpoint"]
    report_dir = base / paths.get("report_dir", Path(paths["checkpoint"]).parent)
    every = int(cfg.get("train", {}).get("checkpoint_every", 5))

    est = estimator_from_config(cfg, base)
    extra = {"config_sha256": config_hash(cfg)}
    stats_path = report_dir / "epochs.jsonl"
    report_dir.mkdir(parents=True, exist_ok=True)
    stats_fh = stats_path.open("w", encoding="utf-8")

    def on_epoch(stats):
        stats_fh.write(json.dumps(stats, sort_keys=True) + "\n")
        stats_fh.flush()
        print(f"epoch {stats['epoch']:3d}  loss {stats['mean_loss']:.5f}")
        if every and (stats["epoch"] + 1) % every == 0:
            est.save(ckpt, extra)

    try:
        est.fit(corpus, labels, callback=on_epoch)
    finally:
        stats_fh.close()
    est.save(ckpt, extra)
    write_manifest(
        report_dir / "manifest.json", "train", cfg, cfg["seed"],
        {"checkpoint": ckpt, "epochs": stats_path},
    )
    print(f"saved checkpoint to {ckpt}")
    return EXIT_OK


def cmd_retrieve(args) -> int:
    est = EdgeGATRetriever.load(args.checkpoint)
    if args.first_stage_k is not None:
        est.first_stage_k = args.first_stage_k
    corpus = load_cases(args.corpus)
    by_id = {c.case_id: c for c in corpus}
    qids = load_query_ids(args.queries)
    missing = [q for q in qids if q not in by_id]
    if missing:
        raise DataError(f"{args.queries}: query ids not in corpus: {missing[:5]}")
    rankings = est.rank([by_id[q] for q in qids], corpus, two_stage=args.two_stage, k=args.k)
    out = Path(args.out)
    write_jsonl(out, (r.to_record() for r in rankings))
    config = {
        "checkpoint": str(args.checkpoint), "corpus": str(args.corpus), "queries": str(args.queries),
        "two_stage": args.two_stage, "k": args.k, "first_stage_k": est.first_stage_k,
    }
    write_manifest(_manifest_for(out), "retrieve", config, est.seed, {"rankings": out})
    print(f"wrote {len(rankings)} rankings to {out}")
    return EXIT_OK


def load_rankings(path) -> list[RankedList]:
    out = []
    for lineno, rec in iter_jsonl(path):
        try:
            out.append(RankedList.from_record(rec))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: bad ranking record ({exc})") from None
    return out


def cmd_eval(args) -> int:
    rankings = load_rankings(args.rankings)
    labels = load_labels(args.labels)
    try:
        report = evaluate(rankings, labels, cutoff=args.cutoff, macro_f1=args.macro_f1)
    except KeyError as exc:
        raise DataError(f"{args.rankings}: {exc.args[0]}") from None
    print(format_report(report))
    if args.out:
        out = Path(args.out)
        records = [{"metric": k, "value": v} for k, v in report.as_dict().items()]
        records.append({"metric": "n_queries", "value": report.n_queries})
        write_jsonl(out, records)
        config = {"rankings": str(args.rankings), "labels": str(args.labels), "cutoff": args.cutoff,
                  "macro_f1": args.macro_f1}
        write_manifest(_manifest_for(out), "eval", config, None, {"report": out})
    return EXIT_OK


# -- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="graphret", description="Graph-based case retrieval")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate the synthetic cluster corpus")
    s.add_argument("--n-cases", type=int, default=100)
    s.add_argument("--n-clusters", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("build-graphs", help="build fact and issue graphs for a corpus")
    s.add_argument("corpus")
    s.add_argument("out")
    s.add_argument("--dim", type=int, default=32)
    s.add_argument("--encoder-seed", type=int, default=0)
    s.add_argument("--no-normalize", action="store_true")
    s.add_argument("--no-virtual-node", action="store_true")
    s.set_defaults(func=cmd_build_graphs)

    s = sub.add_parser("train", help="train a model from a JSON config")
    s.add_argument("config")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("retrieve", help="rank the corpus for each query")
    s.add_argument("checkpoint")
    s.add_argument("corpus")
    s.add_argument("queries", help="JSON lines with a query_id field (a labels file works)")
    s.add_argument("--two-stage", action="store_true", help="rerank BM25's top candidates")
    s.add_argument("--k", type=int, default=None, help="truncate rankings to k items")
    s.add_argument("--first-stage-k", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_retrieve)

    s = sub.add_parser("eval", help="score rankings against labels")
    s.add_argument("rankings")
    s.add_argument("labels")
    s.add_argument("--cutoff", type=int, default=5)
    s.add_argument("--macro-f1", choices=("harmonic_of_means", "mean_f1"), default="harmonic_of_means")
    s.add_argument("--out", default=None, help="write the report as JSON lines")
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    for name in ("k", "first_stage_k", "cutoff", "n_cases", "n_clusters", "dim"):
        value = getattr(args, name, None)
        if value is not None and value < 1:
            parser.error(f"--{name.replace('_', '-')} must be >= 1")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DataError, CheckpointFormatError, GraphConstructionError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
