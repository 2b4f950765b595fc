"""Command-line pipeline: gen, build, queries, analyze, train, eval, ablate, baseline.

Every subcommand reads one run configuration (see :mod:`infnet.config`),
writes its artifacts under the output directory, merges its numbers into
``run_summary.json`` and prints a one-line summary on stdout. Logging goes
to stderr; its level comes from the ``INFNET_LOG`` environment variable
(DEBUG, INFO, WARNING, ERROR; default INFO).

Output layout::

    <out>/config.resolved.yaml   effective configuration, paths omitted
    <out>/logs/                  gen: catalog.txt diffusion.txt browse.txt purchase.txt
    <out>/network.snap           build
    <out>/queries.txt            queries
    <out>/analysis/              analyze: report.txt plus five CSV tables
    <out>/model.ckpt, model.json train: best-validation parameters and their config
    <out>/train_report.txt       train
    <out>/eval_report.txt        eval
    <out>/baseline_report.txt    baseline
    <out>/ablation.txt           ablate
    <out>/run_summary.json       all subcommands

Report files hold no timings and no absolute paths, so two runs with the same
configuration in 64-bit mode produce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Callable

import numpy as np
import yaml

from . import __version__
from . import numerics as nx
from .analytics import analyze
from .config import RunConfig, derive_seed
from .eval import (
    LRFeatures,
    QueryDataset,
    TrainingDivergence,
    ablate,
    ablation_table,
    evaluate,
    lr_baseline,
    split_queries,
    train,
)
from .eval.metrics import MetricResult
from .events import (
    ConfigError,
    ItemCatalog,
    PurchaseIndex,
    SnapshotVersionError,
    build_dynamic_network,
    load_network,
    load_queries,
    load_records,
    materialize_queries,
    save_network,
    save_queries,
    write_records,
)
from .model import InfNet, ModelConfig
from .numerics.checkpoint import load_arrays, save_arrays
from .sampler import SubgraphSampler
from .synth import generate

log = logging.getLogger("infnet")

SUMMARY_SCHEMA = 1
MODEL_META_VERSION = 1
LOG_KINDS = ("catalog", "diffusion", "browse", "purchase")


class PipelineError(RuntimeError):
    """A missing or inconsistent artifact; the message names it."""


# ---- output directory -------------------------------------------------------------


class OutputLock:
    """Exclusive lock file in the output directory.

    A lock left behind by a dead process is taken over.
    """

    def __init__(self, directory: Path):
        self.path = directory / ".infnet.lock"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        for _ in range(2):
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            except FileExistsError:
                holder = self._holder()
                if holder is not None and _alive(holder):
                    raise PipelineError(f"output directory {self.path.parent} is locked by process {holder}") from None
                log.warning("removing stale lock %s", self.path)
                self.path.unlink(missing_ok=True)
                continue
            with os.fdopen(fd, "w") as fh:
                fh.write(f"{os.getpid()}\n")
            return self
        raise PipelineError(f"could not lock output directory {self.path.parent}")

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)

    def _holder(self) -> int | None:
        try:
            return int(self.path.read_text().strip())
        except (OSError, ValueError):
            return None


def _alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except (ProcessLookupError, OverflowError):
        return False
    except PermissionError:
        return True
    return True


def _update_summary(cfg: RunConfig, command: str, values: dict) -> None:
    path = cfg.out / "run_summary.json"
    doc = {"schema": SUMMARY_SCHEMA, "commands": {}}
    if path.exists():
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            log.warning("replacing unreadable %s", path)
    doc["schema"] = SUMMARY_SCHEMA
    doc["version"] = __version__
    doc["seed"] = cfg["seed"]
    doc["precision"] = cfg["precision"]
    doc.setdefault("commands", {})[command] = values
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _fmt(x) -> str:
    return "n/a" if x is None else f"{x:.4f}"


def _metric_block(name: str, res: MetricResult) -> list[str]:
    lines = [f"{name}: n={res.n} positives={res.n_pos} auc_roc={_fmt(res.auc_roc)} auc_pr={_fmt(res.auc_pr)}"]
    for stratum, sub in sorted(res.strata.items()):
        if sub is None:
            lines.append(f"  {stratum}: no queries")
        else:
            lines.append(f"  {stratum}: n={sub.n} positives={sub.n_pos} auc_roc={_fmt(sub.auc_roc)} auc_pr={_fmt(sub.auc_pr)}")
    return lines


# ---- inputs -----------------------------------------------------------------------


def _need(path: Path, what: str, producer: str) -> Path:
    if not path.exists():
        raise PipelineError(f"missing {what} {path}; run `infnet {producer}` first")
    return path


def _logs(cfg: RunConfig, *kinds: str) -> dict[str, list]:
    d = cfg.logs_dir
    producer = "gen" if cfg["paths.logs"] is None else "gen (or set paths.logs)"
    return {k: load_records(_need(d / f"{k}.txt", f"{k} log", producer), k) for k in kinds}


def _network(cfg: RunConfig):
    return load_network(_need(cfg.out / "network.snap", "network snapshot", "build"))


def _queries(cfg: RunConfig):
    return load_queries(_need(cfg.out / "queries.txt", "query file", "queries"))


class _Inputs:
    """Everything model training and scoring read, loaded once."""

    def __init__(self, cfg: RunConfig):
        self.network = _network(cfg)
        self.queries = _queries(cfg)
        logs = _logs(cfg, "catalog", "purchase")
        self.catalog = ItemCatalog(logs["catalog"])
        self.purchases = PurchaseIndex(logs["purchase"])
        self.features = cfg.features(self.catalog)
        self.split = split_queries(self.queries, derive_seed(cfg["seed"], "split"), cfg["split.train_ratio"])
        self._data = None
        self._depth = cfg["sampler.depth"]

    @property
    def data(self) -> QueryDataset:
        if self._data is None:
            sampler = SubgraphSampler(self.network, self.catalog, self.purchases, self.features, self._depth)
            log.info("sampling %d query sub-graphs", len(self.queries))
            self._data = QueryDataset.build(self.queries, sampler)
        return self._data


# ---- subcommands ------------------------------------------------------------------


def cmd_gen(cfg: RunConfig) -> str:
    scfg = cfg.synth()
    log.info("generating logs for %d users and %d items", scfg.n_users, scfg.n_items)
    logs = generate(scfg)
    d = cfg.out / "logs"
    d.mkdir(parents=True, exist_ok=True)
    for kind in LOG_KINDS:
        write_records(d / f"{kind}.txt", getattr(logs, kind), kind)
    counts = {k: len(getattr(logs, k)) for k in LOG_KINDS}
    g = logs.grid
    _update_summary(cfg, "gen", {**counts, "grid": {"start": g.start, "step_length": g.step_length, "steps": g.n}})
    return "gen: " + " ".join(f"{k}={v}" for k, v in counts.items())


def cmd_build(cfg: RunConfig) -> str:
    records = _logs(cfg, "diffusion")["diffusion"]
    net = build_dynamic_network(records, cfg.grid())
    save_network(cfg.out / "network.snap", net)
    stats = {
        "steps": net.n_steps,
        "users": len(net.users),
        "items": len(net.items),
        "events": net.event_count(),
        "dropped": net.dropped,
    }
    _update_summary(cfg, "build", stats)
    return "build: " + " ".join(f"{k}={v}" for k, v in stats.items())


def cmd_queries(cfg: RunConfig) -> str:
    net = _network(cfg)
    purchases = PurchaseIndex(_logs(cfg, "purchase")["purchase"])
    qs = [q for step in range(1, net.n_steps) for q in materialize_queries(net, purchases, step)]
    save_queries(cfg.out / "queries.txt", qs)
    per_step = {str(s): sum(q.step == s for q in qs) for s in range(1, net.n_steps)}
    stats = {
        "total": len(qs),
        "positive": sum(q.label for q in qs),
        "cold": sum(q.cold for q in qs),
        "per_step": per_step,
    }
    _update_summary(cfg, "queries", stats)
    return f"queries: total={stats['total']} positive={stats['positive']} cold={stats['cold']}"


def cmd_analyze(cfg: RunConfig) -> str:
    logs = _logs(cfg, *LOG_KINDS)
    report = analyze(ItemCatalog(logs["catalog"]), logs["diffusion"], logs["browse"], logs["purchase"], cfg.horizon())
    d = cfg.out / "analysis"
    d.mkdir(parents=True, exist_ok=True)
    (d / "report.txt").write_text(report.to_text(), encoding="utf-8")
    report.write_csv(d)
    t, b = report.totals["taocode"], report.totals["browse"]
    nb, tg = report.neighbor_sign_test(), report.temporal_sign_test()
    stats = {
        "ci_taocode": t.ci,
        "ci_browse": b.ci,
        "taocode_vs_browse_p": report.taocode_vs_browse_p(),
        "lift_slope": report.lift.slope if report.lift else None,
        "lift_spearman": report.lift.spearman if report.lift else None,
        "lift_spearman_p": report.lift.spearman_p if report.lift else None,
        "close_neighbor_sign_p": nb.pvalue,
        "temporal_sign_p": tg.pvalue,
    }
    _update_summary(cfg, "analyze", stats)
    return f"analyze: ci_taocode={t.ci:.2f} ci_browse={b.ci:.2f} report={Path('analysis') / 'report.txt'}"


def _model_meta(model_cfg: ModelConfig, node_dim: int, n_bins: int) -> dict:
    return {
        "version": MODEL_META_VERSION,
        "node_dim": node_dim,
        "n_bins": n_bins,
        "hidden": model_cfg.hidden,
        "structural_layers": model_cfg.structural_layers,
        "diffusion_layers": model_cfg.diffusion_layers,
        "encoder": model_cfg.encoder,
        "use_edge_attention": model_cfg.use_edge_attention,
        "use_structural_block": model_cfg.use_structural_block,
        "masks": sorted(model_cfg.masks),
    }


def cmd_train(cfg: RunConfig) -> str:
    inp = _Inputs(cfg)
    model_cfg = cfg.model()
    data = inp.data
    res = train(model_cfg, data, inp.split, cfg.train())
    save_arrays(cfg.out / "model.ckpt", res.model.state_dict())
    meta = _model_meta(model_cfg, data.node_dim, data.n_bins)
    (cfg.out / "model.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    lines = [f"best epoch {res.best_epoch} of {len(res.history)}"]
    for e in res.history:
        lines.append(
            f"epoch {e.epoch:3d}  train_loss {e.train_loss:.6f}  val_loss {e.val_loss:.6f}"
            f"  val_roc {_fmt(e.val_auc_roc)}  val_pr {_fmt(e.val_auc_pr)}"
        )
    lines += _metric_block("validation", res.validation) + _metric_block("test", res.test)
    (cfg.out / "train_report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _update_summary(
        cfg,
        "train",
        {
            "best_epoch": res.best_epoch,
            "epochs": len(res.history),
            "validation": res.validation.as_dict(),
            "test": res.test.as_dict(),
        },
    )
    return f"train: best_epoch={res.best_epoch} test_auc_roc={_fmt(res.test.auc_roc)} test_auc_pr={_fmt(res.test.auc_pr)}"


def _load_model(cfg: RunConfig) -> InfNet:
    ckpt = _need(cfg.out / "model.ckpt", "model checkpoint", "train")
    meta_path = _need(cfg.out / "model.json", "model description", "train")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    if meta.get("version") != MODEL_META_VERSION:
        raise SnapshotVersionError(
            f"{meta_path}: model description version {meta.get('version')}, this build reads version {MODEL_META_VERSION}"
        )
    model_cfg = ModelConfig(
        hidden=meta["hidden"],
        structural_layers=meta["structural_layers"],
        diffusion_layers=meta["diffusion_layers"],
        encoder=meta["encoder"],
        use_edge_attention=meta["use_edge_attention"],
        use_structural_block=meta["use_structural_block"],
        masks=frozenset(meta["masks"]),
    )
    model = InfNet(model_cfg, meta["node_dim"], meta["n_bins"])
    model.load_state_dict(load_arrays(ckpt))
    return model


def cmd_eval(cfg: RunConfig) -> str:
    model = _load_model(cfg)
    inp = _Inputs(cfg)
    data = inp.data
    if (data.node_dim, data.n_bins) != (model.node_dim, model.n_bins):
        raise PipelineError(
            f"model expects {model.n_bins} price bins but features.bins gives {data.n_bins}; retrain or fix the config"
        )
    res, scores = evaluate(model, data, inp.split.test)
    lines = _metric_block("test", res)
    lines.append("# user item step label score")
    for i, s in zip(inp.split.test, scores):
        q = data.queries[i]
        lines.append(f"{q.user} {q.item} {q.step} {q.label} {s:.10f}")
    (cfg.out / "eval_report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _update_summary(cfg, "eval", {"test": res.as_dict()})
    return f"eval: test_auc_roc={_fmt(res.auc_roc)} test_auc_pr={_fmt(res.auc_pr)} n={res.n}"


def cmd_baseline(cfg: RunConfig) -> str:
    inp = _Inputs(cfg)
    feats = LRFeatures(inp.network, inp.catalog, inp.purchases, inp.features)
    _, res, _ = lr_baseline(inp.queries, inp.split, feats)
    (cfg.out / "baseline_report.txt").write_text("\n".join(_metric_block("test", res)) + "\n", encoding="utf-8")
    _update_summary(cfg, "baseline", {"test": res.as_dict()})
    return f"baseline: test_auc_roc={_fmt(res.auc_roc)} test_auc_pr={_fmt(res.auc_pr)}"


def cmd_ablate(cfg: RunConfig) -> str:
    inp = _Inputs(cfg)
    variants = cfg["ablate.variants"]

    def row_done(row):
        log.info("ablation %s: test_auc_pr=%s", row.name, _fmt(row.result.test.auc_pr))

    rows = ablate(cfg.model(), variants, inp.data, inp.split, cfg.train(), on_row=row_done)
    (cfg.out / "ablation.txt").write_text(ablation_table(rows), encoding="utf-8")
    _update_summary(
        cfg,
        "ablate",
        {
            "rows": [
                {
                    "variant": r.name,
                    "auc_roc": r.result.test.auc_roc,
                    "auc_pr": r.result.test.auc_pr,
                    "best_epoch": r.result.best_epoch,
                }
                for r in rows
            ]
        },
    )
    return f"ablate: {len(rows)} rows ({len(variants)} variants) table=ablation.txt"


COMMANDS: dict[str, tuple[Callable[[RunConfig], str], str]] = {
    "gen": (cmd_gen, "generate synthetic event logs"),
    "build": (cmd_build, "build the dynamic diffusion network snapshot"),
    "queries": (cmd_queries, "materialize labeled queries for every step after the first"),
    "analyze": (cmd_analyze, "observational conversion-index report"),
    "train": (cmd_train, "train InfNet with early stopping on validation AUC-PR"),
    "eval": (cmd_eval, "score the test split with the trained checkpoint"),
    "ablate": (cmd_ablate, "train the base model and every ablation variant on one split"),
    "baseline": (cmd_baseline, "logistic-regression baseline on the same split"),
}

# per-subcommand flags: (flag, config key, type, help, choices)
EXTRA_FLAGS = {
    "gen": [("--users", "synth.n_users", int, "number of synthetic users", None)],
    "analyze": [("--horizon", "analytics.horizon", int, "conversion horizon in seconds", None)],
    "train": [
        ("--hidden-size", "model.hidden_size", int, "hidden size c", (16, 32, 64, 128)),
        ("--epochs", "train.max_epochs", int, "maximum epochs", None),
        ("--encoder", "model.encoder", str, "sequence encoder", ("none", "mean", "gru", "self-attn")),
    ],
    "ablate": [
        ("--hidden-size", "model.hidden_size", int, "hidden size c", (16, 32, 64, 128)),
        ("--epochs", "train.max_epochs", int, "maximum epochs", None),
        ("--variants", "ablate.variants", str, "comma-separated variant names", None),
    ],
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML file of dotted keys (e.g. model.hidden_size: 32)")
    common.add_argument("--out", metavar="DIR", help="output directory (config key paths.out)")
    common.add_argument("--seed", type=int, metavar="N", help="run seed; every component seed derives from it")
    prec = common.add_mutually_exclusive_group()
    prec.add_argument("--f64", dest="precision", action="store_const", const="f64", help="64-bit floats (default)")
    prec.add_argument("--f32", dest="precision", action="store_const", const="f32", help="32-bit floats")
    common.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key; repeatable"
    )
    parser = argparse.ArgumentParser(
        prog="infnet",
        description="Purchase prediction over dynamic interest-diffusion networks. "
        "Set INFNET_LOG=DEBUG|INFO|WARNING|ERROR for log verbosity.",
    )
    parser.add_argument("--version", action="version", version=f"infnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        for flag, key, typ, text, choices in EXTRA_FLAGS.get(name, []):
            p.add_argument(flag, type=typ, choices=choices, dest=key, default=None, help=f"{text} ({key})")
    return parser


def _apply_flags(cfg: RunConfig, args: argparse.Namespace) -> None:
    overrides: list[tuple[str, object, str]] = []
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides.append((key.strip(), value, "--set"))
    if args.out is not None:
        overrides.append(("paths.out", args.out, "--out"))
    if args.seed is not None:
        overrides.append(("seed", args.seed, "--seed"))
    if args.precision is not None:
        overrides.append(("precision", args.precision, f"--{args.precision}"))
    for flag, key, *_ in EXTRA_FLAGS.get(args.command, []):
        value = getattr(args, key)
        if value is not None:
            overrides.append((key, value, flag))
    for key, value, flag in overrides:
        had = cfg[key] if key in cfg.values else None
        cfg.set(key, value)
        log.info("flag %s overrides %s: %r -> %r", flag, key, had, cfg[key])


def _write_resolved(cfg: RunConfig) -> None:
    values = {k: v for k, v in sorted(cfg.values.items()) if not k.startswith("paths.")}
    (cfg.out / "config.resolved.yaml").write_text(yaml.safe_dump(values, sort_keys=False), encoding="utf-8")


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("INFNET_LOG", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    args = build_parser().parse_args(argv)
    fn = COMMANDS[args.command][0]
    try:
        cfg = RunConfig.load(args.config)
        _apply_flags(cfg, args)
        nx.set_default_dtype(cfg.dtype)
        with OutputLock(cfg.out):
            _write_resolved(cfg)
            line = fn(cfg)
    except (ValueError, PipelineError, TrainingDivergence, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"infnet {args.command}: error: {msg}", file=sys.stderr)
        return 2
    finally:
        nx.set_default_dtype(np.float64)
    print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
