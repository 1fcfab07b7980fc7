"""Command-line entry point.

Subcommands:
  run                train one scheme (local / centralized / fdml) end to end
  verify             run the built-in synthetic verification suites
  serve-coordinator  host the prediction-matrix server over TCP
  serve-worker       run one party's training agent against a remote coordinator
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from fdml import figures, metrics, verify
from fdml.baselines import synchronous_train
from fdml.config import ConfigError, TrainingConfig, read_config_file
from fdml.coordinator import Coordinator
from fdml.data import VerticalPartition, load_split
from fdml.model import submodel_from_name
from fdml.schedule import SampleSchedule
from fdml.transport import CoordinatorServer, SocketCarrier
from fdml.worker import Worker, party_store, run_training
from fdml.privacy import NoiseSpec

log = logging.getLogger("fdml")

A9A_FEATURES = 124
A9A_SPLIT = (67, 57)


def _setup_logging():
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("FDML_LOG", "error").lower(), logging.ERROR)
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--model", choices=("lr", "nn"))
    p.add_argument("--parties", type=int)
    p.add_argument("--tau", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--reduction", choices=("sum", "mean"))
    p.add_argument("--noise-mechanism", choices=("none", "laplace", "gaussian"))
    p.add_argument("--noise-level", type=float)
    p.add_argument("--noise-seed", type=int)
    p.add_argument("--deterministic", action="store_const", const=True, default=None)
    p.add_argument("--carrier", choices=("inprocess", "socket"))
    p.add_argument("--partition", dest="partition_file", help="JSON partition spec")
    p.add_argument("--partition-sizes", help="comma-separated party sizes, e.g. 67,57")


def _add_data_flags(p: argparse.ArgumentParser):
    p.add_argument("--data", help="directory containing svmlight files a9a and a9a.t")
    p.add_argument("--train", dest="train_path", help="svmlight training file")
    p.add_argument("--test", dest="test_path", help="svmlight test file")
    p.add_argument("--features", type=int, help="pin the total feature dimension")


def _build_config(args) -> TrainingConfig:
    overrides = {}
    for name in ("model", "parties", "tau", "eta", "lam", "batch", "epochs", "seed",
                 "hidden", "reduction", "noise_mechanism", "noise_level", "noise_seed",
                 "deterministic", "carrier", "partition_file"):
        overrides[name] = getattr(args, name, None)
    if getattr(args, "partition_sizes", None):
        overrides["partition_sizes"] = tuple(int(x) for x in args.partition_sizes.split(","))
    if getattr(args, "mode", None):
        overrides["mode"] = args.mode
    base = read_config_file(args.config) if getattr(args, "config", None) else {}
    cfg = TrainingConfig(**base)
    return cfg.with_overrides(**overrides)


def _resolve_paths(args):
    if args.train_path and args.test_path:
        return Path(args.train_path), Path(args.test_path), args.features
    if args.data:
        d = Path(args.data)
        return d / "a9a", d / "a9a.t", args.features or A9A_FEATURES
    raise ConfigError("provide --data DIR or both --train and --test")


def _load(args, cfg):
    train_path, test_path, features = _resolve_paths(args)
    if cfg.partition_sizes:
        features = max(features or 0, sum(cfg.partition_sizes))
    split = load_split(train_path, test_path, n_features=features)
    d = split.n_features
    if cfg.partition_file:
        partition = VerticalPartition.from_json(cfg.partition_file, d)
    elif cfg.partition_sizes:
        partition = VerticalPartition.from_sizes(d, cfg.partition_sizes)
    elif d == A9A_FEATURES and cfg.parties == 2:
        partition = VerticalPartition.from_sizes(d, A9A_SPLIT)
    else:
        partition = VerticalPartition.even(d, cfg.parties)
    if partition.n_parties != cfg.parties:
        raise ConfigError(
            f"partition has {partition.n_parties} parties, config says {cfg.parties}")
    return split, partition


def _stores(split, partition, kind, parties=None):
    parties = range(partition.n_parties) if parties is None else parties
    train = [party_store(kind, partition.slice_matrix(split.train.matrix, j)) for j in parties]
    test = [party_store(kind, partition.slice_matrix(split.test.matrix, j)) for j in parties]
    return train, test


def _write_outputs(rows, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "metrics.csv"
    metrics.write_metrics_csv(csv_path, rows)
    summary = metrics.summary_table(rows)
    (out / "summary.txt").write_text(summary)
    fig_path = figures.render_training_curves(rows, out / "training_curves.png")
    return csv_path, summary, fig_path


def cmd_run(args) -> int:
    cfg = _build_config(args)
    split, partition = _load(args, cfg)
    kind_probe = submodel_from_name(cfg.model, hidden=cfg.hidden, use_bias=cfg.use_bias)

    if cfg.mode == "local":
        train, test = _stores(split, partition, kind_probe, parties=[0])
        single = cfg.with_overrides(parties=1)
        result = synchronous_train(train, split.train.labels, test, split.test.labels,
                                   single, scheme=f"{cfg.model} local")
    elif cfg.mode == "centralized":
        whole = VerticalPartition.even(split.n_features, 1)
        train, test = _stores(split, whole, kind_probe)
        single = cfg.with_overrides(parties=1)
        result = synchronous_train(train, split.train.labels, test, split.test.labels,
                                   single, scheme=f"{cfg.model} centralized")
    elif cfg.mode == "fdml":
        train, test = _stores(split, partition, kind_probe)
        result = run_training(train, split.train.labels, test, split.test.labels,
                              cfg, scheme=f"{cfg.model} fdml")
    else:
        raise ConfigError(f"unknown mode {cfg.mode!r}")

    csv_path, summary, fig_path = _write_outputs(result.trace, args.out)
    print(summary, end="")
    print(f"metrics: {csv_path}\nfigure: {fig_path}")
    return 0


def cmd_verify(args) -> int:
    names = [s for chunk in (args.suite or []) for s in chunk.split(",") if s]
    results = verify.run_suites(names or None)
    ok = True
    for name, passed, detail in results:
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
        ok = ok and passed
    return 0 if ok else 1


def _parse_hostport(text: str):
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


def cmd_serve_coordinator(args) -> int:
    cfg = _build_config(args)
    if args.samples:
        n = args.samples
    else:
        split, _ = _load(args, cfg)
        n = split.train.n_samples
    host, port = _parse_hostport(args.listen)
    coordinator = Coordinator(n, cfg.parties, cfg.tau)
    server = CoordinatorServer(coordinator, host=host, port=port, status_port=args.status_port)
    schedule = SampleSchedule(cfg.seed, n, cfg.batch, cfg.epochs)
    total = schedule.total_steps
    print(f"coordinator on {server.host}:{server.port} "
          f"(status {server.status_port}); waiting for {cfg.parties} workers, T={total}")
    try:
        while coordinator.slowest_iteration() < total:
            time.sleep(0.2)
        time.sleep(0.5)  # let final pulls drain
    finally:
        server.stop()
    print("all workers finished")
    return 0


def cmd_serve_worker(args) -> int:
    cfg = _build_config(args)
    split, partition = _load(args, cfg)
    j = args.party_id
    kind = submodel_from_name(cfg.model, hidden=cfg.hidden, use_bias=cfg.use_bias)
    store = party_store(kind, partition.slice_matrix(split.train.matrix, j))
    schedule = SampleSchedule(cfg.seed, split.train.n_samples, cfg.batch, cfg.epochs)
    host, port = _parse_hostport(args.coordinator)
    carrier = SocketCarrier(host, port)
    noise = NoiseSpec(cfg.noise_mechanism, cfg.noise_level, cfg.noise_seed + j) \
        if cfg.noise_level > 0 and cfg.noise_mechanism != "none" else NoiseSpec()
    worker = Worker(j, kind, store, split.train.labels, schedule, carrier,
                    eta=cfg.base_rate, lam=cfg.lam, reduction=cfg.reduction, noise=noise)
    try:
        worker.run()
    finally:
        carrier.close()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / f"party{j}_block.npy", worker.params)
    print(f"worker {j} finished {schedule.total_steps} iterations; "
          f"block saved to {out / f'party{j}_block.npy'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdml",
                                     description="Feature-distributed model training")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train one scheme end to end")
    p_run.add_argument("--mode", choices=("local", "centralized", "fdml"), default="fdml")
    p_run.add_argument("--out", default="out", help="output directory for CSV/figures")
    _add_data_flags(p_run)
    _add_config_flags(p_run)
    p_run.set_defaults(fn=cmd_run)

    p_ver = sub.add_parser("verify", help="run built-in verification suites")
    p_ver.add_argument("--suite", action="append",
                       help=f"comma-separated subset of {','.join(verify.SUITES)}")
    p_ver.set_defaults(fn=cmd_verify)

    p_coord = sub.add_parser("serve-coordinator", help="host the prediction matrix over TCP")
    p_coord.add_argument("--listen", required=True, help="HOST:PORT to bind")
    p_coord.add_argument("--status-port", type=int, default=None)
    p_coord.add_argument("--samples", type=int, help="training sample count (else read from data)")
    _add_data_flags(p_coord)
    _add_config_flags(p_coord)
    p_coord.set_defaults(fn=cmd_serve_coordinator)

    p_work = sub.add_parser("serve-worker", help="run one party against a remote coordinator")
    p_work.add_argument("--coordinator", required=True, help="HOST:PORT of the coordinator")
    p_work.add_argument("--party-id", type=int, required=True)
    p_work.add_argument("--out", default="out")
    _add_data_flags(p_work)
    _add_config_flags(p_work)
    p_work.set_defaults(fn=cmd_serve_worker)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - CLI boundary
        log.debug("unhandled failure", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
