"""
Command-line interface.

    pqcexpr generate --count 1500 --out data/random
    pqcexpr label --manifest data/random/manifest.jsonl --samples 1000 --jobs 8
    pqcexpr realamp --out data/realamp
    pqcexpr train --dataset data/random/manifest.jsonl --out-model model.json --out-history history.csv
    pqcexpr eval --model model.json --dataset data/realamp/manifest.jsonl --out eval.csv
    pqcexpr predict --model model.json --circuit data/realamp/circuits/ra-q4-r2-sca.json
    pqcexpr acceptance --out runs/desk --jobs 8

Results go to stdout, logs to stderr. Exit codes: 0 success, 1 usage
error, 2 data error, 3 numeric error.
"""

import json
import sys
from argparse import ArgumentParser, ArgumentTypeError, Namespace
from pathlib import Path
from typing import Optional, Sequence

import structlog
from pydantic import ValidationError

from pqcexpr.acceptance import AcceptanceRecipe, run_acceptance
from pqcexpr.core.errors import PqcExprError
from pqcexpr.core.logging import configure_logging
from pqcexpr.core.settings import Settings
from pqcexpr.expressibility import EstimatorConfig
from pqcexpr.gnn.checkpoint import load_checkpoint, save_checkpoint
from pqcexpr.gnn.model import ModelConfig, predict
from pqcexpr.gnn.train import TrainConfig, train
from pqcexpr.graph import encode, graph_document
from pqcexpr.manifest import read_manifest
from pqcexpr.pipeline import (
    benchmark,
    evaluate,
    label_manifest,
    labeled_graphs,
    read_circuit,
    select_subset,
    write_circuit_set,
)
from pqcexpr.sources import get_source

logger = structlog.get_logger()

USAGE_EXIT = 1


class UsageArgumentParser(ArgumentParser):
    """ArgumentParser whose usage errors exit with status 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise ArgumentTypeError(f"{text!r} is not an integer")
    if value < 1:
        raise ArgumentTypeError(f"{value} must be >= 1")
    return value


def positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ArgumentTypeError(f"{text!r} is not a number")
    if not value > 0:
        raise ArgumentTypeError(f"{value} must be > 0")
    return value


def fraction(text: str) -> float:
    value = positive_float(text)
    if value >= 1:
        raise ArgumentTypeError(f"{value} must be in (0, 1)")
    return value


def _seed(args: Namespace, settings: Settings) -> int:
    return args.seed if args.seed is not None else settings.seed


def cmd_generate(args: Namespace, settings: Settings) -> int:
    max_qubits = args.max_qubits or settings.max_qubits
    max_depth = args.max_depth or settings.max_depth
    if max_qubits > settings.max_qubits:
        raise ArgumentTypeError(f"--max-qubits {max_qubits} exceeds the configured cap {settings.max_qubits}")
    if max_depth < 2:
        raise ArgumentTypeError("--max-depth must be >= 2")
    source = get_source("random", count=args.count, max_qubits=max_qubits, max_depth=max_depth, seed=_seed(args, settings))
    manifest_path = write_circuit_set(source, args.out)
    print(manifest_path)
    return 0


def cmd_realamp(args: Namespace, settings: Settings) -> int:
    manifest_path = write_circuit_set(get_source("realamp"), args.out)
    print(manifest_path)
    return 0


def cmd_label(args: Namespace, settings: Settings) -> int:
    config = EstimatorConfig(
        num_samples=args.samples or settings.num_samples,
        num_bins=args.bins or settings.num_bins,
        mode=args.mode,
        shots=args.shots or settings.shots,
        seed=_seed(args, settings),
    )
    summary = label_manifest(args.manifest, config, jobs=args.jobs or settings.jobs)
    print(f"labeled={summary.labeled} skipped={summary.skipped} failed={summary.failed}")
    return 2 if summary.failed else 0


def cmd_train(args: Namespace, settings: Settings) -> int:
    seed = _seed(args, settings)
    records = [record for path in args.dataset for record in read_manifest(path)]
    graphs = labeled_graphs(records)
    train_config = TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        weight_decay=args.wd,
        batch_size=args.batch,
        train_fraction=args.split,
        seed=seed,
    )
    model, history = train(graphs, train_config, ModelConfig(init_seed=seed))
    save_checkpoint(model, args.out_model)
    Path(args.out_history).parent.mkdir(parents=True, exist_ok=True)
    history.to_frame().to_csv(args.out_history, index=False)
    best = min(history.records, key=lambda record: record.val_loss)
    print(f"best_epoch={best.epoch} val_loss={best.val_loss:.6f} val_rmse={best.val_rmse:.6f}")
    return 0


def cmd_eval(args: Namespace, settings: Settings) -> int:
    model = load_checkpoint(args.model)
    graphs = select_subset(labeled_graphs(read_manifest(args.dataset)), model, args.subset)
    report = evaluate(model, graphs, dataset={"manifest": str(args.dataset), "subset": args.subset})
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        report.to_frame().to_csv(args.out, index=False)
    spearman = "nan" if report.spearman is None else f"{report.spearman:.6f}"
    print(f"circuits={len(report.rows)} rmse={report.rmse:.6f} spearman={spearman}")
    return 0


def cmd_predict(args: Namespace, settings: Settings) -> int:
    model = load_checkpoint(args.model)
    print(f"{predict(model, read_circuit(args.circuit)):.6f}")
    return 0


def cmd_graph(args: Namespace, settings: Settings) -> int:
    circuit_path = Path(args.circuit)
    graph = encode(read_circuit(circuit_path), circuit_id=circuit_path.stem)
    text = json.dumps(graph_document(graph), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_benchmark(args: Namespace, settings: Settings) -> int:
    model = load_checkpoint(args.model)
    records = read_manifest(args.dataset)[:args.limit]
    config = EstimatorConfig(
        num_samples=args.samples or settings.num_samples,
        num_bins=args.bins or settings.num_bins,
        seed=_seed(args, settings),
    )
    result = benchmark(model, records, config)
    print(
        f"circuits={result.circuits} label_seconds={result.label_seconds:.6f} "
        f"predict_seconds={result.predict_seconds:.6f} speedup={result.speedup:.1f}"
    )
    return 0


def cmd_acceptance(args: Namespace, settings: Settings) -> int:
    fields = {
        "count": args.count,
        "num_samples": args.samples,
        "num_bins": args.bins,
        "epochs": args.epochs,
        "learning_rate": args.lr,
        "batch_size": args.batch,
        "jobs": args.jobs,
        "seed": args.seed,
    }
    recipe = AcceptanceRecipe(**{key: value for key, value in fields.items() if value is not None})
    report = run_acceptance(recipe, args.out)
    print(
        f"val_rmse={report.val_rmse:.6f} suite_rmse={report.suite_rmse:.6f} "
        f"suite_spearman={report.suite_spearman} label_noise_rmse={report.label_noise_rmse:.6f} "
        f"passed={report.passed}"
    )
    return 0


def build_parser() -> UsageArgumentParser:
    ap = UsageArgumentParser(prog="pqcexpr", description="Expressibility labels and a GNN surrogate for parameterized circuits")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate random layered circuits")
    p.add_argument("--count", type=positive_int, required=True)
    p.add_argument("--max-qubits", type=positive_int)
    p.add_argument("--max-depth", type=positive_int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("label", help="compute expressibility labels for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--samples", type=positive_int)
    p.add_argument("--bins", type=positive_int)
    p.add_argument("--mode", choices=["exact", "shots"], default="exact")
    p.add_argument("--shots", type=positive_int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=positive_int)
    p.set_defaults(handler=cmd_label)

    p = sub.add_parser("realamp", help="write the 64-circuit RealAmplitudes suite")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_realamp)

    defaults = TrainConfig()
    p = sub.add_parser("train", help="train the GNN regressor")
    p.add_argument("--dataset", required=True, nargs="+", help="labeled manifest(s)")
    p.add_argument("--epochs", type=positive_int, default=defaults.epochs)
    p.add_argument("--lr", type=positive_float, default=defaults.learning_rate)
    p.add_argument("--wd", type=float, default=defaults.weight_decay)
    p.add_argument("--batch", type=positive_int, default=defaults.batch_size)
    p.add_argument("--split", type=fraction, default=defaults.train_fraction, help="training fraction")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-history", required=True)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a labeled manifest")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--subset", choices=["all", "train", "val"], default="all")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("predict", help="predict the expressibility of one circuit")
    p.add_argument("--model", required=True)
    p.add_argument("--circuit", required=True)
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("graph", help="dump the graph encoding of one circuit")
    p.add_argument("--circuit", required=True)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_graph)

    p = sub.add_parser("benchmark", help="time ground-truth labeling against surrogate prediction")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--limit", type=positive_int, default=20)
    p.add_argument("--samples", type=positive_int)
    p.add_argument("--bins", type=positive_int)
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_benchmark)

    p = sub.add_parser("acceptance", help="generate, label, train and score the desk-scale recipe end to end")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=positive_int)
    p.add_argument("--samples", type=positive_int)
    p.add_argument("--bins", type=positive_int)
    p.add_argument("--epochs", type=positive_int)
    p.add_argument("--lr", type=positive_float)
    p.add_argument("--batch", type=positive_int)
    p.add_argument("--jobs", type=positive_int)
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_acceptance)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    settings = Settings()
    configure_logging("DEBUG" if args.verbose else settings.log_level, settings.effective_log_format)
    try:
        return args.handler(args, settings)
    except ArgumentTypeError as e:
        ap.error(str(e))
    except ValidationError as e:
        first = e.errors()[0]
        ap.error(f"{'.'.join(str(part) for part in first['loc'])}: {first['msg']}")
    except PqcExprError as e:
        logger.error("Command failed", command=args.command, error=str(e))
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except (OSError, ValueError) as e:
        logger.error("Command failed", command=args.command, error=str(e), kind=type(e).__name__)
        print(f"error: {e}", file=sys.stderr)
        return 2
