"""Command-line front end.

Exit codes: 0 success, 1 runtime failure, 2 usage error.

Settings resolve in priority order: command-line flags, then a
``key=value`` config file (``--config``), then ``QNEAT_SEED`` for the seed
only, then built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import K_MAX, K_MIN, NORMAL, balance, kfold_split, load_records, synthetic_flows, write_records
from .estimator import QNEATClassifier
from .evolution import info_score, write_learning_curve
from .exceptions import InvalidK, QNeatError, SchemaMismatch
from .genome import genome_from_json
from .metrics import METRICS, accuracy, f1
from .mlpify import insert_dummy_nodes, to_dense
from .model import SUFFIX, load, resource_estimate, save


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    data: str | None = None
    out: str = "qneat-out"
    k: str = "4"
    metric: str = "accuracy"
    bits: int = 2
    pop: int = 16
    batch: int = 500
    hidden: int = 1
    generations: int = 30
    sigma: float = 0.155
    iters: int = 10
    seed: int = 0

    def classifier(self, seed: int | None = None) -> QNEATClassifier:
        return QNEATClassifier(
            population_size=self.pop,
            batch_size=self.batch,
            initial_hidden_nodes=self.hidden,
            max_generations=self.generations,
            sigma=self.sigma,
            quant_bits=self.bits,
            quant_iters=self.iters,
            random_state=self.seed if seed is None else seed,
        )

    def snapshot(self) -> dict:
        # paths are left out so identical runs in different directories match byte for byte
        d = asdict(self)
        d.pop("data")
        d.pop("out")
        return d


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"int": int, "float": float, "str": str, "str | None": str}


def _cast(key: str, value: str):
    try:
        return _CASTS[_FIELD_TYPES[key]](value)
    except KeyError:
        raise UsageError(f"unknown config key {key!r}") from None
    except ValueError:
        raise UsageError(f"bad value for {key}: {value!r}") from None


def read_config_file(path) -> dict:
    settings = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        settings[key] = _cast(key, value)
    return settings


def resolve_config(args: argparse.Namespace, env=None) -> RunConfig:
    env = os.environ if env is None else env
    settings: dict = {}
    if env.get("QNEAT_SEED"):
        settings["seed"] = _cast("seed", env["QNEAT_SEED"])
    if getattr(args, "config", None):
        settings.update(read_config_file(args.config))
    for key in _FIELD_TYPES:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return RunConfig(**settings)


def _add_run_flags(p: argparse.ArgumentParser, k_default_help: str = "4") -> None:
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--data", help="flow CSV (f0..f255 plus category)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--k", help=f"fold count in [{K_MIN}, {K_MAX}] (default {k_default_help})")
    p.add_argument("--metric", choices=sorted(METRICS))
    p.add_argument("--bits", type=int, help="quantizer bits (default 2)")
    p.add_argument("--pop", type=int, help="population size (default 16)")
    p.add_argument("--batch", type=int, help="balanced batch size (default 500)")
    p.add_argument("--hidden", type=int, help="initial hidden nodes (default 1)")
    p.add_argument("--generations", type=int, help="maximum generations (default 30)")
    p.add_argument("--sigma", type=float, help="weight scale (default 0.155)")
    p.add_argument("--iters", type=int, help="quantizer fitting iterations (default 10)")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qneat", description="Quantization-aware neuroevolution for flow classification")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="evolve one quantized model on a single train/validation split")
    _add_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("crossval", help="k-fold cross-validation report (k or 'sweep' for 3..10)")
    _add_run_flags(p, "4; 'sweep' runs 3..10")
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("eval", help="score a saved model on a flow CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--metric", choices=sorted(METRICS), default="accuracy")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="score one comma-separated feature row ('-' reads stdin)")
    p.add_argument("--model", required=True)
    p.add_argument("row")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("quantreport", help="print quantizer bases, levels and thresholds")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_quantreport)

    p = sub.add_parser("mlpify", help="insert dummy nodes into a genome JSON and report the layered shape")
    p.add_argument("--genome", required=True)
    p.add_argument("--out", help="write the layered genome JSON here")
    p.set_defaults(func=cmd_mlpify)

    p = sub.add_parser("synth", help="write a synthetic byte-feature flow CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--per-attack", type=int, default=120)
    p.add_argument("--normal", type=int, default=1200)
    p.add_argument("--features", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--separable", action="store_true", help="drop the uniformly random header fields")
    p.set_defaults(func=cmd_synth)
    return parser


def _existing(path, what: str) -> Path:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"{what} not found: {path}")
    return path


def _require_data(cfg: RunConfig) -> Path:
    if not cfg.data:
        raise UsageError("--data is required")
    return _existing(cfg.data, "dataset")


def _parse_k(text: str) -> list[int]:
    if text == "sweep":
        return list(range(K_MIN, K_MAX + 1))
    try:
        k = int(text)
    except ValueError:
        raise InvalidK(f"k must be an integer in [{K_MIN}, {K_MAX}] or 'sweep', got {text!r}") from None
    if not K_MIN <= k <= K_MAX:
        raise InvalidK(f"k must be an integer in [{K_MIN}, {K_MAX}], got {k}")
    return [k]


def _load_balanced(cfg: RunConfig):
    path = _require_data(cfg)
    data = load_records(path)
    return data, balance(data, np.random.default_rng(cfg.seed))


def _metadata(cfg: RunConfig, clf: QNEATClassifier, data, metrics: dict) -> dict:
    return {
        "config": cfg.snapshot(),
        "evolution": clf.config_.to_dict(),
        "seed": cfg.seed,
        "generations": len(clf.history_),
        "metrics": metrics,
        "dataset_fingerprint": data.fingerprint(),
        "shape": list(clf.network_.shape),
        "dummy_nodes": clf.layered_.dummy_count,
    }


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    (k,) = _parse_k(cfg.k)
    raw, data = _load_balanced(cfg)
    plan = kfold_split(data, k, cfg.seed)
    train, validation = plan.split(data, 0)
    clf = cfg.classifier().fit_dataset(train, validation)
    metrics = clf.scores(validation)

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save(clf.to_artifact(_metadata(cfg, clf, raw, metrics)), out / f"model{SUFFIX}")
    write_learning_curve(clf.history_, out / "learning_curve.csv")
    (out / "genome.json").write_text(clf.genome_.to_json() + "\n", encoding="utf-8")
    (out / "fold_plan.json").write_text(plan.to_json() + "\n", encoding="utf-8")
    print(f"generations: {len(clf.history_)}")
    print(f"shape: {'x'.join(map(str, clf.network_.shape))}")
    for name, value in metrics.items():
        print(f"validation {name}: {value:.4f}")
    print(f"model: {out / ('model' + SUFFIX)}")
    return 0


def cmd_crossval(args) -> int:
    cfg = resolve_config(args)
    ks = _parse_k(cfg.k)
    raw, data = _load_balanced(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    score = METRICS[cfg.metric]
    rows, fold_rows = [], []
    for k in ks:
        plan = kfold_split(data, k, cfg.seed)
        fold_dir = out / f"k{k}"
        fold_dir.mkdir(exist_ok=True)
        (fold_dir / "fold_plan.json").write_text(plan.to_json() + "\n", encoding="utf-8")
        values = []
        for fold in range(k):
            seed = int(np.random.SeedSequence([cfg.seed, k, fold]).generate_state(1)[0])
            train, test = plan.split(data, fold)
            clf = cfg.classifier(seed=seed).fit_dataset(train)
            pred = (clf.network_.forward(test.X)[:, 0] > 0.5).astype(int)
            value = score(test.y, pred)
            values.append(value)
            fold_rows.append((k, fold, seed, value))
            metrics = {"accuracy": accuracy(test.y, pred), "f1": f1(test.y, pred), "nmi": info_score(pred, test.y)}
            save(clf.to_artifact(_metadata(cfg, clf, raw, metrics) | {"fold": fold, "k": k}),
                 fold_dir / f"fold{fold}{SUFFIX}")
            write_records(test, fold_dir / f"fold{fold}_test.csv")
            write_learning_curve(clf.history_, fold_dir / f"fold{fold}_curve.csv")
        rows.append((k, min(values), max(values), float(np.mean(values))))

    with (out / "crossval.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "min", "max", "avg"])
        for k, lo, hi, avg in rows:
            w.writerow([k, repr(lo), repr(hi), repr(avg)])
    with (out / "folds.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "fold", "seed", cfg.metric])
        for k, fold, seed, value in fold_rows:
            w.writerow([k, fold, seed, repr(value)])
    label = "Accuracy" if cfg.metric == "accuracy" else "F1 (extension)"
    print(f"{'k':>3} | {label} min    max    avg")
    for k, lo, hi, avg in rows:
        print(f"{k:>3} | {lo:.3f}  {hi:.3f}  {avg:.3f}")
    return 0


def _feature_header_count(path: Path) -> int:
    with path.open(newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), [])
    return sum(1 for h in header if h.strip().startswith("f") and h.strip()[1:].isdigit())


def cmd_eval(args) -> int:
    artifact = load(_existing(args.model, "model"))
    path = _existing(args.data, "dataset")
    n = _feature_header_count(path)
    if n != artifact.input_count:
        raise SchemaMismatch(f"dataset has {n} feature columns, model expects {artifact.input_count}")
    data = load_records(path, n_features=artifact.input_count)
    value = METRICS[args.metric](data.y, artifact.predict(data.X))
    print(f"{args.metric}: {value!r}")
    return 0


def cmd_predict(args) -> int:
    artifact = load(_existing(args.model, "model"))
    text = sys.stdin.read() if args.row == "-" else args.row
    try:
        row = [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise UsageError("feature row must be comma-separated numbers") from None
    if len(row) != artifact.input_count:
        raise SchemaMismatch(f"row has {len(row)} features, model expects {artifact.input_count}")
    p = float(artifact.predict_proba(np.array([row]))[0])
    print(f"score: {p!r}")
    print(f"label: {'attack' if p > 0.5 else NORMAL}")
    return 0


def format_basis(name: str, basis) -> list[str]:
    lines = [f"[{name}] domain={basis.domain} bits={basis.k}"]
    if basis.degenerate:
        lines.append("  DEGENERATE (zero basis; quantization skipped for activations)")
    lines.append(f"  basis: {', '.join(repr(v) for v in basis.v)}")
    lines.append(f"  levels: {', '.join(repr(float(v)) for v in basis.levels)}")
    lines.append(f"  thresholds: {', '.join(repr(float(t)) for t in basis.thresholds)}")
    err = "n/a" if basis.error is None else repr(basis.error)
    lines.append(f"  quantization error (sum of squares at fit time): {err}")
    return lines


def cmd_quantreport(args) -> int:
    artifact = load(_existing(args.model, "model"))
    quant = artifact.quantizers
    if quant is None:
        print("model is not quantized")
        return 0
    for line in format_basis("weights", quant.weights) + format_basis("activations", quant.activations):
        print(line)
    est = resource_estimate(artifact)
    print(f"[resources] params={est['param_count']} param_bits={est['param_bits']} "
          f"mult_adds={est['mult_adds']} activations={est['activation_count']}")
    return 0


def cmd_mlpify(args) -> int:
    genome = genome_from_json(_existing(args.genome, "genome").read_text(encoding="utf-8"))
    layered = insert_dummy_nodes(genome)
    dense = to_dense(layered)
    print(f"layers: {layered.layer_count}")
    print(f"shape: {'x'.join(map(str, dense.shape))}")
    print(f"dummy nodes: {layered.dummy_count}")
    if args.out:
        doc = {"genome": layered.genome.to_dict(), "layer_of": {str(k): v for k, v in sorted(layered.layer_of.items())}}
        Path(args.out).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    return 0


def cmd_synth(args) -> int:
    data = synthetic_flows(
        args.per_attack, args.normal, args.seed, n_features=args.features, noise_fields=not args.separable
    )
    write_records(data, args.out)
    print(f"wrote {len(data)} rows to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, InvalidK) as exc:
        parser.print_usage(sys.stderr)
        print(f"qneat: error: {exc}", file=sys.stderr)
        return 2
    except (QNeatError, OSError) as exc:
        print(f"qneat: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
