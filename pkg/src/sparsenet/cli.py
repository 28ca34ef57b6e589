"""Command-line experiment runner.

Subcommands: gen-topology, train, retrain, prune, eval, bench, inspect.
Exit codes: 0 success, 2 config error, 3 data or file-format error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import statistics
import sys
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import config as cfgmod
from .data import Dataset, load_cifar10, load_mnist, synthetic_separable
from .errors import ConfigError, FormatError, NumericError, ShapeError
from .linalg import SparsityPattern, make_rng, spmm
from .nn import Dense, TrainConfig, build_lenet5, build_lenet300, evaluate, load_checkpoint, save_checkpoint, train
from .nn.model import MNIST_SHAPE, Model
from .pruning import PruneSchedule, iterative_prune, one_time_prune
from .topology import (
    LayeredTopology,
    MaskBundle,
    RadixSpec,
    load_bundle,
    path_count_matrix,
    radix_net,
    random_mask,
    random_topology,
    save_bundle,
    save_topology,
    trim_inputs,
)

log = logging.getLogger("sparsenet")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
METRICS_COLUMNS = ["step", "train_loss", "test_accuracy", "overall_sparsity", "layer_sparsities", "wall_time"]
BENCH_COLUMNS = ["rows", "cols", "batch", "sparsity", "nnz", "dense_ns", "csr_ns", "csr_total_ns", "flag"]
BUILDERS = {"lenet300": build_lenet300, "lenet5": build_lenet5}
DTYPES = {"f32": np.float32, "f64": np.float64}
# used when the config leaves dataset.path unset
DATA_ENV = {"mnist": ("SPARSENET_MNIST", "mnist"), "cifar10": ("SPARSENET_CIFAR", "cifar-10-batches-bin")}
SYNTHETIC_SIZES = (2000, 500)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x))


class MetricsWriter:
    """metrics.csv with a fixed header; every row is flushed as it arrives."""

    def __init__(self, path: Path):
        self.fh = open(path, "w", newline="")
        self.writer = csv.writer(self.fh)
        self.writer.writerow(METRICS_COLUMNS)
        self.fh.flush()

    def __call__(self, rec) -> None:
        self.writer.writerow(
            [
                rec.step,
                _fmt(rec.train_loss),
                _fmt(rec.test_accuracy),
                _fmt(rec.overall_sparsity),
                ";".join(_fmt(s) for s in rec.layer_sparsities),
                _fmt(rec.wall_time),
            ]
        )
        self.fh.flush()

    def close(self):
        self.fh.close()


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n")


def load_datasets(ds_cfg: dict, dtype) -> tuple[Dataset, Dataset]:
    name = ds_cfg["name"]
    if name == "synthetic":
        n_train = ds_cfg["train_limit"] or SYNTHETIC_SIZES[0]
        n_test = ds_cfg["test_limit"] or SYNTHETIC_SIZES[1]
        full = synthetic_separable(n_train + n_test, 784, 10, make_rng(0, "synthetic"), shape=MNIST_SHAPE, dtype=dtype)
        return (
            Dataset(full.images[:n_train], full.labels[:n_train], "synthetic-train"),
            Dataset(full.images[n_train:], full.labels[n_train:], "synthetic-test"),
        )
    path = ds_cfg["path"]
    if path is None:
        env, sub = DATA_ENV[name]
        path = os.environ.get(env) or Path(os.environ.get("SPARSENET_DATA", "data")) / sub
    loader = load_mnist if name == "mnist" else load_cifar10
    train_set, test_set = loader(Path(path), dtype=dtype)
    return train_set.subset(ds_cfg["train_limit"]), test_set.subset(ds_cfg["test_limit"])


def _fc_names(model: Model) -> list[str]:
    return [l.name for l in model.weight_layers() if isinstance(l, Dense)]


def _assign(masks: list[SparsityPattern], layers, model: Model) -> dict:
    names = list(layers) if layers is not None else _fc_names(model)[: len(masks)]
    if len(names) != len(masks):
        raise ConfigError(f"{len(masks)} masks cannot be assigned to layers {names}")
    return dict(zip(names, masks))


def resolve_masks(topo: dict, model: Model) -> dict:
    """Turn the config's topology section into a layer-name -> mask dict."""
    kind = topo["kind"]
    if kind == "dense":
        return {}
    if kind == "radix":
        t = radix_net(RadixSpec(tuple(topo["radices"]), tuple(topo["blocks"])))
        first = model.layer((topo["layers"] or _fc_names(model))[0])
        trim = topo["trim"] if topo["trim"] is not None else t.layer_sizes[0] - first.weight.shape[0]
        if trim < 0:
            raise ConfigError(f"radix input layer has {t.layer_sizes[0]} neurons, fewer than the model's {first.weight.shape[0]}")
        return _assign(trim_inputs(t, trim).masks, topo["layers"], model)
    if kind == "random":
        rng = make_rng(topo["seed"], "topology")
        names = topo["layers"] or [l.name for l in model.weight_layers()]
        out = {}
        for name in names:
            shape = model.layer(name).weight.shape
            m = random_mask(shape[0], int(np.prod(shape[1:])), topo["sparsity"], rng)
            out[name] = SparsityPattern(m.bits.reshape(shape))
        return out
    bundle = load_bundle(topo["path"])
    if bundle.names and len(bundle.names) == len(bundle.masks):
        named = bundle.by_name()
        if topo["layers"] is not None:
            named = {k: v for k, v in named.items() if k in topo["layers"]}
        return named
    return _assign(bundle.masks, topo["layers"], model)


def build_model(cfg: dict, seed: int, input_shape) -> Model:
    dtype = DTYPES[cfg["precision"]]
    model = BUILDERS[cfg["model"]](seed=seed, input_shape=input_shape, dtype=dtype)
    masks = resolve_masks(cfg["topology"], model)
    try:
        model.set_masks(masks)
    except (ShapeError, KeyError) as exc:
        raise ConfigError(f"topology does not fit {cfg['model']}: {exc}") from None
    if cfg["use_csr"]:
        for layer in model.weight_layers():
            if isinstance(layer, Dense):
                layer.use_csr = True
    return model


def train_config(cfg: dict, seed: int) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(t["learning_rate"], t["momentum"], t["batch_size"], t["epochs"], t["steps"], seed, t["eval_every"])


def prune_schedule(cfg: dict, steps_per_epoch: int) -> PruneSchedule:
    p = cfg["prune"]
    start = p["start_step"] if p["start_step"] is not None else cfgmod.DEFAULT_PRUNE_START_EPOCHS * steps_per_epoch
    end = p["end_step"] if p["end_step"] is not None else start + cfgmod.DEFAULT_PRUNE_RAMP_EPOCHS * steps_per_epoch
    try:
        return PruneSchedule(p["target_sparsity"], start, end, p["prune_interval"], p["exponent"])
    except ValueError as exc:
        raise ConfigError(f"prune: {exc}") from None


def run_experiment(cfg: dict, out: Path) -> list:
    """Run every seed of ``cfg`` into ``out/run-<i>``; returns the final metrics records."""
    dtype = DTYPES[cfg["precision"]]
    train_set, test_set = load_datasets(cfg["dataset"], dtype)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", cfg)
    finals = []
    for i, seed in enumerate(cfgmod.run_seeds(cfg)):
        run_dir = out / f"run-{i}"
        run_dir.mkdir(parents=True, exist_ok=True)
        run_cfg = dict(cfg, seed=seed, seeds=None, repeat=1, out=str(run_dir))
        _write_json(run_dir / "config.json", run_cfg)
        model = build_model(cfg, seed, train_set.shape)
        tcfg = train_config(cfg, seed)
        writer = MetricsWriter(run_dir / "metrics.csv")
        try:
            if cfg["prune"] is not None:
                sched = prune_schedule(cfg, math.ceil(len(train_set) / tcfg.batch_size))
                total = tcfg.total_steps(len(train_set))
                if total < sched.end_step:
                    raise ConfigError(f"training stops at step {total}, before pruning ends at step {sched.end_step}")
                try:
                    result = iterative_prune(model, train_set, tcfg, sched, test=test_set, keep_dense=cfg["prune"]["keep_dense"], on_record=writer)
                except ValueError as exc:
                    raise ConfigError(str(exc)) from None
            else:
                result = train(model, train_set, tcfg, test=test_set, on_record=writer)
        finally:
            writer.close()
        save_checkpoint(result.model, run_dir / "checkpoint", step=result.steps, config=run_cfg)
        last = result.metrics[-1] if result.metrics else None
        finals.append(last)
        if last is not None:
            print(f"run-{i} seed={seed} step={last.step} test_accuracy={last.test_accuracy:.4f} sparsity={last.overall_sparsity:.4f}")
        else:
            print(f"run-{i} seed={seed} step=0 (no training)")
    return finals


def _apply_overrides(cfg: dict, args) -> dict:
    if args.seed is not None:
        cfg["seed"], cfg["seeds"] = args.seed, None
    if args.precision is not None:
        cfg["precision"] = args.precision
    if args.out is not None:
        cfg["out"] = str(args.out)
    if cfg["out"] is None:
        raise ConfigError("no output directory: set 'out' in the config or pass --out")
    return cfgmod.validate(cfg)


def _require_config(args) -> dict:
    if args.config is None:
        raise ConfigError(f"{args.command} needs --config")
    return _apply_overrides(cfgmod.load(args.config), args)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _shape_list(text: str) -> list[tuple[int, int]]:
    shapes = []
    for part in text.split(","):
        try:
            r, c = part.lower().split("x")
            shapes.append((int(r), int(c)))
        except ValueError:
            raise ConfigError(f"expected shapes like 784x300, got {part!r}") from None
    return shapes


def topology_summary(t: LayeredTopology) -> dict:
    counts = path_count_matrix(t)
    return {
        "layer_sizes": t.layer_sizes,
        "layer_sparsities": t.layer_sparsities,
        "sparsity": t.sparsity,
        "path_connected": bool(counts.min() > 0),
        "path_count_min": int(counts.min()),
        "path_count_max": int(counts.max()),
    }


def cmd_gen_topology(args) -> int:
    if args.out is None:
        raise ConfigError("gen-topology needs --out")
    if (args.radix is None) == (args.random is None):
        raise ConfigError("give exactly one of --radix or --random")
    if args.radix is not None:
        if args.blocks is None:
            raise ConfigError("--radix needs --blocks")
        radices, blocks = _int_list(args.radix), _int_list(args.blocks)
        try:
            t = radix_net(RadixSpec(radices, blocks))
            t = trim_inputs(t, args.trim)
        except (ValueError, OverflowError) as exc:
            raise ConfigError(f"invalid radix spec: {exc}") from None
        generator, spec = "radix", {"radices": list(radices), "blocks": list(blocks), "trim": args.trim}
    else:
        if args.sparsity is None:
            raise ConfigError("--random needs --sparsity")
        shapes = _shape_list(args.random)
        if any(a[1] != b[0] for a, b in zip(shapes, shapes[1:])):
            raise ConfigError(f"shapes {args.random} do not chain")
        if not 0.0 <= args.sparsity <= 1.0:
            raise ConfigError("--sparsity must lie in [0, 1]")
        seed = args.seed or 0
        sizes = [shapes[0][0]] + [c for _, c in shapes]
        t = random_topology(sizes, [args.sparsity] * len(shapes), make_rng(seed, "topology"))
        generator, spec = ("dense" if args.sparsity == 0 else "random"), {"sparsity": args.sparsity, "seed": seed}
    save_topology(t, args.out, generator=generator, spec=spec)
    summary = topology_summary(t)
    _write_json(Path(args.out) / "summary.json", summary)
    for i, (m, s) in enumerate(zip(t.masks, t.layer_sparsities)):
        print(f"layer {i}: {m.shape[0]}x{m.shape[1]} nnz={m.nnz} sparsity={s:.6f}")
    verdict = "fully path-connected" if summary["path_connected"] else "NOT path-connected"
    print(f"{verdict}; paths per input/output pair: min {summary['path_count_min']}, max {summary['path_count_max']}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _require_config(args)
    run_experiment(cfg, Path(cfg["out"]))
    return EXIT_OK


def _masks_source(path: Path) -> tuple[Path, int | None]:
    """Bundle directory holding the masks plus the seed of the source checkpoint, if any."""
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except FileNotFoundError:
        raise FormatError(f"{path}: no manifest.json") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid manifest ({exc})") from None
    if "architecture" in manifest:
        if not manifest.get("masks"):
            raise ConfigError(f"checkpoint {path} carries no masks to retrain from")
        return path / manifest["masks"], manifest.get("seed")
    return path, None


def cmd_retrain(args) -> int:
    """Fresh weights on existing masks, then the same run as ``train``.

    Building the model for a seed with the masks attached draws exactly the
    weights ``reinitialize_with_masks`` would, so the echoed config (topology
    pointing at the bundle) reproduces the run under ``train`` as well.
    """
    cfg = _require_config(args)
    if cfg["prune"] is not None:
        raise ConfigError("retrain takes no prune section")
    if cfg["topology"]["kind"] != "dense":
        raise ConfigError("retrain takes its masks from --from; leave topology unset")
    bundle_dir, source_seed = _masks_source(Path(args.source))
    if source_seed is not None and source_seed in cfgmod.run_seeds(cfg):
        raise ConfigError(f"retraining must use a seed different from the source model's ({source_seed})")
    cfg["topology"] = cfgmod.validate(dict(cfg, topology={"kind": "bundle", "path": str(bundle_dir.resolve())}))["topology"]
    run_experiment(cfg, Path(cfg["out"]))
    return EXIT_OK


def _eval_data(manifest: dict, args, dtype):
    if args.config is not None:
        ds_cfg = cfgmod.load(args.config)["dataset"]
    elif manifest.get("config", {}).get("dataset"):
        ds_cfg = manifest["config"]["dataset"]
    else:
        raise ConfigError("checkpoint has no dataset in its config echo; pass --config")
    return load_datasets(ds_cfg, dtype)[1]


def layer_audit(model: Model) -> list[dict]:
    rows = []
    for l in model.weight_layers():
        rows.append(
            {
                "layer": l.name,
                "shape": list(l.weight.shape),
                "size": int(l.weight.size),
                "mask_nnz": int(l.kept),
                "nonzero_weights": int(np.count_nonzero(l.weight)),
                "sparsity": l.sparsity,
                "masked_weights_zero": bool(l.mask is None or not l.weight[~l.mask.bits].any()),
            }
        )
    return rows


def cmd_eval(args) -> int:
    model, manifest = load_checkpoint(args.checkpoint)
    if args.precision is not None:
        model = model.astype(DTYPES[args.precision])
    test_set = _eval_data(manifest, args, model.dtype)
    if test_set.shape != model.input_shape:
        raise ShapeError(f"dataset images are {test_set.shape}, the checkpoint expects {model.input_shape}")
    acc, loss = evaluate(model, test_set)
    report = {
        "checkpoint": str(args.checkpoint),
        "architecture": manifest["architecture"],
        "step": manifest.get("step"),
        "dataset": test_set.name,
        "n_examples": len(test_set),
        "test_accuracy": acc,
        "test_loss": loss,
        "overall_sparsity": model.overall_sparsity(),
        "layers": layer_audit(model),
    }
    print(f"test_accuracy={acc!r} loss={loss:.6f} overall_sparsity={report['overall_sparsity']:.6f}")
    if args.out is not None:
        _write_json(Path(args.out) / "eval.json", report)
    else:
        print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_prune(args) -> int:
    if args.out is None:
        raise ConfigError("prune needs --out")
    if not 0.0 <= args.sparsity <= 1.0:
        raise ConfigError("--sparsity must lie in [0, 1]")
    model, manifest = load_checkpoint(args.checkpoint)
    keep = [k for k in (args.keep_dense or "").split(",") if k]
    try:
        pruned = one_time_prune(model, args.sparsity, keep)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.out)
    cfg = manifest.get("config") or {}
    _write_json(out / "config.json", cfg)
    save_checkpoint(pruned, out / "checkpoint", step=manifest.get("step", 0), config=cfg)
    names = [l.name for l in pruned.weight_layers() if l.mask is not None]
    save_bundle(
        MaskBundle([pruned.layer(n).mask for n in names], "pruned", {"method": "one-time", "sparsity": args.sparsity, "source": str(args.checkpoint)}, names),
        out / "masks",
    )
    report = {"sparsity": args.sparsity, "overall_sparsity": pruned.overall_sparsity(), "layers": layer_audit(pruned)}
    if not args.no_eval and cfg.get("dataset"):
        test_set = load_datasets(cfg["dataset"], model.dtype)[1]
        report["accuracy_before"] = evaluate(model, test_set)[0]
        report["accuracy_after"] = evaluate(pruned, test_set)[0]
        print(f"accuracy {report['accuracy_before']:.4f} -> {report['accuracy_after']:.4f}")
    _write_json(out / "prune_report.json", report)
    print(f"pruned to overall sparsity {report['overall_sparsity']:.6f}; masks in {out / 'masks'}")
    return EXIT_OK


def _median_ns(fn, reps: int) -> float:
    fn()  # warm-up (also triggers kernel compilation)
    times = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        times.append(time.perf_counter_ns() - t0)
    return statistics.median(times)


def cmd_bench(args) -> int:
    if args.out is None:
        raise ConfigError("bench needs --out")
    shapes = _shape_list(args.shapes)
    try:
        grid = [float(s) for s in args.sparsities.split(",")]
    except ValueError:
        raise ConfigError(f"bad sparsity grid {args.sparsities!r}") from None
    if not grid or any(not 0.0 <= s <= 1.0 for s in grid):
        raise ConfigError("sparsities must lie in [0, 1]")
    if args.reps < 1:
        raise ConfigError("--reps must be >= 1")
    dtype = DTYPES[args.precision or "f32"]
    rng = make_rng(args.seed or 0, "bench")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for r, c in shapes:
        w = rng.normal(size=(r, c)).astype(dtype)
        x = rng.normal(size=(args.batch, r)).astype(dtype)
        prev = None
        for s in sorted(grid):
            mask = SparsityPattern(make_rng(args.seed or 0, "bench-mask", r, c, s).random((r, c)) < 1.0 - s)
            dense = Dense("dense", w.copy(), np.zeros(c, dtype), mask)
            sparse = Dense("csr", w.copy(), np.zeros(c, dtype), mask, use_csr=True)
            csr_t = sparse._csr_t()
            xt = np.ascontiguousarray(x.T)
            dense_ns = _median_ns(lambda: dense.forward(x), args.reps)
            csr_ns = _median_ns(lambda: spmm(csr_t, xt), args.reps)
            total_ns = _median_ns(lambda: sparse.forward(x), args.reps)
            flag = "" if prev is None or csr_ns < prev else "non-monotone"
            prev = csr_ns
            rows.append([r, c, args.batch, _fmt(s), mask.nnz, _fmt(dense_ns), _fmt(csr_ns), _fmt(total_ns), flag])
            print(f"{r}x{c} s={s:<5} nnz={mask.nnz:<8} dense={dense_ns / 1e3:10.1f}us csr={csr_ns / 1e3:10.1f}us csr+build={total_ns / 1e3:10.1f}us {flag}")
    with open(out / "bench.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(BENCH_COLUMNS)
        wr.writerows(rows)
    _write_json(out / "config.json", {"shapes": args.shapes, "sparsities": grid, "reps": args.reps, "batch": args.batch, "seed": args.seed or 0, "precision": args.precision or "f32"})
    return EXIT_OK


def cmd_inspect(args) -> int:
    path = Path(args.path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except FileNotFoundError:
        raise FormatError(f"{path}: no manifest.json") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid manifest ({exc})") from None
    if "architecture" in manifest:
        model, _ = load_checkpoint(path)
        info = {
            "kind": "checkpoint",
            "architecture": manifest["architecture"],
            "seed": manifest.get("seed"),
            "step": manifest.get("step"),
            "dtype": manifest.get("dtype"),
            "n_weights": model.n_weights(),
            "overall_sparsity": model.overall_sparsity(),
            "layers": layer_audit(model),
        }
    else:
        bundle = load_bundle(path)
        info = {
            "kind": "bundle",
            "generator": bundle.generator,
            "spec": bundle.spec,
            "layer_sizes": bundle.layer_sizes,
            "masks": [
                {"name": n, "shape": list(m.shape), "nnz": m.nnz, "sparsity": m.sparsity}
                for n, m in zip(bundle.names or [f"mask_{i}" for i in range(len(bundle.masks))], bundle.masks)
            ],
        }
        if bundle.layer_sizes is not None:
            info.update({k: v for k, v in topology_summary(bundle.topology()).items() if k.startswith("path")})
    print(json.dumps(info, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--precision", choices=sorted(DTYPES), help="float width for weights and data")
    common.add_argument("--threads", type=int, help="cap BLAS threads")
    common.add_argument("-q", "--quiet", action="store_true", help="only warnings on stderr")

    parser = argparse.ArgumentParser(prog="sparsenet", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-topology", parents=[common], help="write a RadiX-Net or random mask bundle")
    p.add_argument("--radix", help="mixed radices, e.g. 10,10")
    p.add_argument("--blocks", help="Kronecker block sizes, one more than the radices, e.g. 8,3,1")
    p.add_argument("--trim", type=int, default=0, help="drop this many trailing input neurons")
    p.add_argument("--random", help="layer shapes for random masks, e.g. 784x300,300x100")
    p.add_argument("--sparsity", type=float, help="sparsity of random masks")
    p.set_defaults(func=cmd_gen_topology)

    p = sub.add_parser("train", parents=[common], help="train (and optionally prune) from a config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("retrain", parents=[common], help="train fresh weights on masks from a checkpoint or bundle")
    p.add_argument("--from", dest="source", required=True, help="checkpoint or mask bundle directory")
    p.set_defaults(func=cmd_retrain)

    p = sub.add_parser("prune", parents=[common], help="one-time magnitude pruning of a checkpoint")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--sparsity", type=float, required=True)
    p.add_argument("--keep-dense", help="comma-separated layer names left unpruned")
    p.add_argument("--no-eval", action="store_true", help="skip the before/after accuracy check")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint and audit its sparsity")
    p.add_argument("checkpoint", type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", parents=[common], help="time dense-masked against CSR FC forward passes")
    p.add_argument("--shapes", default="784x300,300x100,100x10")
    p.add_argument("--sparsities", default="0,0.5,0.75,0.9,0.95,0.99")
    p.add_argument("--reps", type=int, default=7)
    p.add_argument("--batch", type=int, default=100)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", parents=[common], help="summarise a checkpoint or mask bundle")
    p.add_argument("path", type=Path)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(asctime)s %(levelname)s %(message)s")
    limits = threadpool_limits(limits=args.threads) if args.threads else nullcontext()
    try:
        with limits:
            return args.func(args)
    except ConfigError as exc:
        print(f"sparsenet: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, ShapeError, FileNotFoundError) as exc:
        print(f"sparsenet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"sparsenet: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
