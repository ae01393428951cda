"""Command-line entry points.

Every subcommand reads and writes the package's file formats, records a
manifest next to its primary output (resolved config, config hash,
input digests), and never touches a wall clock, so rerunning a command
with the same flags reproduces its artifacts byte for byte.

Exit codes: 0 success, 2 usage or file-format problems, 3 numerical
failures (weight collapse, divergence, degenerate data).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import datagen, metrics, mixer, trainer, wii
from .core import Dataset, RngStream, load_csv, normalize_componentwise, save_csv
from .errors import (
    DimensionError,
    FileFormatError,
    NonFiniteError,
    WicaError,
)

__all__ = ["main"]


# ---------------------------------------------------------------------------
# manifest plumbing


def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _sha256_file(path: Path) -> str:
    return _sha256_bytes(path.read_bytes())


def _canonical(config: dict) -> str:
    return json.dumps(config, sort_keys=True)


def _write_manifest(primary: Path, command: str, config: dict, inputs: list[Path],
                    outputs: list[Path]) -> None:
    doc = {
        "command": command,
        "config": config,
        "config_hash": _sha256_bytes(_canonical(config).encode()),
        "inputs": {str(p): _sha256_file(p) for p in sorted(inputs)},
        "outputs": sorted(str(p) for p in outputs),
    }
    manifest = primary.with_name(primary.name + ".manifest.json")
    manifest.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except OSError as exc:
        raise FileFormatError(f"cannot read {p}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise FileFormatError(
            f"{p}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})"
        ) from None
    if not isinstance(doc, dict):
        raise FileFormatError(f"{p}: config must be a JSON object")
    return doc


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags, unknown keys rejected."""
    out = dict(defaults)
    for key, value in _load_config_file(args.config).items():
        if key not in defaults:
            raise FileFormatError(f"unknown config key {key!r}")
        out[key] = value
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    return out


def _parse_json_flag(text: str | None, what: str) -> dict:
    if text is None:
        return {}
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"bad {what}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise FileFormatError(f"{what} must be a JSON object")
    return doc


def _hidden_sizes(value) -> tuple[int, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    return tuple(int(tok) for tok in str(value).split(",") if tok.strip())


# ---------------------------------------------------------------------------
# subcommands


def _cmd_generate(args: argparse.Namespace) -> int:
    defaults = {
        "kind": "uniform", "d": 2, "n": 1000, "seed": 0, "params": {},
        "out": "sources.csv",
    }
    cfg = _resolve(args, defaults)
    if isinstance(cfg["params"], str):
        cfg["params"] = _parse_json_flag(cfg["params"], "--params")
    spec = datagen.SourceSpec(
        kind=cfg["kind"], d=int(cfg["d"]), n=int(cfg["n"]),
        seed=int(cfg["seed"]), params=cfg["params"],
    )
    data = datagen.generate(spec)
    out = Path(cfg["out"])
    save_csv(out, data)
    _write_manifest(out, "generate", cfg, [], [out])
    print(f"wrote {out}: {data.shape[0]} rows x {data.shape[1]} columns")
    return 0


def _cmd_mix(args: argparse.Namespace) -> int:
    defaults = {
        "data": None, "iterations": 10, "hidden": 16, "seed": 0,
        "out": "mixed.csv", "pipeline_out": "pipeline.json",
    }
    cfg = _resolve(args, defaults)
    if cfg["data"] is None:
        raise FileFormatError("mix needs --data")
    src_path = Path(cfg["data"])
    sources = normalize_componentwise(Dataset.load(src_path).x)
    pipeline = mixer.build_pipeline(
        sources.shape[1], int(cfg["iterations"]), int(cfg["hidden"]),
        RngStream(int(cfg["seed"])),
    )
    mixed = mixer.mix(pipeline, sources)
    out = Path(cfg["out"])
    pipe_out = Path(cfg["pipeline_out"])
    save_csv(out, mixed)
    mixer.save_pipeline(pipe_out, pipeline)
    _write_manifest(out, "mix", cfg, [src_path], [out, pipe_out])
    print(f"wrote {out} and {pipe_out} ({len(pipeline)} stages)")
    return 0


def _cmd_unmix_exact(args: argparse.Namespace) -> int:
    defaults = {"data": None, "pipeline": None, "out": "recovered.csv"}
    cfg = _resolve(args, defaults)
    if cfg["data"] is None or cfg["pipeline"] is None:
        raise FileFormatError("unmix-exact needs --data and --pipeline")
    data_path, pipe_path = Path(cfg["data"]), Path(cfg["pipeline"])
    pipeline = mixer.load_pipeline(pipe_path)
    recovered = mixer.unmix_exact(pipeline, Dataset.load(data_path).x)
    out = Path(cfg["out"])
    save_csv(out, recovered)
    _write_manifest(out, "unmix-exact", cfg, [data_path, pipe_path], [out])
    print(f"wrote {out}")
    return 0


def _train_config(cfg: dict) -> trainer.TrainConfig:
    return trainer.TrainConfig(
        beta=float(cfg["beta"]),
        batch_size=int(cfg["batch_size"]),
        steps=int(cfg["steps"]),
        learning_rate=float(cfg["learning_rate"]),
        seed=int(cfg["seed"]),
        num_weighting_points=(
            None if cfg["num_weighting_points"] is None
            else int(cfg["num_weighting_points"])
        ),
        optimizer=cfg["optimizer"],
        log_every=int(cfg["log_every"]),
        hidden_sizes=_hidden_sizes(cfg["hidden_sizes"]),
        rec_norm=cfg["rec_norm"],
    )


_TRAIN_DEFAULTS = {
    "beta": 1.0, "batch_size": 256, "steps": 5000, "learning_rate": 1e-3,
    "seed": 0, "num_weighting_points": None, "optimizer": "adam",
    "log_every": 50, "hidden_sizes": [128, 128, 128], "rec_norm": "mean",
}


def _cmd_train(args: argparse.Namespace) -> int:
    defaults = {
        "data": None, "model_out": "model.json", "trace_out": "trace.csv",
        **_TRAIN_DEFAULTS,
    }
    cfg = _resolve(args, defaults)
    if cfg["data"] is None:
        raise FileFormatError("train needs --data")
    data_path = Path(cfg["data"])
    data = Dataset.load(data_path).x
    tc = _train_config(cfg)
    model, trace = trainer.train(data, tc)
    model_out, trace_out = Path(cfg["model_out"]), Path(cfg["trace_out"])
    trainer.save_model(model_out, model, tc)
    trainer.save_trace(trace_out, trace)
    _write_manifest(model_out, "train", cfg, [data_path], [model_out, trace_out])
    if trace.records:
        last = trace.records[-1]
        print(
            f"step {last.step}: rec_error={last.rec_error:.6g} "
            f"wii={last.wii:.6g} total={last.total:.6g}"
        )
    print(f"wrote {model_out} and {trace_out}")
    return 0


def _cmd_encode(args: argparse.Namespace) -> int:
    defaults = {"model": None, "data": None, "out": "encoded.csv"}
    cfg = _resolve(args, defaults)
    if cfg["model"] is None or cfg["data"] is None:
        raise FileFormatError("encode needs --model and --data")
    model_path, data_path = Path(cfg["model"]), Path(cfg["data"])
    model, _ = trainer.load_model(model_path)
    z = trainer.encode(model, Dataset.load(data_path).x)
    out = Path(cfg["out"])
    save_csv(out, z)
    _write_manifest(out, "encode", cfg, [model_path, data_path], [out])
    print(f"wrote {out}")
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    defaults = {"z": None, "sources": None, "out": "report.json", "matrices": True}
    cfg = _resolve(args, defaults)
    if args.z_pos is not None:
        cfg["z"] = args.z_pos
    if args.sources_pos is not None:
        cfg["sources"] = args.sources_pos
    if cfg["z"] is None or cfg["sources"] is None:
        raise FileFormatError("score needs retrieved and source CSV paths")
    z_path, s_path = Path(cfg["z"]), Path(cfg["sources"])
    report = metrics.score(Dataset.load(z_path).x, Dataset.load(s_path).x)
    out = Path(cfg["out"])
    metrics.save_report(out, report, matrices=bool(cfg["matrices"]))
    _write_manifest(out, "score", cfg, [z_path, s_path], [out])
    print(f"ots={report.ots:.6f} max_corr={report.max_corr:.6f}")
    return 0


def _cmd_wii(args: argparse.Namespace) -> int:
    defaults = {"data": None, "num_points": None, "seed": 0, "out": "wii.json"}
    cfg = _resolve(args, defaults)
    if cfg["data"] is None:
        raise FileFormatError("wii needs --data")
    data_path = Path(cfg["data"])
    data = Dataset.load(data_path).x
    wcfg = wii.WiiConfig(
        num_points=None if cfg["num_points"] is None else int(cfg["num_points"])
    )
    value = wii.wii_index(data, wcfg, RngStream(int(cfg["seed"])))
    out = Path(cfg["out"])
    doc = {
        "wii": value,
        "n": data.shape[0],
        "d": data.shape[1],
        "num_points": wcfg.resolve_num_points(data.shape[1]),
        "seed": int(cfg["seed"]),
    }
    out.write_text(json.dumps(doc, sort_keys=True) + "\n")
    _write_manifest(out, "wii", cfg, [data_path], [out])
    print(f"wii={value:.6g}")
    return 0


def _cmd_plot_data(args: argparse.Namespace) -> int:
    defaults = {"data": None, "out_dir": "plots", "cols": "0,1"}
    cfg = _resolve(args, defaults)
    if cfg["data"] is None:
        raise FileFormatError("plot-data needs --data")
    data_path = Path(cfg["data"])
    data = Dataset.load(data_path).x
    a, b = (int(tok) for tok in str(cfg["cols"]).split(","))
    d = data.shape[1]
    if not (0 <= a < d and 0 <= b < d):
        raise DimensionError(f"columns ({a},{b}) out of range for d={d}")
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    scatter = out_dir / "scatter.csv"
    save_csv(scatter, data[:, [a, b]])
    outputs = [scatter]
    for j in range(d):
        counts, edges = np.histogram(data[:, j], bins=50)
        hist_path = out_dir / f"hist_c{j}.csv"
        with hist_path.open("w", newline="") as fh:
            fh.write("bin_left,bin_right,count\n")
            for k in range(50):
                fh.write(f"{float(edges[k])!r},{float(edges[k + 1])!r},{counts[k]}\n")
        outputs.append(hist_path)
    _write_manifest(scatter, "plot-data", cfg, [data_path], outputs)
    print(f"wrote {len(outputs)} files under {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# the benchmark grid


_BENCH_DEFAULTS = {
    "dims": [2], "mixes": [10], "seeds": [0], "n": 16384,
    "source_kind": "sine_mixture", "source_params": {}, "source_seed": 0,
    "mix_seed": 0, "mix_hidden": 16, "train": {}, "out_dir": "bench",
    "threads": 1,
}


def _bench_one(d: int, iterations: int, seed: int, cfg: dict) -> dict:
    spec = datagen.SourceSpec(
        kind=cfg["source_kind"], d=d, n=int(cfg["n"]),
        seed=int(cfg["source_seed"]), params=cfg["source_params"],
    )
    sources = datagen.generate(spec)
    pipeline = mixer.build_pipeline(
        d, iterations, int(cfg["mix_hidden"]), RngStream(int(cfg["mix_seed"]))
    )
    mixed = mixer.mix(pipeline, sources)
    train_cfg = _train_config({**_TRAIN_DEFAULTS, **cfg["train"], "seed": seed})
    model, _ = trainer.train(mixed, train_cfg)
    report = metrics.score(trainer.encode(model, mixed), sources)
    return {"ots": report.ots, "max_corr": report.max_corr}


def _cmd_bench(args: argparse.Namespace) -> int:
    cfg = _resolve(args, _BENCH_DEFAULTS)
    if not (cfg["dims"] and cfg["mixes"] and cfg["seeds"]):
        raise FileFormatError("bench needs nonempty dims, mixes and seeds lists")
    env_cap = os.environ.get("WICA_LAB_THREADS")
    threads = int(cfg["threads"])
    if env_cap is not None:
        threads = min(threads, max(1, int(env_cap)))
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    runs = [
        (int(d), int(it), int(seed))
        for d in cfg["dims"] for it in cfg["mixes"] for seed in cfg["seeds"]
    ]
    results: dict[tuple[int, int, int], dict] = {}

    def job(key: tuple[int, int, int]) -> tuple[tuple[int, int, int], dict]:
        d, it, seed = key
        try:
            return key, {"status": "ok", **_bench_one(d, it, seed, cfg)}
        except WicaError as exc:
            return key, {"status": "failed", "error": str(exc)}

    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            for key, res in pool.map(job, runs):
                results[key] = res
    else:
        for key in runs:
            results[key] = job(key)[1]

    runs_path = out_dir / "runs.csv"
    with runs_path.open("w", newline="") as fh:
        fh.write("d,iterations,seed,status,ots,max_corr,error\n")
        for key in sorted(results):
            r = results[key]
            ots_s = repr(r["ots"]) if r["status"] == "ok" else ""
            mc_s = repr(r["max_corr"]) if r["status"] == "ok" else ""
            err = r.get("error", "").replace('"', "'")
            fh.write(f'{key[0]},{key[1]},{key[2]},{r["status"]},{ots_s},{mc_s},"{err}"\n')

    summary_path = out_dir / "summary.csv"
    with summary_path.open("w", newline="") as fh:
        fh.write("d,iterations,runs,ots_mean,ots_std,max_corr_mean,max_corr_std\n")
        for d in sorted(int(v) for v in cfg["dims"]):
            for it in sorted(int(v) for v in cfg["mixes"]):
                cell = [
                    results[(d, it, int(s))] for s in cfg["seeds"]
                    if results[(d, it, int(s))]["status"] == "ok"
                ]
                if cell:
                    ots_v = np.array([r["ots"] for r in cell])
                    mc_v = np.array([r["max_corr"] for r in cell])
                    fh.write(
                        f"{d},{it},{len(cell)},"
                        f"{float(ots_v.mean())!r},{float(ots_v.std())!r},"
                        f"{float(mc_v.mean())!r},{float(mc_v.std())!r}\n"
                    )
                else:
                    fh.write(f"{d},{it},0,,,,\n")

    _write_manifest(summary_path, "bench", cfg, [], [runs_path, summary_path])
    failed = sum(1 for r in results.values() if r["status"] != "ok")
    print(f"{len(runs) - failed}/{len(runs)} runs succeeded; wrote {summary_path}")
    return 3 if failed else 0


# ---------------------------------------------------------------------------
# parser


def _add_config_flag(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON file with defaults for this command")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wica-lab",
        description="Nonlinear ICA toolkit: generate, mix, train, score.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("generate", help="synthesize independent sources")
    _add_config_flag(p)
    p.add_argument("--kind", choices=datagen.KINDS)
    p.add_argument("--d", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--params", help="kind-specific JSON object")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_generate)

    p = subs.add_parser("mix", help="apply an invertible nonlinear mixing")
    _add_config_flag(p)
    p.add_argument("--data")
    p.add_argument("--iterations", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--pipeline-out", dest="pipeline_out")
    p.set_defaults(func=_cmd_mix)

    p = subs.add_parser("unmix-exact", help="invert a saved mixing pipeline")
    _add_config_flag(p)
    p.add_argument("--data")
    p.add_argument("--pipeline")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_unmix_exact)

    p = subs.add_parser("train", help="fit the unmixing autoencoder")
    _add_config_flag(p)
    p.add_argument("--data")
    p.add_argument("--beta", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--num-weighting-points", dest="num_weighting_points", type=int)
    p.add_argument("--optimizer", choices=("adam", "sgd"))
    p.add_argument("--log-every", dest="log_every", type=int)
    p.add_argument("--hidden-sizes", dest="hidden_sizes", help="e.g. 128,128,128")
    p.add_argument("--rec-norm", dest="rec_norm", choices=("mean", "sum"))
    p.add_argument("--model-out", dest="model_out")
    p.add_argument("--trace-out", dest="trace_out")
    p.set_defaults(func=_cmd_train)

    p = subs.add_parser("encode", help="apply a trained encoder")
    _add_config_flag(p)
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_encode)

    p = subs.add_parser("score", help="OTS and max_corr against true sources")
    _add_config_flag(p)
    p.add_argument("z_pos", nargs="?", metavar="retrieved.csv")
    p.add_argument("sources_pos", nargs="?", metavar="sources.csv")
    p.add_argument("--z")
    p.add_argument("--sources")
    p.add_argument("--out")
    p.add_argument("--no-matrices", dest="matrices", action="store_false", default=None)
    p.set_defaults(func=_cmd_score)

    p = subs.add_parser("wii", help="weighted independence index of a dataset")
    _add_config_flag(p)
    p.add_argument("--data")
    p.add_argument("--num-points", dest="num_points", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_wii)

    p = subs.add_parser("bench", help="run a (dims x mixes x seeds) grid")
    _add_config_flag(p)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=_cmd_bench)

    p = subs.add_parser("plot-data", help="scatter and 50-bin marginals as CSV")
    _add_config_flag(p)
    p.add_argument("--data")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--cols", help="two column indices, e.g. 0,1")
    p.set_defaults(func=_cmd_plot_data)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return int(args.func(args))
    except (FileFormatError, DimensionError, NonFiniteError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except WicaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
