"""Command line entry point: ``fdmimo <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..nn.data import make_dataset, unstack_complex, unstack_vector
from ..nn.model import NetworkSpec
from ..nn.optim import AdamHyper
from ..nn.train import TrainHyper, train
from ..numerics import RngStream
from ..pilots import build_scheme
from .config import ESTIMATORS, cnn_depth, default_threads, load_config
from .io import emit_results, export_dataset, import_dataset, load_model, save_model
from .metrics import flops, nmse
from .sweep import run_sweep

log = logging.getLogger("fdmimo")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="YAML experiment config")
    p.add_argument("--seed", type=int, default=d)
    p.add_argument("--threads", type=int, default=d, help="worker threads (default: $FDMIMO_THREADS or 1)")
    p.add_argument("--out", default=d, help="output path")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def _system_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-tx", type=int)
    p.add_argument("--n-rx", type=int)
    p.add_argument("--k-uplink", type=int)
    p.add_argument("--k-downlink", type=int)
    p.add_argument("--theta-as", type=float, help="angular spread in degrees")
    p.add_argument("--kappa", type=float, help="Rician factor in dB")
    p.add_argument("--scheme", choices=["orthogonal", "shared_nt", "shared_k"])


def _overrides(args) -> dict:
    o = {
        "seed": getattr(args, "seed", None),
        "scheme": getattr(args, "scheme", None),
        "system.n_tx": getattr(args, "n_tx", None),
        "system.n_rx": getattr(args, "n_rx", None),
        "system.k_uplink": getattr(args, "k_uplink", None),
        "system.k_downlink": getattr(args, "k_downlink", None),
        "system.angular_spread_deg": getattr(args, "theta_as", None),
        "system.rician_kappa_db": getattr(args, "kappa", None),
    }
    return {k: v for k, v in o.items() if v is not None}


def _require_out(args) -> Path:
    if not args.out:
        raise SystemExit(f"{args.command}: --out is required")
    return Path(args.out)


def _write_json(doc: dict, out) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_generate_dataset(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    system = cfg.system
    target = args.target.upper()
    scheme = None if target == "RXTX" else build_scheme(cfg.scheme, system)
    grid = _floats(args.snr_grid) if args.snr_grid else (
        list(cfg.snr_si_grid_db) if target == "SI" else list(cfg.snr_ue_grid_db))
    ds = make_dataset(
        system, scheme, target, args.size, grid, RngStream(cfg.seed, args.stream),
        fixed_snr_db=args.fixed_snr, bits=args.bits, cancellation=not args.no_cancellation,
        spreads_deg=_floats(args.spreads) if args.spreads else None,
    )
    ds.metadata.update(seed=cfg.seed, stream=args.stream)
    out = _require_out(args)
    export_dataset(ds, out)
    log.info("wrote %d samples to %s", len(ds), out)
    return 0


def _parse_method(method: str, ds_meta: dict, input_shape, output_shape, width: int) -> NetworkSpec:
    method = method.upper()
    if method.startswith("CNN"):
        return NetworkSpec("CNN", cnn_depth(method), input_shape, output_shape, hidden_channels=width)
    if method.startswith("FNN"):
        return NetworkSpec("FNN", int(method[3:] or 2), input_shape, output_shape, hidden_width=width)
    raise SystemExit(f"unknown network method {method}")


def cmd_train(args) -> int:
    ds = import_dataset(args.dataset)
    spec = _parse_method(args.method, ds.metadata, ds.inputs.shape[1:], ds.labels.shape[1:], args.width)
    hyper = TrainHyper(batch_size=args.batch_size, adam=AdamHyper(lr=args.lr), max_epochs=args.epochs,
                       patience=args.patience, seed=args.seed or 0)
    model = train(spec, ds, hyper)
    out = _require_out(args)
    save_model(model, out, {"dataset": str(args.dataset), "dataset_metadata": ds.metadata})
    log.info("best val loss %.6g after %d epochs", min(h["val_loss"] for h in model.history), len(model.history))
    return 0


def evaluate_model(model, ds, part: str = "test") -> dict:
    x, y = ds.part(part)
    pred = model.predict(x)
    if model.spec.kind == "CNN":
        h, h_hat = unstack_complex(y), unstack_complex(pred)
    else:
        h, h_hat = unstack_vector(y)[..., None], unstack_vector(pred)[..., None]
    r = np.atleast_1d(nmse(h, h_hat))
    return {"part": part, "samples": int(len(r)), "nmse_db": float(10 * np.log10(r.mean())),
            "source": ds.metadata.get("source", "")}


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    ds = import_dataset(args.dataset)
    _write_json(evaluate_model(model, ds, args.part), args.out)
    return 0


def cmd_sweep(args) -> int:
    o = _overrides(args)
    if args.trials:
        o["trials"] = args.trials
    if args.estimators:
        o["estimators"] = args.estimators.split(",")
    cfg = load_config(args.config, o)
    threads = args.threads if args.threads else default_threads()
    records = run_sweep(cfg, threads=threads)
    out = _require_out(args)
    fmt = args.format or ("json" if out.suffix == ".json" else "csv")
    emit_results(records, fmt, out, cfg.to_dict())
    log.info("wrote %d records to %s", len(records), out)
    return 0


def cmd_flops(args) -> int:
    dims = (args.n_rx, args.n_tx, args.k, args.tau)
    layer = None
    if args.method.upper().startswith("CNN"):
        depth = cnn_depth(args.method.upper())
        layer = [2] + [args.width] * depth + [2]
    doc = {"method": args.method.upper(), "target": args.target.upper(),
           "flops": flops(args.method, args.target, dims, layer)}
    _write_json(doc, args.out)
    return 0


def cmd_import_external(args) -> int:
    ds = import_dataset(args.input)
    doc = {"samples": len(ds), "split": list(ds.split), "input_shape": list(ds.inputs.shape[1:]),
           "label_shape": list(ds.labels.shape[1:]), "source": ds.metadata["source"]}
    if args.model:
        doc["evaluation"] = evaluate_model(load_model(args.model), ds, args.part)
    if args.out and Path(args.out).suffix != ".json":
        export_dataset(ds, args.out)
    else:
        _write_json(doc, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fdmimo", description="Full-duplex MIMO channel estimation experiments")
    _global_flags(p, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-dataset", parents=[common], help="write a CEDS training dataset")
    _system_flags(g)
    g.add_argument("--target", choices=["SI", "UE", "RXTX", "si", "ue", "rxtx"], required=True)
    g.add_argument("--size", type=int, default=50_000)
    g.add_argument("--snr-grid", help="comma-separated SNR grid in dB for the target link")
    g.add_argument("--fixed-snr", type=float, default=0.0, help="SNR of the other link in dB")
    g.add_argument("--bits", type=int, choices=[1, 2, 3, 4])
    g.add_argument("--no-cancellation", action="store_true")
    g.add_argument("--spreads", help="comma-separated angular spreads for RXTX data")
    g.add_argument("--stream", type=int, default=0, help="random stream id")
    g.set_defaults(func=cmd_generate_dataset)

    t = sub.add_parser("train", parents=[common], help="train a CNN or FNN on a CEDS dataset")
    t.add_argument("--dataset", required=True)
    t.add_argument("--method", required=True, help="CNN0/CNN1/CNN2/CNN10 or FNN<hidden>")
    t.add_argument("--width", type=int, default=64, help="kernels (CNN) or units (FNN) per hidden layer")
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--batch-size", type=int, default=512)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--patience", type=int, default=10)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", parents=[common], help="NMSE of a trained model on a dataset split")
    e.add_argument("--model", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--part", default="test", choices=["train", "val", "test"])
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", parents=[common], help="Monte Carlo sweep to CSV/JSON")
    _system_flags(s)
    s.add_argument("--trials", type=int)
    s.add_argument("--estimators", help=f"comma-separated subset of {','.join(ESTIMATORS)}")
    s.add_argument("--format", choices=["csv", "json"])
    s.set_defaults(func=cmd_sweep)

    f = sub.add_parser("flops", parents=[common], help="FLOP count of one estimate")
    f.add_argument("--method", required=True)
    f.add_argument("--target", default="SI")
    f.add_argument("--n-rx", type=int, default=16)
    f.add_argument("--n-tx", type=int, default=16)
    f.add_argument("--k", type=int, default=8)
    f.add_argument("--tau", type=int, default=16)
    f.add_argument("--width", type=int, default=64)
    f.set_defaults(func=cmd_flops)

    i = sub.add_parser("import-external", parents=[common], help="validate an external CEDS file")
    i.add_argument("--in", dest="input", required=True)
    i.add_argument("--model", help="evaluate this model on the imported data")
    i.add_argument("--part", default="test", choices=["train", "val", "test"])
    i.set_defaults(func=cmd_import_external)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
