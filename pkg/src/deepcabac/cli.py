"""Command-line interface: compress, decompress, inspect, sweep, baseline.

Exit codes: 0 success, 1 usage or parameter error, 2 input/format error,
3 internal error. Diagnostics go to stderr.
"""

import argparse
import csv
import io
import os
import re
import shutil
import sys
import tempfile
import zlib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import baselines
from .binarizer import BinarizerConfig, encode_levels
from .codec import (MODES, Settings, evaluate, load_layers, quantize_layer, reconstruct,
                    decode_record_levels)
from .container import (IMPORTANCE_KINDS, KIND_CODEBOOK, KIND_LEVELS, KIND_RAW,
                        manifest_parse, read_stream)
from .errors import ContractError, DeepCabacError, FormatError, IngestionError
from .quantizers import (DEFAULT_DCV1_LAMBDAS, DEFAULT_S_VALUES, stepsizes_v2)

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3

SWEEP_COLUMNS = ["mode", "s_value", "delta", "lambda", "total_bits", "bits_per_weight", "mse",
                 "weighted_mse", "sparsity_fraction", "wall_time_ms", "status"]
BASELINE_COLUMNS = ["tensor", "weights", "entropy_bits", "huffman_bits", "huffman_table_bits",
                    "cabac_bits", "entropy_bpw", "huffman_bpw", "huffman_with_table_bpw",
                    "cabac_bpw"]
KIND_NAMES = {KIND_LEVELS: "levels", KIND_RAW: "raw", KIND_CODEBOOK: "codebook"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _log(*args):
    print(*args, file=sys.stderr)


def _safe_name(name: str) -> str:
    safe = re.sub(r"[^A-Za-z0-9_.-]", "_", name).lstrip(".")
    return safe or "tensor"


def _single(values, flag):
    if values is None:
        return None
    if len(values) != 1:
        raise ContractError(f"{flag} takes a single value here")
    return values[0]


def _settings(args, *, delta=None, lam=None, s_value=None) -> Settings:
    return Settings(mode=args.mode, delta=delta, lam=0.0 if lam is None else lam,
                    s_value=s_value, n_flags=args.n_flags, clusters=args.clusters)


def _load(args):
    return load_layers(manifest_parse(args.manifest), args.importance_kind)


def _write_csv(rows, columns, path):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\r\n")
    writer.writeheader()
    writer.writerows(rows)
    if path is None:
        sys.stdout.write(buf.getvalue())
    else:
        Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


# -- commands ------------------------------------------------------------------------

def cmd_compress(args) -> int:
    layers = _load(args)
    settings = _settings(args, delta=_single(args.delta, "--delta"),
                         lam=_single(args.lam, "--lambda"),
                         s_value=_single(args.s_values, "--s-values"))
    from .codec import compress_layers
    stream, records, _ = compress_layers(layers, settings, args.threads)
    if args.out is None:
        sys.stdout.buffer.write(stream)
        sys.stdout.buffer.flush()
    else:
        Path(args.out).write_bytes(stream)

    n_total = sum(r.count for r in records)
    _log(f"{'tensor':<24} {'weights':>10} {'delta':>12} {'bytes':>10} {'bits/w':>8}")
    for r in records:
        bpw = 8 * len(r.payload) / r.count if r.count else 0.0
        delta = "raw" if r.kind == KIND_RAW else ("codebook" if r.kind == KIND_CODEBOOK
                                                  else f"{r.delta:.6g}")
        _log(f"{r.name:<24} {r.count:>10} {delta:>12} {len(r.payload):>10} {bpw:>8.4f}")
    bits = 8 * len(stream)
    bpw = bits / n_total if n_total else 0.0
    ratio = 32 * n_total / bits if bits else 0.0
    _log(f"total: {len(stream)} bytes, {bpw:.4f} bits/weight, x{ratio:.2f} vs float32")
    return EXIT_OK


def cmd_decompress(args) -> int:
    data = Path(args.input).read_bytes()
    records = read_stream(data)
    # decode everything before touching the output directory
    arrays = [(r.name, reconstruct(r)) for r in records]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names, staged = set(), []
    with tempfile.TemporaryDirectory(dir=out_dir, prefix=".partial-") as tmp:
        for i, (name, arr) in enumerate(arrays):
            fname = _safe_name(name)
            if fname in names:
                fname = f"{fname}_{i}"
            names.add(fname)
            target = Path(tmp) / f"{fname}.npy"
            np.save(target, np.ascontiguousarray(arr, dtype="<f4"))
            staged.append((name, target, arr))
        for name, target, arr in staged:
            os.replace(target, out_dir / target.name)
            crc = zlib.crc32(np.ascontiguousarray(arr, dtype="<f4").tobytes())
            print(f"{name}\t{target.name}\t{'x'.join(map(str, arr.shape))}\tcrc32={crc:08x}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    data = Path(args.input).read_bytes()
    records = read_stream(data)
    print(f"stream: {len(data)} bytes, magic DCBC, version 1, {len(records)} tensors")
    for r in records:
        print(f"tensor {r.name!r}: kind={KIND_NAMES[r.kind]} shape={list(r.shape)} "
              f"payload_bytes={len(r.payload)}")
        if r.kind == KIND_RAW:
            continue
        levels = decode_record_levels(r)
        bpw = 8 * len(r.payload) / r.count if r.count else 0.0
        sparsity = float(np.mean(levels == 0)) if levels.size else 0.0
        h = baselines.entropy(baselines.epmd(levels)) if levels.size else 0.0
        delta = f"{r.delta:.9g}" if r.kind == KIND_LEVELS else f"codebook[{r.codebook.size}]"
        print(f"  delta={delta} n_flags={r.n_flags} bits_per_weight={bpw:.6f} "
              f"sparsity={sparsity:.6f} epmd_entropy={h:.6f}")
        if levels.size:
            values, counts = np.unique(levels, return_counts=True)
            top = np.argsort(-counts, kind="stable")[:args.top]
            hist = " ".join(f"{values[i]}:{counts[i]}" for i in sorted(top, key=lambda i: values[i]))
            print(f"  histogram ({values.size} distinct): {hist}")
    return EXIT_OK


def _sweep_points(args):
    if args.mode == "dcv1":
        s_values = args.s_values if args.s_values is not None else list(DEFAULT_S_VALUES)
        lambdas = args.lam if args.lam is not None else DEFAULT_DCV1_LAMBDAS.tolist()
        return [(s, None, lam) for s in s_values for lam in lambdas]
    if args.mode == "dcv2":
        lambdas, deltas = stepsizes_v2(args.lam, args.delta)
        return [(None, float(d), float(lam)) for lam in lambdas for d in deltas]
    raise ContractError("sweep supports --mode dcv1 or dcv2")


def _pareto(rows):
    ok = [i for i, r in enumerate(rows) if r["status"] == "ok"]
    ok.sort(key=lambda i: (rows[i]["total_bits"], rows[i]["weighted_mse"], i))
    front, best = [], float("inf")
    for i in ok:
        if rows[i]["weighted_mse"] < best:
            front.append(i)
            best = rows[i]["weighted_mse"]
    return front


def cmd_sweep(args) -> int:
    layers = _load(args)
    points = _sweep_points(args)

    def run(point):
        s, delta, lam = point
        row = {"mode": args.mode, "s_value": "" if s is None else s,
               "delta": "" if delta is None else delta, "lambda": lam}
        try:
            res = evaluate(layers, _settings(args, delta=delta, lam=lam, s_value=s))
        except DeepCabacError as exc:
            row.update({c: "" for c in SWEEP_COLUMNS if c not in row})
            row["status"] = f"error: {exc}"
            return row
        row.update(total_bits=res.total_bits, bits_per_weight=res.bits_per_weight,
                   mse=res.mse, weighted_mse=res.weighted_mse,
                   sparsity_fraction=res.sparsity, wall_time_ms=round(res.wall_time_ms, 3),
                   status="ok")
        return row

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            rows = list(pool.map(run, points))
    else:
        rows = [run(p) for p in points]
    _write_csv(rows, SWEEP_COLUMNS, args.csv)
    failed = sum(r["status"] != "ok" for r in rows)
    _log(f"sweep: {len(rows)} points, {failed} failed")

    frontier_dir = args.frontier_dir
    if frontier_dir is None and args.csv is not None:
        frontier_dir = Path(args.csv).with_name(Path(args.csv).stem + "_frontier")
    if frontier_dir is None:
        _log("no --csv or --frontier-dir given; frontier reconstructions not written")
        return EXIT_OK
    front = _pareto(rows)
    frontier_dir = Path(frontier_dir)
    if frontier_dir.exists():
        shutil.rmtree(frontier_dir)
    frontier_dir.mkdir(parents=True)
    index_rows = []
    for i in front:
        s, delta, lam = points[i]
        res = evaluate(layers, _settings(args, delta=delta, lam=lam, s_value=s), keep=True)
        point_dir = frontier_dir / f"point_{i:05d}"
        point_dir.mkdir()
        for q in res.layers:
            arr = q.recon.reshape(q.shape).astype("<f4")
            np.save(point_dir / f"{_safe_name(q.name)}.npy", arr)
        index_rows.append({"point": point_dir.name, **{c: rows[i][c] for c in SWEEP_COLUMNS}})
    _write_csv(index_rows, ["point"] + SWEEP_COLUMNS, frontier_dir / "frontier.csv")
    _log(f"pareto frontier: {len(front)} points written to {frontier_dir}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    layers = _load(args)
    settings = _settings(args, delta=_single(args.delta, "--delta"),
                         lam=_single(args.lam, "--lambda"),
                         s_value=_single(args.s_values, "--s-values"))
    settings.check()
    rows = []
    tot = dict(weights=0, entropy_bits=0.0, huffman_bits=0, huffman_table_bits=0, cabac_bits=0)
    for layer in layers:
        if layer.raw:
            continue
        q = quantize_layer(layer, settings)
        hist = baselines.epmd(q.levels)
        code = baselines.huffman_build(hist)
        n = q.levels.size
        row = dict(tensor=q.name, weights=n,
                   entropy_bits=baselines.entropy(hist) * n,
                   huffman_bits=code.total_bits(hist),
                   huffman_table_bits=code.table_bits(),
                   cabac_bits=8 * len(encode_levels(q.levels, BinarizerConfig(args.n_flags))))
        for k in tot:
            tot[k] += row[k]
        rows.append(row)
    rows.append(dict(tensor="TOTAL", **tot))
    for row in rows:
        n = row["weights"] or 1
        row["entropy_bpw"] = row["entropy_bits"] / n
        row["huffman_bpw"] = row["huffman_bits"] / n
        row["huffman_with_table_bpw"] = (row["huffman_bits"] + row["huffman_table_bits"]) / n
        row["cabac_bpw"] = row["cabac_bits"] / n
    _write_csv(rows, BASELINE_COLUMNS, args.csv)
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

def _add_quant_flags(p, *, sweep=False):
    p.add_argument("--manifest", required=True, help="JSON manifest listing the tensors")
    p.add_argument("--mode", required=True,
                   choices=("dcv1", "dcv2") if sweep else MODES)
    many = " (comma-separated grid)" if sweep else ""
    p.add_argument("--delta", type=_float_list, help="step size" + many)
    p.add_argument("--lambda", dest="lam", type=_float_list, help="rate weight" + many)
    p.add_argument("--s-values", type=_float_list, help="DC-v1 coarseness S" + many)
    p.add_argument("--n-flags", type=int, default=10, help="number of AbsGr flags (default 10)")
    p.add_argument("--clusters", type=int, default=256, help="cluster count for lloyd mode")
    p.add_argument("--importance-kind", choices=IMPORTANCE_KINDS, default="fisher",
                   help="how to read importance files (default fisher)")
    p.add_argument("--threads", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deepcabac", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="quantize and entropy-code a manifest")
    _add_quant_flags(p)
    p.add_argument("--out", help="output stream (default: stdout)")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="write one NPY file per tensor")
    p.add_argument("input")
    p.add_argument("out_dir")
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("inspect", help="describe a compressed stream")
    p.add_argument("input")
    p.add_argument("--top", type=int, default=16, help="histogram entries to show")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("sweep", help="grid search over quantizer hyperparameters")
    _add_quant_flags(p, sweep=True)
    p.add_argument("--csv", help="report path (default: stdout)")
    p.add_argument("--frontier-dir", help="where to write Pareto-frontier reconstructions")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("baseline", help="compare scalar Huffman, CABAC and the EPMD entropy")
    _add_quant_flags(p)
    p.add_argument("--csv", help="report path (default: stdout)")
    p.set_defaults(func=cmd_baseline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        _log("deepcabac: error: --threads must be >= 1")
        return EXIT_USAGE
    try:
        return args.func(args)
    except ContractError as exc:
        _log(f"deepcabac: error: {exc}")
        return EXIT_USAGE
    except (IngestionError, FormatError, DeepCabacError) as exc:
        tensor = getattr(exc, "tensor", None)
        _log(f"deepcabac: error: {exc}" + (f" [tensor {tensor}]" if tensor else ""))
        return EXIT_INPUT
    except OSError as exc:
        _log(f"deepcabac: error: {exc}")
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        _log(f"deepcabac: internal error: {type(exc).__name__}: {exc}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
