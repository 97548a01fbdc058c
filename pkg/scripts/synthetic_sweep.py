"""Write a synthetic two-layer model to disk and run a small DC-v1 and DC-v2 sweep on it."""

import argparse
import csv
import json
from pathlib import Path

import numpy as np

from deepcabac.cli import main as cli


def make_model(out: Path, seed: int):
    rng = np.random.default_rng(seed)
    out.mkdir(parents=True, exist_ok=True)
    tensors = []
    for name, shape, scale in [("conv", (64, 32, 3, 3), 0.05), ("fc", (256, 128), 0.02)]:
        w = rng.laplace(scale=scale, size=shape).astype("<f4")
        sigma = (scale * rng.uniform(0.5, 2.0, size=shape)).astype("<f4")
        np.save(out / f"{name}.npy", w)
        np.save(out / f"{name}_sigma.npy", sigma)
        tensors.append({"weights": f"{name}.npy", "importance": f"{name}_sigma.npy",
                        "name": name})
    np.save(out / "bias.npy", rng.normal(size=64).astype("<f4"))
    tensors.append({"weights": "bias.npy", "importance": None, "name": "bias", "raw": True})
    (out / "manifest.json").write_text(json.dumps({"tensors": tensors}, indent=1))
    return out / "manifest.json"


def summarize(path: Path):
    with open(path, newline="") as f:
        rows = [r for r in csv.DictReader(f) if r["status"] == "ok"]
    rows.sort(key=lambda r: float(r["bits_per_weight"]))
    print(f"{path.name}: {len(rows)} points; lowest-rate five:")
    for r in rows[:5]:
        print(f"  S={r['s_value'] or '-':>5} delta={r['delta'] or '-':>10} lambda={r['lambda']:>10}"
              f"  bpw={float(r['bits_per_weight']):.4f} wmse={float(r['weighted_mse']):.4g}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("sweep_out"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    manifest = make_model(args.out, args.seed)
    common = ["--manifest", str(manifest), "--importance-kind", "sigma",
              "--threads", str(args.threads)]
    cli(["sweep", *common, "--mode", "dcv1", "--s-values", "0,16,64,128",
         "--lambda", "0,0.0001,0.001,0.01", "--csv", str(args.out / "dcv1.csv")])
    cli(["sweep", *common, "--mode", "dcv2", "--lambda", "0,0.00001,0.0001,0.001",
         "--delta", "0.004,0.016,0.064", "--csv", str(args.out / "dcv2.csv")])
    summarize(args.out / "dcv1.csv")
    summarize(args.out / "dcv2.csv")


if __name__ == "__main__":
    main()
