"""Compare CABAC, scalar Huffman and the EPMD entropy on synthetic sparse tensors.

Two inputs: i.i.d. sparsity, and run-structured sparsity (zeros and nonzeros in
runs) where the adaptive coder can beat the memoryless entropy.
"""

import argparse

import numpy as np

from deepcabac.baselines import entropy, epmd, huffman_build
from deepcabac.binarizer import encode_levels
from deepcabac.quantizers import uniform_quantize


def sparse_iid(rng, n, density):
    return np.where(rng.random(n) < density, rng.normal(size=n), 0.0)


def sparse_runs(rng, n, density, mean_run=64):
    out = np.zeros(n)
    pos = 0
    on = False
    while pos < n:
        length = int(rng.geometric(1 / (mean_run * (density if on else 1 - density) * 2)))
        if on:
            out[pos:pos + length] = rng.normal(size=min(length, n - pos))
        pos += length
        on = not on
    return out


def measure(w, levels_target):
    delta = 2 * float(np.abs(w).max()) / levels_target
    levels = uniform_quantize(w.astype(np.float32), delta).levels
    h = epmd(levels)
    code = huffman_build(h)
    n = levels.size
    return {"sparsity": float(np.mean(levels == 0)), "distinct": len(h.counts),
            "cabac": 8 * len(encode_levels(levels)) / n,
            "huffman": code.total_bits(h) / n,
            "huffman+table": (code.total_bits(h) + code.table_bits()) / n,
            "entropy": entropy(h)}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1_000_000)
    ap.add_argument("--density", type=float, default=0.1)
    ap.add_argument("--levels", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    cols = ["sparsity", "distinct", "cabac", "huffman", "huffman+table", "entropy"]
    print(f"{'input':<8}" + "".join(f"{c:>15}" for c in cols))
    for name, gen in [("iid", sparse_iid), ("runs", sparse_runs)]:
        r = measure(gen(rng, args.n, args.density), args.levels)
        print(f"{name:<8}" + "".join(f"{r[c]:>15.4f}" if isinstance(r[c], float)
                                     else f"{r[c]:>15}" for c in cols))
    print("columns cabac..entropy are bits per weight")


if __name__ == "__main__":
    main()
