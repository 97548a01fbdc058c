"""End-to-end compression of a list of tensors, and its inverse."""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .binarizer import BinarizerConfig, decode_levels, encode_levels
from .container import (KIND_CODEBOOK, KIND_LEVELS, KIND_RAW, ManifestEntry, TensorRecord,
                        load_importance, load_npy, write_stream)
from .errors import ContractError, CorruptStreamError
from .quantizers import (ImportanceMap, QuantGrid, RdHyperParams, WeightTensor, dequantize,
                         distortion, lloyd_quantize, rd_quantize, stepsizes_v1,
                         uniform_quantize)

MODES = ("uniform", "dcv1", "dcv2", "lloyd")


@dataclass
class Layer:
    tensor: WeightTensor
    importance: ImportanceMap
    has_importance: bool = False
    raw: bool = False


@dataclass
class Settings:
    mode: str = "dcv2"
    delta: Optional[float] = None
    lam: float = 0.0
    s_value: Optional[float] = None
    n_flags: int = 10
    clusters: int = 256

    def check(self):
        if self.mode not in MODES:
            raise ContractError(f"unknown mode {self.mode!r}; choose from {', '.join(MODES)}")
        if self.mode in ("uniform", "dcv2") and self.delta is None:
            raise ContractError(f"mode {self.mode} needs --delta")
        if self.mode == "dcv1" and self.s_value is None:
            raise ContractError("mode dcv1 needs an S value (--s-values)")
        if self.lam < 0:
            raise ContractError("lambda must be >= 0")
        BinarizerConfig(self.n_flags)


@dataclass
class QuantizedLayer:
    name: str
    shape: tuple
    kind: int
    levels: Optional[np.ndarray] = field(default=None, repr=False)
    delta: float = 0.0
    codebook: Optional[np.ndarray] = field(default=None, repr=False)
    zero_index: int = 0
    recon: Optional[np.ndarray] = field(default=None, repr=False)


def load_layers(entries: Sequence[ManifestEntry], importance_kind: str = "fisher") -> List[Layer]:
    layers = []
    for e in entries:
        t = load_npy(e.weights)
        t.name = e.name
        has = e.importance is not None and importance_kind != "uniform"
        layers.append(Layer(t, load_importance(e.importance if has else None, t,
                                               importance_kind if has else "uniform"),
                            has, e.raw))
    return layers


def _f32(x: float) -> float:
    return float(np.float32(x))


def layer_step_size(layer: Layer, settings: Settings) -> float:
    """Step size the given mode uses for this layer, rounded to float32."""
    if settings.mode == "dcv1":
        if not layer.has_importance:
            raise ContractError(f"{layer.tensor.name}: dcv1 needs an importance (or sigma) file")
        sigma_min = layer.importance.sigma_min()
        w_max = float(np.abs(layer.tensor.values).max()) if layer.tensor.size else 0.0
        delta = sigma_min if w_max == 0 else stepsizes_v1(w_max, sigma_min, [settings.s_value])[0]
    else:
        delta = settings.delta
    delta = _f32(delta)
    if not (delta > 0 and math.isfinite(delta)):
        raise ContractError(f"{layer.tensor.name}: step size {delta} is not positive in float32")
    return delta


def quantize_layer(layer: Layer, settings: Settings) -> QuantizedLayer:
    t = layer.tensor
    if layer.raw:
        return QuantizedLayer(t.name, t.shape, KIND_RAW, recon=t.values.copy())
    if settings.mode == "lloyd":
        res = lloyd_quantize(t.values, layer.importance, settings.clusters, settings.lam)
        order = np.argsort(res.centers, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        codebook = res.centers[order].astype(np.float32)
        zero_index = int(np.flatnonzero(codebook == 0)[0])
        levels = rank[res.assignments] - zero_index
        return QuantizedLayer(t.name, t.shape, KIND_CODEBOOK, levels, 1.0, codebook, zero_index,
                              codebook[levels + zero_index])
    delta = layer_step_size(layer, settings)
    if settings.mode == "uniform":
        grid = uniform_quantize(t, delta)
    else:
        f = layer.importance if settings.mode == "dcv1" else None
        grid = rd_quantize(t, f, RdHyperParams(settings.lam, delta, settings.n_flags))
    return QuantizedLayer(t.name, t.shape, KIND_LEVELS, grid.levels, delta, recon=dequantize(grid))


def encode_layer(q: QuantizedLayer, n_flags: int) -> TensorRecord:
    if q.kind == KIND_RAW:
        payload = q.recon.astype("<f4").tobytes()
        return TensorRecord(q.name, q.shape, 0.0, 0, payload, KIND_RAW)
    payload = encode_levels(q.levels, BinarizerConfig(n_flags))
    return TensorRecord(q.name, q.shape, q.delta, n_flags, payload, q.kind, q.codebook,
                        q.zero_index)


def _map(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def compress_layers(layers: Sequence[Layer], settings: Settings, threads: int = 1):
    """Quantize and code every layer; returns (stream bytes, records, quantized layers)."""
    settings.check()

    def work(layer):
        q = quantize_layer(layer, settings)
        return q, encode_layer(q, settings.n_flags)

    done = _map(work, list(layers), threads)
    records = [r for _, r in done]
    return write_stream(records), records, [q for q, _ in done]


def decode_record_levels(rec: TensorRecord) -> np.ndarray:
    if rec.kind == KIND_RAW:
        raise ContractError(f"{rec.name}: raw record has no levels")
    return decode_levels(rec.payload, rec.count, BinarizerConfig(rec.n_flags),
                         what=f"payload of tensor {rec.name!r}")


def reconstruct(rec: TensorRecord, levels: Optional[np.ndarray] = None) -> np.ndarray:
    """Float32 tensor (shaped) held by a record."""
    if rec.kind == KIND_RAW:
        return np.frombuffer(rec.payload, dtype="<f4").astype(np.float32).reshape(rec.shape)
    if levels is None:
        levels = decode_record_levels(rec)
    if rec.kind == KIND_CODEBOOK:
        idx = levels + rec.zero_index
        if idx.size and (idx.min() < 0 or idx.max() >= rec.codebook.size):
            raise CorruptStreamError(f"{rec.name}: codebook index out of range")
        return rec.codebook[idx].reshape(rec.shape)
    return dequantize(QuantGrid(rec.delta, levels)).reshape(rec.shape)


@dataclass
class PointResult:
    total_bits: int
    n_weights: int
    mse: float
    weighted_mse: float
    sparsity: float
    wall_time_ms: float
    stream: bytes = field(default=b"", repr=False)
    layers: list = field(default_factory=list, repr=False)

    @property
    def bits_per_weight(self) -> float:
        return self.total_bits / self.n_weights if self.n_weights else 0.0


def evaluate(layers: Sequence[Layer], settings: Settings, keep: bool = False) -> PointResult:
    """Compress once and measure size and (importance-weighted) distortion.

    Distortion and sparsity pool the quantized (non-raw) weights; size is the
    complete stream, raw records and headers included.
    """
    start = time.perf_counter()
    stream, records, qs = compress_layers(layers, settings)
    err = werr = 0.0
    n_q = zeros = n_all = 0
    for layer, q in zip(layers, qs):
        n_all += layer.tensor.size
        if q.kind == KIND_RAW:
            continue
        mse, wmse = distortion(layer.tensor, q.recon, layer.importance)
        n = layer.tensor.size
        err += mse * n
        werr += wmse * n
        n_q += n
        zeros += int(np.count_nonzero(q.levels == 0))
    elapsed = 1000 * (time.perf_counter() - start)
    return PointResult(8 * len(stream), n_all, err / max(n_q, 1), werr / max(n_q, 1),
                       zeros / max(n_q, 1), elapsed, stream if keep else b"",
                       qs if keep else [])
