"""Scalar quantizers for weight tensors.

Levels are integers on an equidistant grid, reconstruction ``q = delta * level``.
``rd_quantize`` picks, per weight and in row-major order, the level minimizing

    F_i * (w_i - delta * k)**2 + lam * bits(k)

where ``bits(k)`` is the code length the context coder would currently spend
on ``k``. After each choice the contexts are updated as if the level had been
coded, so the estimates follow the coder state exactly.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .binarizer import BinarizerConfig, ContextSet
from .cabac import COST_TABLE
from .errors import ContractError

RD_WINDOW_RADIUS = 4

DEFAULT_S_VALUES = (0, 8, 16, 32, 64, 96, 128, 160, 172, 192, 256)


def _default_dcv1_lambdas():
    return 0.0001 * 2.0 ** (math.log2(1e2) * np.arange(100) / 100)


def _default_dcv2_lambdas():
    return 0.02 / 20 * np.arange(21) + 0.01


def _default_dcv2_deltas():
    d1 = 0.001 * 2.0 ** (math.log2(0.15 / 0.001) * np.arange(71) / 70)
    d2 = 0.064 * 2.0 ** (math.log2(0.128 / 0.064) * np.arange(31) / 30)
    return d1, d2


DEFAULT_DCV1_LAMBDAS = _default_dcv1_lambdas()
DEFAULT_DCV2_LAMBDAS = _default_dcv2_lambdas()
DEFAULT_DCV2_DELTAS = np.concatenate(_default_dcv2_deltas())


@dataclass
class WeightTensor:
    name: str
    shape: Tuple[int, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.shape = tuple(int(d) for d in self.shape)
        self.values = np.ascontiguousarray(self.values, dtype=np.float32).ravel()
        if math.prod(self.shape) != self.values.size:
            raise ContractError(
                f"{self.name}: shape {self.shape} holds {math.prod(self.shape)} values, "
                f"got {self.values.size}")
        if not np.isfinite(self.values).all():
            raise ContractError(f"{self.name}: non-finite weights")

    @classmethod
    def from_array(cls, name: str, array) -> "WeightTensor":
        array = np.asarray(array, dtype=np.float32)
        return cls(name, array.shape, array.reshape(-1))

    @property
    def size(self) -> int:
        return self.values.size

    def array(self) -> np.ndarray:
        return self.values.reshape(self.shape)


@dataclass
class ImportanceMap:
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64).ravel()
        if not np.isfinite(self.values).all() or (self.values < 0).any():
            raise ContractError("importance values must be finite and nonnegative")
        if self.values.size and not (self.values > 0).any():
            raise ContractError("importance map needs at least one positive entry")

    @classmethod
    def ones(cls, n: int) -> "ImportanceMap":
        return cls(np.ones(n))

    @classmethod
    def from_sigma(cls, sigma, floor: float = 1e-8) -> "ImportanceMap":
        sigma = np.maximum(np.asarray(sigma, dtype=np.float64), floor)
        return cls(1.0 / sigma ** 2)

    def sigma_min(self) -> float:
        """Smallest standard deviation implied by ``F = 1 / sigma**2``."""
        return float(1.0 / np.sqrt(self.values.max()))


@dataclass
class QuantGrid:
    delta: float
    levels: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ContractError(f"step size must be positive and finite, got {self.delta}")
        self.levels = np.asarray(self.levels, dtype=np.int64)


@dataclass
class LloydResult:
    centers: np.ndarray
    assignments: np.ndarray
    loss_history: list
    iterations: int = 0

    @property
    def reconstruction(self) -> np.ndarray:
        return self.centers[self.assignments]


@dataclass(frozen=True)
class RdHyperParams:
    lam: float
    delta: float
    n_flags: int = 10

    def __post_init__(self):
        if not self.lam >= 0:
            raise ContractError(f"lambda must be >= 0, got {self.lam}")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ContractError(f"delta must be positive, got {self.delta}")


def _weights(t) -> np.ndarray:
    values = t.values if isinstance(t, WeightTensor) else np.asarray(t, dtype=np.float32).ravel()
    if not np.isfinite(values).all():
        raise ContractError("non-finite weights")
    return values


def _importance(F, n: int) -> np.ndarray:
    if F is None:
        return np.ones(n)
    values = F.values if isinstance(F, ImportanceMap) else np.asarray(F, dtype=np.float64).ravel()
    if values.size != n:
        raise ContractError(f"importance has {values.size} entries for {n} weights")
    if (values < 0).any():
        raise ContractError("importance values must be nonnegative")
    return np.ascontiguousarray(values, dtype=np.float64)


def uniform_quantize(t, delta: float) -> QuantGrid:
    """Nearest grid level, ties away from zero."""
    if not (delta > 0 and math.isfinite(delta)):
        raise ContractError(f"delta must be positive, got {delta}")
    scaled = _weights(t).astype(np.float64) / delta
    levels = np.trunc(scaled)
    frac = scaled - levels   # exact in binary floating point
    levels += frac >= 0.5
    levels -= frac <= -0.5
    if levels.size and np.abs(levels).max() >= 2.0 ** 62:
        raise ContractError("delta too small: levels overflow")
    return QuantGrid(delta, levels.astype(np.int64))


def rd_quantize(t, F: Optional[ImportanceMap], hp: RdHyperParams,
                ctxs: Optional[ContextSet] = None, *, commit: bool = True,
                radius: int = RD_WINDOW_RADIUS, max_golomb_order: int = 31) -> QuantGrid:
    """Rate-distortion optimized levels; see the module docstring.

    Candidates are the ``2 * radius + 1`` levels around the nearest neighbour
    plus level 0. Equal costs resolve to the nearest neighbour, then to the
    smaller magnitude, then to the smaller value. With ``commit=False`` the
    context states stay frozen for the whole tensor.
    """
    w = _weights(t)
    f = _importance(F, w.size)
    cfg = BinarizerConfig(hp.n_flags, max_golomb_order)
    ctxs = ContextSet.fresh(cfg) if ctxs is None else ctxs
    states = ctxs.states()
    if states.size != cfg.n_contexts:
        raise ContractError("context set does not match the binarizer configuration")
    levels = np.empty(w.size, dtype=np.int64)
    status = _kernels.rd_quantize(w, f, float(hp.delta), float(hp.lam), cfg.n_flags,
                                  cfg.max_golomb_order, int(radius), states, commit,
                                  COST_TABLE, levels)
    _kernels.raise_for_status(status)
    if commit:
        ctxs.load_states(states)
    return QuantGrid(hp.delta, levels)


def dequantize(g: QuantGrid) -> np.ndarray:
    return np.multiply(g.levels.astype(np.float32), np.float32(g.delta), dtype=np.float32)


def weighted_centroids(w, F, assignments, k: int) -> np.ndarray:
    """F-weighted mean of each cluster; NaN for clusters without weight mass."""
    sf = np.bincount(assignments, weights=F, minlength=k)
    sfw = np.bincount(assignments, weights=F * w, minlength=k)
    with np.errstate(invalid="ignore", divide="ignore"):
        return sfw / sf


def _assign(w, F, centers, penalty, chunk):
    out = np.empty(w.size, dtype=np.int64)
    for s in range(0, w.size, chunk):
        ws, fs = w[s:s + chunk, None], F[s:s + chunk, None]
        cost = fs * (ws - centers[None, :]) ** 2 + penalty[None, :]
        out[s:s + chunk] = np.argmin(cost, axis=1)
    return out


def _lagrangian(w, F, centers, assignments, log_p, lam):
    d = w - centers[assignments]
    return float(np.sum(F * d * d) - lam * np.sum(log_p[assignments]))


def lloyd_quantize(w, F, K: int, lam: float, *, max_iter: int = 300,
                   tol: float = 1e-9) -> LloydResult:
    """Importance-weighted Lloyd clustering with an entropy penalty and a zero center.

    Each round assigns every weight to ``argmin_j F_i (w_i - C_j)**2 - lam log2 P_j``
    over clusters with ``P_j > 0``, moves centers to the F-weighted centroids, sets
    ``P_j`` to the cluster frequencies and forces one center to exactly 0. The
    zeroed cluster is the one whose move to 0 costs the least weighted distortion
    (``sum F * C_j**2``, ties to the smallest ``|C_j|``); empty clusters cost
    nothing and are picked first.
    """
    w = np.asarray(w, dtype=np.float64).ravel()
    f = _importance(F, w.size)
    if K < 2:
        raise ContractError("need at least 2 clusters")
    if w.size == 0:
        raise ContractError("no weights to cluster")
    if lam < 0:
        raise ContractError("lambda must be >= 0")
    distinct = np.unique(w).size
    k = K
    if distinct < K:
        # surplus clusters stay empty and drop out of the assignment
        warnings.warn(f"only {distinct} distinct weights; at most {max(distinct, 1)} of {K} "
                      "clusters can be used", RuntimeWarning, stacklevel=2)

    centers = np.linspace(w.min(), w.max(), k)
    prob = np.full(k, 1.0 / k)
    chunk = max(1, (1 << 20) // k)
    history = []
    assignments = np.zeros(w.size, dtype=np.int64)
    it = 0
    for it in range(1, max_iter + 1):
        active = prob > 0
        penalty = np.where(active, -lam * np.log2(np.where(active, prob, 1.0)), np.inf)
        assignments = _assign(w, f, centers, penalty, chunk)

        counts = np.bincount(assignments, minlength=k)
        sf = np.bincount(assignments, weights=f, minlength=k)
        cent = weighted_centroids(w, f, assignments, k)
        plain = np.bincount(assignments, weights=w, minlength=k) / np.maximum(counts, 1)
        centers = np.where(sf > 0, cent, np.where(counts > 0, plain, centers))
        prob = counts / w.size

        zero_cost = np.where(sf > 0, sf * centers ** 2, 0.0)
        j = np.lexsort((np.abs(centers), zero_cost))[0]
        centers[j] = 0.0

        with np.errstate(divide="ignore"):
            log_p = np.log2(np.where(prob > 0, prob, 1.0))
        history.append(_lagrangian(w, f, centers, assignments, log_p, lam))
        if len(history) > 1:
            prev = history[-2]
            if prev - history[-1] <= tol * max(abs(prev), np.finfo(float).tiny):
                break
    return LloydResult(centers, assignments, history, it)


def stepsizes_v1(w_max_abs: float, sigma_min: float,
                 S_values: Sequence[float] = DEFAULT_S_VALUES) -> np.ndarray:
    """Per-layer step sizes ``2|w_max| / (2|w_max| / sigma_min + S)``, one per S.

    Evaluated as ``sigma_min * (a / (a + S * sigma_min))`` with ``a = 2|w_max|``,
    which returns ``sigma_min`` bit-exactly at S = 0.
    """
    if not (w_max_abs > 0 and math.isfinite(w_max_abs)):
        raise ContractError(f"|w_max| must be positive, got {w_max_abs}")
    if not (sigma_min > 0 and math.isfinite(sigma_min)):
        raise ContractError(f"sigma_min must be positive, got {sigma_min}")
    s = np.asarray(S_values, dtype=np.float64)
    if (s < 0).any():
        raise ContractError("S values must be >= 0")
    a = 2.0 * abs(w_max_abs)
    return sigma_min * (a / (a + s * sigma_min))


def stepsizes_v2(lambdas: Optional[Sequence[float]] = None,
                 deltas: Optional[Sequence[float]] = None) -> Tuple[np.ndarray, np.ndarray]:
    lam = DEFAULT_DCV2_LAMBDAS.copy() if lambdas is None else np.asarray(lambdas, dtype=np.float64)
    dl = DEFAULT_DCV2_DELTAS.copy() if deltas is None else np.asarray(deltas, dtype=np.float64)
    if (lam < 0).any() or (dl <= 0).any():
        raise ContractError("lambdas must be >= 0 and step sizes > 0")
    return lam, dl


def distortion(original, recon, F=None) -> Tuple[float, float]:
    w = _weights(original).astype(np.float64)
    q = np.asarray(recon, dtype=np.float64).ravel()
    if q.size != w.size:
        raise ContractError(f"reconstruction has {q.size} values for {w.size} weights")
    f = _importance(F, w.size)
    if w.size == 0:
        return 0.0, 0.0
    err = (w - q) ** 2
    return float(err.mean()), float((f * err).mean())
