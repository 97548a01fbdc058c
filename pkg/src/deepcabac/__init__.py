"""Neural-network weight compression with context-adaptive binary arithmetic coding."""

from .binarizer import (BinarizerConfig, ContextSet, binarize, debinarize, decode_level,
                        decode_levels, encode_level, encode_levels, estimate_level_bits)
from .cabac import (ArithmeticDecoder, ArithmeticEncoder, ContextModel, bin_cost,
                    context_new, context_update)
from .quantizers import (ImportanceMap, QuantGrid, RdHyperParams, WeightTensor, dequantize,
                         distortion, lloyd_quantize, rd_quantize, stepsizes_v1, stepsizes_v2,
                         uniform_quantize)

__version__ = "0.1.0"

__all__ = [
    "ArithmeticDecoder", "ArithmeticEncoder", "BinarizerConfig", "ContextModel", "ContextSet",
    "ImportanceMap", "QuantGrid", "RdHyperParams", "WeightTensor", "bin_cost", "binarize",
    "context_new", "context_update", "debinarize", "decode_level", "decode_levels",
    "dequantize", "distortion", "encode_level", "encode_levels", "estimate_level_bits",
    "lloyd_quantize", "rd_quantize", "stepsizes_v1", "stepsizes_v2", "uniform_quantize",
]
