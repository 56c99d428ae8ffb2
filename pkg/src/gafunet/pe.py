"""Progressive expansion: parameter-free Maclaurin partial-sum feature maps.

For an input map x, term k of the chosen function's series is c_k * x**p_k
and the k-th expanded map is the partial sum of the first k terms. The
layer has no trainable parameters; it only widens the channel axis.
"""

from dataclasses import dataclass, field
from math import factorial

from . import tensor as T

# first 8 nonzero Maclaurin terms of tanh (odd powers 1..15)
_TANH_COEFFS = [
    1.0, -1.0 / 3.0, 2.0 / 15.0, -17.0 / 315.0,
    62.0 / 2835.0, -1382.0 / 155925.0, 21844.0 / 6081075.0, -929569.0 / 638512875.0,
]


def maclaurin_terms(function_id, k):
    """(coefficient, power) pairs of the first k nonzero series terms."""
    if k < 1:
        raise ValueError(f"term count must be >= 1, got {k}")
    if function_id == "arctan":
        return [((-1.0) ** m / (2 * m + 1), 2 * m + 1) for m in range(k)]
    if function_id == "sin":
        return [((-1.0) ** m / factorial(2 * m + 1), 2 * m + 1) for m in range(k)]
    if function_id == "tanh":
        if k > len(_TANH_COEFFS):
            raise ValueError(f"tanh series tabulated up to {len(_TANH_COEFFS)} terms")
        return [(_TANH_COEFFS[m], 2 * m + 1) for m in range(k)]
    raise ValueError(f"unknown expansion function: {function_id}")


@dataclass
class PeSpec:
    function_id: str = "arctan"
    terms: int = 2
    coefficients: list = field(default_factory=list)
    powers: list = field(default_factory=list)

    def __post_init__(self):
        pairs = maclaurin_terms(self.function_id, self.terms)
        self.coefficients = [c for c, _ in pairs]
        self.powers = [p for _, p in pairs]


def pe_expand(feature_map, spec, mode="concat"):
    """Progressively expanded maps S_1..S_K of an [N,C,H,W] tensor.

    ``mode="concat"`` concatenates all K partial sums along the channel
    axis ([N, C*K, H, W]); ``mode="last"`` returns only S_K.
    """
    partial = None
    maps = []
    for c, p in zip(spec.coefficients, spec.powers):
        term = T.scale(T.power(feature_map, p), c)
        partial = term if partial is None else T.add(partial, term)
        maps.append(partial)
    if mode == "last":
        return maps[-1]
    if mode == "concat":
        return maps[0] if len(maps) == 1 else T.concat(maps, axis=1)
    raise ValueError(f"unknown mode: {mode}")


def pe_param_count(spec):
    """The expansion carries no trainable parameters."""
    return 0
