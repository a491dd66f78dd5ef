"""Learned, bitwise-decomposable quantizers.

A basis ``v`` of ``k`` reals together with a code domain defines the level
set ``{v . b}`` over all ``2**k`` codes ``b``.  Signed bases (weights) use
codes in ``{-1, 1}**k``; unsigned bases (activations) use ``{0, 1}**k``.
Values map to levels through half-open intervals ``(t_l, t_{l+1}]``, so a
value sitting exactly on a threshold takes the lower level.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .exceptions import DimensionError

SIGNED = "signed"
UNSIGNED = "unsigned"
DOMAINS = (SIGNED, UNSIGNED)

_DIGITS = {SIGNED: (-1, 1), UNSIGNED: (0, 1)}


def _combine(v, code) -> float:
    # Single source of truth for v . b; every level in the package comes from here.
    total = 0.0
    for vi, bi in zip(v, code):
        total += vi * bi
    return total


@dataclass(frozen=True)
class QuantizerBasis:
    """``k`` basis reals plus a code domain.

    ``degenerate`` marks a basis fitted on data with no usable spread (all
    zeros, or no data at all); activation quantization is skipped for such
    bases.
    """

    v: tuple[float, ...]
    domain: str = SIGNED
    degenerate: bool = False
    error: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")
        object.__setattr__(self, "v", tuple(float(x) for x in self.v))
        if len(self.v) < 1:
            raise ValueError("basis needs k >= 1")

    @property
    def k(self) -> int:
        return len(self.v)

    @cached_property
    def codes(self) -> np.ndarray:
        """All ``2**k`` codes in lexicographic order, shape ``(2**k, k)``."""
        digits = _DIGITS[self.domain]
        return np.array(list(itertools.product(digits, repeat=self.k)), dtype=np.int8)

    @cached_property
    def _tables(self):
        first_code: dict[float, tuple[int, ...]] = {}
        for code in self.codes.tolist():
            first_code.setdefault(_combine(self.v, code), tuple(code))
        lv = sorted(first_code)
        thresholds = [(lv[i] + lv[i + 1]) / 2.0 for i in range(len(lv) - 1)]
        level_codes = np.array([first_code[x] for x in lv], dtype=np.int8)
        return np.array(lv), np.array(thresholds), level_codes

    @property
    def levels(self) -> np.ndarray:
        return self._tables[0]

    @property
    def thresholds(self) -> np.ndarray:
        return self._tables[1]

    def level_index(self, x) -> np.ndarray:
        # side="left" counts thresholds strictly below x, giving (t_l, t_{l+1}].
        return np.searchsorted(self.thresholds, np.asarray(x, dtype=float), side="left")

    def quantize(self, x):
        idx = self.level_index(x)
        out = self.levels[idx]
        return float(out) if np.ndim(out) == 0 else out

    def encode(self, x) -> np.ndarray:
        return self._tables[2][self.level_index(x)]

    def decode(self, codes) -> np.ndarray:
        codes = np.asarray(codes)
        flat = codes.reshape(-1, self.k).tolist()
        out = np.array([_combine(self.v, c) for c in flat], dtype=float)
        return out.reshape(codes.shape[:-1])

    def to_dict(self) -> dict:
        d = {"domain": self.domain, "k": self.k, "v": list(self.v), "degenerate": self.degenerate}
        if self.error is not None:
            d["error"] = self.error
        return d

    @classmethod
    def from_dict(cls, d: dict) -> QuantizerBasis:
        v = d["v"]
        if len(v) != d["k"]:
            raise ValueError("basis length does not match k")
        return cls(tuple(v), d["domain"], bool(d.get("degenerate", False)), d.get("error"))


def zero_basis(k: int, domain: str = SIGNED) -> QuantizerBasis:
    return QuantizerBasis((0.0,) * k, domain, degenerate=True, error=0.0)


@dataclass(frozen=True)
class QuantizerPair:
    weights: QuantizerBasis
    activations: QuantizerBasis

    def __post_init__(self):
        if self.weights.domain != SIGNED or self.activations.domain != UNSIGNED:
            raise ValueError("weights must be signed and activations unsigned")

    def to_dict(self) -> dict:
        return {"weights": self.weights.to_dict(), "activations": self.activations.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> QuantizerPair:
        return cls(QuantizerBasis.from_dict(d["weights"]), QuantizerBasis.from_dict(d["activations"]))


def levels(basis: QuantizerBasis) -> tuple[np.ndarray, np.ndarray]:
    """Sorted distinct levels and the midpoint thresholds between them."""
    return basis.levels, basis.thresholds


def quantize(x, basis: QuantizerBasis):
    return basis.quantize(x)


def encode(x, basis: QuantizerBasis) -> np.ndarray:
    """Code of the level containing ``x``; lexicographically smallest on ties."""
    return basis.encode(x)


def quantization_error(values, basis: QuantizerBasis) -> float:
    x = np.asarray(values, dtype=float).ravel()
    d = x - basis.quantize(x)
    return float(np.dot(d, d))


def default_init(values: np.ndarray, k: int, domain: str) -> tuple[float, ...]:
    m = np.arange(1, k + 1)
    if domain == SIGNED:
        return tuple(float(np.mean(np.abs(values))) * 2.0 ** (1 - m))
    return tuple(float(np.max(values)) * 2.0 ** (-m))


def solve_basis(codes: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Least-squares basis for a fixed code assignment, ``(BB^T)^+ B x``.

    ``codes`` has one row per value; the pseudo-inverse gives the minimum-norm
    solution when a bit row is constant or rows are dependent.
    """
    B = np.asarray(codes, dtype=float).T
    return np.linalg.pinv(B @ B.T) @ (B @ values)


def fit_basis(
    values,
    k: int,
    T: int = 10,
    init: QuantizerBasis | Sequence[float] | None = None,
    domain: str = SIGNED,
    return_history: bool = False,
):
    """Fit a basis by alternating code assignment and least-squares solves.

    Each iteration re-encodes every value against the current basis, then
    solves for the basis given those codes.  A candidate is accepted only if
    its quantization error does not exceed the incumbent's, so the recorded
    error history is non-increasing and the returned basis is the best one
    seen.
    """
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("fit_basis needs at least one value")
    if T < 1:
        raise ValueError("T must be >= 1")
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}")
    if not np.any(x):
        basis = zero_basis(k, domain)
        return (basis, [0.0]) if return_history else basis

    if init is None:
        v0 = default_init(x, k, domain)
    elif isinstance(init, QuantizerBasis):
        v0 = init.v
    else:
        v0 = tuple(init)
    if len(v0) != k:
        raise DimensionError(f"init basis has length {len(v0)}, expected {k}")

    best = QuantizerBasis(v0, domain)
    best_err = quantization_error(x, best)
    history = [best_err]
    for _ in range(T):
        v_new = solve_basis(best.encode(x), x)
        cand = QuantizerBasis(tuple(v_new), domain)
        err = quantization_error(x, cand)
        if err > best_err:
            history.append(best_err)
            break
        converged = cand.v == best.v
        best, best_err = cand, err
        history.append(err)
        if converged:
            break
    best = QuantizerBasis(best.v, domain, error=best_err)
    return (best, history) if return_history else best


def _plane_int(bits: np.ndarray) -> int:
    packed = np.packbits(bits.astype(bool), bitorder="little")
    return int.from_bytes(packed.tobytes(), "little")


def bit_planes(codes, domain: str) -> list[int]:
    """One integer per code position; bit ``i`` is set when element ``i``'s digit is high."""
    codes = np.asarray(codes)
    high = _DIGITS[domain][1]
    return [_plane_int(codes[:, m] == high) for m in range(codes.shape[1])]


def bitwise_dot(wcodes, acodes, wbasis: QuantizerBasis, abasis: QuantizerBasis) -> float:
    """``sum_i Q(w_i) Q(a_i)`` computed from bit-plane popcounts.

    With signed digit ``s = 2p - 1`` and unsigned digit ``a``, each plane pair
    contributes ``2 * popcount(p & a) - popcount(a)``.
    """
    wcodes = np.asarray(wcodes)
    acodes = np.asarray(acodes)
    if wcodes.ndim != 2 or acodes.ndim != 2 or wcodes.shape[0] != acodes.shape[0]:
        raise DimensionError("weight and activation code arrays must have equal length")
    if wcodes.shape[1] != wbasis.k or acodes.shape[1] != abasis.k:
        raise DimensionError("code width does not match basis size")
    wplanes = bit_planes(wcodes, SIGNED)
    aplanes = bit_planes(acodes, UNSIGNED)
    terms = []
    for vm, pw in zip(wbasis.v, wplanes):
        for vn, pa in zip(abasis.v, aplanes):
            count = 2 * (pw & pa).bit_count() - pa.bit_count()
            terms.append(vm * vn * count)
    return math.fsum(terms)


def pack_bits(bits) -> bytes:
    """Little-endian packed bit array (element 0 in the lowest bit of byte 0)."""
    return np.packbits(np.asarray(bits, dtype=bool).ravel(), bitorder="little").tobytes()


def unpack_bits(data: bytes, count: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    if bits.size < count:
        raise ValueError("bit array shorter than expected")
    return bits[:count].astype(bool)
