"""Differentiable K-LUT primitives.

A K-input LUT is parameterized by 2^K real values ("mask entries"), one per
corner of {-1,1}^K. The training-time function is the multilinear
interpolation through those corners,

    f(x) = 2^-k * sum_d c_d * prod_j (1 + d_j x_j),

normalized so that f(a) == c[index(a)] exactly at every corner a. Corner
indexing is fixed project-wide: input 0 is the least-significant axis, i.e.
index(d) = sum_j bit(d_j) * 2^j with bit(-1)=0, bit(1)=1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_K = 6  # physical 6-LUT bound; also caps the 2^k blow-up


class ContractError(ValueError):
    """Violation of an operation precondition (shape/range mismatch)."""


def _check_k(k: int) -> None:
    if not 1 <= k <= MAX_K:
        raise ContractError(f"LUT fan-in must be in [1, {MAX_K}], got {k}")


@dataclass(frozen=True)
class LutMask:
    """Trainable parameters of one k-input LUT: 2^k reals, corner-indexed."""

    k: int
    params: np.ndarray

    def __post_init__(self):
        _check_k(self.k)
        p = np.asarray(self.params, dtype=np.float64)
        if p.shape != (2**self.k,):
            raise ContractError(
                f"mask for k={self.k} needs {2**self.k} entries, got {p.shape}"
            )
        if not np.all(np.isfinite(p)):
            raise ContractError("mask entries must be finite")
        object.__setattr__(self, "params", p)


@dataclass(frozen=True)
class TruthTable:
    """Binarized LUT contents: 2^k entries in {-1, 1}, same indexing."""

    k: int
    bits: np.ndarray

    def __post_init__(self):
        _check_k(self.k)
        b = np.asarray(self.bits, dtype=np.int8)
        if b.shape != (2**self.k,):
            raise ContractError(
                f"table for k={self.k} needs {2**self.k} entries, got {b.shape}"
            )
        if not np.all(np.abs(b) == 1):
            raise ContractError("truth table entries must be +/-1")
        object.__setattr__(self, "bits", b)


def pattern_index(d) -> int:
    """Corner index of sign pattern d in {-1,1}^k (input 0 = LSB)."""
    idx = 0
    for j, dj in enumerate(d):
        if dj > 0:
            idx |= 1 << j
    return idx


def index_pattern(idx: int, k: int) -> np.ndarray:
    """Inverse of pattern_index."""
    return np.array([1 if (idx >> j) & 1 else -1 for j in range(k)], dtype=np.int8)


def corner_weights(x: np.ndarray) -> np.ndarray:
    """Interpolation weights 2^-k * prod_j (1 + d_j x_j) for all 2^k corners.

    This is simultaneously the forward kernel and the exact gradient of
    lut_forward with respect to the mask entries.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.ones(1)
    for xj in x:
        w = np.concatenate([w * (1.0 - xj), w * (1.0 + xj)])
    return w / 2 ** len(x)


def _check_x(mask: LutMask, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (mask.k,):
        raise ContractError(f"expected {mask.k} inputs, got shape {x.shape}")
    return x


def lut_forward(mask: LutMask, x) -> float:
    """Interpolated LUT output at x in [-1,1]^k."""
    x = _check_x(mask, x)
    return float(corner_weights(x) @ mask.params)


def lut_grad_params(mask: LutMask, x) -> np.ndarray:
    """d f / d c, one entry per corner (equals the interpolation weights)."""
    x = _check_x(mask, x)
    return corner_weights(x)


def lut_grad_inputs(mask: LutMask, x) -> np.ndarray:
    """d f / d x_j for each input j."""
    x = _check_x(mask, x)
    k = mask.k
    g = np.empty(k)
    for j in range(k):
        w = np.ones(1)
        for m in range(k):
            if m == j:
                # derivative replaces the (1 + d_j x_j) factor by d_j
                w = np.concatenate([-w, w])
            else:
                w = np.concatenate([w * (1.0 - x[m]), w * (1.0 + x[m])])
        g[j] = (w @ mask.params) / 2**k
    return g


def binarize_mask(mask: LutMask) -> TruthTable:
    """Sign of each entry, with sign(0) = +1 (fixed tie rule)."""
    bits = np.where(mask.params >= 0.0, 1, -1).astype(np.int8)
    return TruthTable(mask.k, bits)


def table_view(bits: np.ndarray, k: int) -> np.ndarray:
    """Reshape a 2^k table to shape (2,)*k with axis j = input j."""
    return np.asarray(bits).reshape((2,) * k, order="F")


def effective_inputs(tt: TruthTable) -> set[int]:
    """Boolean support: inputs whose flip changes the output somewhere."""
    view = table_view(tt.bits, tt.k)
    support = set()
    for j in range(tt.k):
        lo = np.take(view, 0, axis=j)
        hi = np.take(view, 1, axis=j)
        if np.any(lo != hi):
            support.add(j)
    return support


def project_table(tt: TruthTable, keep: list[int]) -> TruthTable | int:
    """Restrict a table to the given (sorted) input positions.

    Positions not kept must be outside the Boolean support; otherwise the
    projection would be ill-defined. Returns the constant (+/-1) when keep
    is empty.
    """
    keep = sorted(keep)
    dropped = [j for j in range(tt.k) if j not in keep]
    if set(keep) | set(dropped) != set(range(tt.k)):
        raise ContractError("keep positions out of range")
    support = effective_inputs(tt)
    if support - set(keep):
        raise ContractError(f"cannot drop inputs in the support: {support - set(keep)}")
    view = table_view(tt.bits, tt.k)
    for j in reversed(dropped):
        view = np.take(view, 0, axis=j)
    if not keep:
        return int(view)
    bits = view.reshape(-1, order="F")
    return TruthTable(len(keep), bits)
