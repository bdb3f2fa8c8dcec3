"""Unbiased vector quantization with a hard absolute error bound.

A vector ``w`` in R^d is scaled onto an integer grid of step
``max_error / sqrt(d)``, each coordinate is rounded to floor or ceil
unbiasedly (stochastic rounding), and the integer grid point is shipped
as a sparse Elias-coded payload.  The decoded vector is always within
Euclidean distance ``max_error`` of the input, and its expectation over
the rounding dither equals the input.

Setting ``max_error = 0`` selects lossless pass-through: the vector is
transmitted verbatim and charged ``float_bits * dim`` bits, which gives
exact baselines a communication cost and makes the zero-budget mode of
the quantized algorithms coincide bit-for-bit with their exact
counterparts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bitstream import (
    BitStream,
    SparseIntVector,
    elias_encode,
    encode_sparse,
    sparse_payload_bits,
)
from .errors import InvalidInputError

__all__ = [
    "DEFAULT_FLOAT_BITS",
    "QuantSpec",
    "QuantizedMessage",
    "quantize",
    "dequantize",
    "bits_lower_bound",
    "bits_upper_bound",
]

DEFAULT_FLOAT_BITS = 32

# Scaled coordinates beyond this cannot be held in a signed 64-bit grid.
_GRID_LIMIT = 2.0**63 - 2.0


@dataclass(frozen=True)
class QuantSpec:
    """Quantization contract: dimension and maximal Euclidean error."""

    max_error: float
    dim: int

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise InvalidInputError("dim must be positive")
        if not (self.max_error >= 0.0) or not math.isfinite(self.max_error):
            raise InvalidInputError("max_error must be finite and >= 0")

    @property
    def grid_step(self) -> float:
        """Per-coordinate grid spacing, ``max_error / sqrt(dim)``."""
        return self.max_error / math.sqrt(self.dim)

    @property
    def lossless(self) -> bool:
        return self.max_error == 0.0


@dataclass(frozen=True)
class QuantizedMessage:
    """A quantized vector: integer grid point, payload size, decoded value.

    ``grid`` is ``None`` in pass-through mode, where ``decoded`` carries
    the verbatim vector and ``bits`` is ``float_bits * dim``.  Otherwise
    ``decoded == grid * grid_step`` coordinate-wise and ``bits`` equals
    the Elias payload length.
    """

    spec: QuantSpec
    grid: SparseIntVector | None
    decoded: np.ndarray = field(repr=False)
    bits: int

    @property
    def payload(self) -> BitStream:
        """Encoded payload, built on demand (empty for pass-through)."""
        if self.grid is None:
            return BitStream()
        return encode_sparse(self.grid)

    def to_bytes(self) -> tuple[bytes, int]:
        """Serialize as Elias(dim) ++ 64 float bits of grid_step ++ payload.

        Returns ``(data, nbits)``; ``nbits`` records the unpadded length.
        The grid-step field is protocol metadata and excluded from the
        communicated-bit count.  Pass-through messages are not
        serializable (they exist only for in-process baselines).
        """
        if self.grid is None:
            raise InvalidInputError("pass-through messages have no wire form")
        stream = elias_encode(self.spec.dim)
        (step_bits,) = np.frombuffer(
            np.float64(self.spec.grid_step).tobytes(), dtype=np.uint64
        )
        stream.extend_uint(int(step_bits), 64)
        stream.extend(self.payload)
        return stream.to_bytes(), len(stream)


def quantize(
    w: np.ndarray,
    spec: QuantSpec,
    rng: np.random.Generator,
    float_bits: int = DEFAULT_FLOAT_BITS,
) -> QuantizedMessage:
    """Quantize ``w`` under ``spec``, consuming one dither draw per
    randomized coordinate in coordinate order.

    Coordinates already equal to a representable grid point reproduce
    themselves deterministically (no draw consumed).
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or len(w) != spec.dim:
        raise InvalidInputError(f"expected a vector of dim {spec.dim}")
    if not np.all(np.isfinite(w)):
        raise InvalidInputError("input coordinates must be finite")

    if spec.lossless:
        return QuantizedMessage(
            spec=spec, grid=None, decoded=w.copy(), bits=float_bits * spec.dim
        )

    step = spec.grid_step
    scaled = w / step
    if np.any(np.abs(scaled) > _GRID_LIMIT):
        raise InvalidInputError("scaled magnitude overflows the 64-bit grid")

    lo = np.floor(scaled)
    frac = scaled - lo
    # A coordinate is on-grid when some candidate decodes back to it exactly.
    snap_lo = lo * step == w
    snap_hi = (lo + 1.0) * step == w
    randomized = (frac != 0.0) & ~snap_lo & ~snap_hi

    up = snap_hi.copy()
    if randomized.any():
        draws = rng.random(int(randomized.sum()))
        up[randomized] = draws < frac[randomized]

    grid_dense = (lo + up).astype(np.int64)
    decoded = grid_dense * step
    grid = SparseIntVector.from_dense(grid_dense)
    bits = sparse_payload_bits(
        np.asarray(grid.positions, dtype=np.int64),
        np.asarray(grid.values, dtype=np.int64),
    )
    return QuantizedMessage(spec=spec, grid=grid, decoded=decoded, bits=bits)


def dequantize(msg: QuantizedMessage) -> np.ndarray:
    """Decode a message: grid times grid step (deterministic, no RNG)."""
    if msg.grid is None:
        return msg.decoded.copy()
    return msg.grid.to_dense(dtype=np.float64) * msg.spec.grid_step


def bits_lower_bound(dim: int, rel_err: float) -> int:
    """Information-theoretic floor ``ceil(dim * log2(1 / rel_err))``,
    clamped at zero, for coding a ball to relative accuracy ``rel_err``."""
    if dim < 1:
        raise InvalidInputError("dim must be positive")
    if not rel_err > 0:
        raise InvalidInputError("rel_err must be positive")
    return max(0, math.ceil(dim * math.log2(1.0 / rel_err)))


def bits_upper_bound(dim: int, rel_err: float) -> int:
    """Achievable cost ``ceil(1.05 d + d log2((1 + 2 rel_err)/rel_err))``
    of an unbiased grid code at relative accuracy ``rel_err``."""
    if dim < 1:
        raise InvalidInputError("dim must be positive")
    if not rel_err > 0:
        raise InvalidInputError("rel_err must be positive")
    return math.ceil(1.05 * dim + dim * math.log2((1.0 + 2.0 * rel_err) / rel_err))
