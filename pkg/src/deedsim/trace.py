"""Run records: per-iteration distances, loss gaps and the bit ledger.

A trace has one row per iterate t = 0..T.  Row t holds the state of
iterate t (distance to optimum, loss gap) together with the
communication spent by the round *starting* at t and that round's total
quantization-error budget; the final row carries zero bits.  Cumulative
bits are the running sum, so the bits already paid to *reach* iterate t
are ``cum_bits[t] - bits_up[t] - bits_down[t]``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

__all__ = ["RunTrace"]

_CSV_HEADER = "t,dist,fgap,bits_up,bits_down,cum_bits,budget"


@dataclass
class RunTrace:
    """Columnar record of one simulated run."""

    algorithm: str
    t: np.ndarray
    dist: np.ndarray
    fgap: np.ndarray
    bits_up: np.ndarray
    bits_down: np.ndarray
    budget: np.ndarray
    # Free-form diagnostics (per-round error fractions, payload bit lists,
    # hyperparameters); not part of the CSV contract.
    extras: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.t)
        for name in ("dist", "fgap", "bits_up", "bits_down", "budget"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has mismatched length")

    @property
    def cum_bits(self) -> np.ndarray:
        return np.cumsum(self.bits_up + self.bits_down)

    @property
    def total_bits(self) -> int:
        return int(self.bits_up.sum() + self.bits_down.sum())

    def bits_to_accuracy(self, threshold: float) -> int | None:
        """Bits spent to first reach ``fgap <= threshold`` (None if never).

        Rows whose bits belong to the round *starting* there exclude
        their own bits; traces flagged ``bits_timing: arriving`` (sync
        rows record the communication that produced the state) include
        them.
        """
        hits = np.nonzero(self.fgap <= threshold)[0]
        if len(hits) == 0:
            return None
        t_star = int(hits[0])
        spent_through = int(self.cum_bits[t_star])
        if self.extras.get("bits_timing") == "arriving":
            return spent_through
        return spent_through - int(self.bits_up[t_star] + self.bits_down[t_star])

    def to_csv(self, fh: io.TextIOBase | str) -> None:
        """Write ``t,dist,fgap,bits_up,bits_down,cum_bits,budget`` rows.

        Floats carry 17 significant digits so the file round-trips the
        exact binary values.
        """
        own = isinstance(fh, str)
        out = open(fh, "w", newline="\n") if own else fh
        out.write(_CSV_HEADER + "\n")
        cum = self.cum_bits
        for i in range(len(self.t)):
            out.write(
                f"{int(self.t[i])},{self.dist[i]:.17g},{self.fgap[i]:.17g},"
                f"{int(self.bits_up[i])},{int(self.bits_down[i])},"
                f"{int(cum[i])},{self.budget[i]:.17g}\n"
            )
        if own:
            out.close()

    def to_csv_bytes(self) -> bytes:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue().encode()

    @classmethod
    def from_csv(cls, fh: io.TextIOBase | str, algorithm: str = "") -> "RunTrace":
        own = isinstance(fh, str)
        inp = open(fh) if own else fh
        header = inp.readline().strip()
        if header != _CSV_HEADER:
            raise ValueError(f"unexpected header {header!r}")
        rows = [line.strip().split(",") for line in inp if line.strip()]
        if own:
            inp.close()
        cols = list(zip(*rows)) if rows else [[]] * 7
        return cls(
            algorithm=algorithm,
            t=np.array([int(x) for x in cols[0]]),
            dist=np.array([float(x) for x in cols[1]]),
            fgap=np.array([float(x) for x in cols[2]]),
            bits_up=np.array([int(x) for x in cols[3]]),
            bits_down=np.array([int(x) for x in cols[4]]),
            budget=np.array([float(x) for x in cols[6]]),
        )
