"""Signed sign-magnitude fixed-point arithmetic, simulated on floats.

A representation is a pair ``(bw, f)``: total bitwidth including one sign
bit, and a signed fractional offset fixing the radix position.  Values are
carried as their real-valued fixed-point equivalents; no bit packing is
performed.  A bitwidth of 1 keeps only the sign bit, so every value
collapses to zero ("pruned").
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FixedPointRepr",
    "clip",
    "quantize",
    "quantize_tensor",
    "repr_range",
    "no_clip_offset",
    "clipped_count",
]


@dataclass(frozen=True, order=True)
class FixedPointRepr:
    """Fixed-point format: bitwidth ``bw`` >= 1 and fractional offset ``f``.

    The least significant bit has value ``2**-f``; the largest storable
    magnitude is ``(2**(bw-1) - 1) / 2**f`` (zero when ``bw == 1``).
    """

    bw: int
    f: int

    def __post_init__(self):
        if not isinstance(self.bw, int) or not isinstance(self.f, int):
            raise TypeError("bw and f must be integers")
        if self.bw < 1:
            raise ValueError(f"bitwidth must be >= 1, got {self.bw}")

    @property
    def lsb(self) -> float:
        return 2.0 ** (-self.f)

    @property
    def msb_value(self) -> float:
        if self.bw < 2:
            raise ValueError("MSB undefined for a sign-only representation")
        return 2.0 ** (self.bw - 1) / 2.0 ** self.f

    @property
    def max_magnitude(self) -> float:
        if self.bw < 2:
            return 0.0
        return (2.0 ** (self.bw - 1) - 1.0) / 2.0 ** self.f

    @property
    def integer_bound(self) -> int:
        """Largest stored integer magnitude: 2**(bw-1) - 1, or 0 for bw == 1."""
        return (1 << (self.bw - 1)) - 1 if self.bw >= 2 else 0


def clip(x: float, a: float, b: float) -> float:
    """Saturate ``x`` into [a, b]."""
    if a > b:
        raise ValueError(f"clip bounds out of order: a={a} > b={b}")
    if x <= a:
        return a
    if x >= b:
        return b
    return x


def _round_half_away(y: np.ndarray) -> np.ndarray:
    # Exact round-half-away-from-zero: the fraction comparison avoids the
    # classic ``floor(x + 0.5)`` double-rounding error near ties.
    a = np.abs(y)
    fl = np.floor(a)
    r = fl + (a - fl >= 0.5)
    return np.copysign(r, y)


def _round_half_away_scalar(y: float) -> float:
    a = abs(y)
    if math.isinf(a):
        return math.copysign(a, y)
    fl = math.floor(a)
    r = fl + (1.0 if a - fl >= 0.5 else 0.0)
    return math.copysign(r, y)


def quantize(x: float, repr: FixedPointRepr) -> float:
    """Quantize one finite float to its fixed-point equivalent value.

    Scales by ``2**f``, rounds half away from zero, saturates the stored
    integer into [-t, t] with ``t = 2**(bw-1) - 1`` (0 when ``bw == 1``),
    and scales back.  Negative zero is normalized to zero.
    """
    if not math.isfinite(x):
        raise ValueError(f"cannot quantize non-finite value {x!r}")
    t = repr.integer_bound
    if t == 0:
        return 0.0
    r = _round_half_away_scalar(math.ldexp(x, repr.f))
    return math.ldexp(clip(r, -float(t), float(t)), -repr.f) + 0.0


def quantize_tensor(values: np.ndarray, repr: FixedPointRepr) -> np.ndarray:
    """Element-wise :func:`quantize`; output shape equals input shape."""
    v = np.asarray(values, dtype=np.float64)
    if v.size and not np.all(np.isfinite(v)):
        raise ValueError("cannot quantize non-finite values")
    t = repr.integer_bound
    if t == 0:
        return np.zeros_like(v)
    with np.errstate(over="ignore"):
        r = _round_half_away(np.ldexp(v, repr.f))
    return np.ldexp(np.clip(r, -float(t), float(t)), -repr.f) + 0.0


def repr_range(repr: FixedPointRepr) -> tuple[float, float]:
    """Symmetric representable range (-m, m); (0, 0) for a sign-only repr."""
    m = repr.max_magnitude
    return (-m, m)


def no_clip_offset(bw0: int, max_abs: float) -> int:
    """Fractional offset at which a tensor with extreme |x| = max_abs never clips.

    Assigns ``ceil(log2(max_abs))`` bits to the integer part and the rest to
    the fraction; the offset is nudged down when the extreme value would
    still round past the stored bound (exact powers of two being the
    canonical case).  An all-zero tensor gets maximal fractional precision.
    """
    if bw0 < 2:
        raise ValueError(f"initial bitwidth must be >= 2, got {bw0}")
    if not (max_abs >= 0.0) or math.isinf(max_abs):
        raise ValueError(f"max_abs must be finite and >= 0, got {max_abs!r}")
    if max_abs == 0.0:
        return bw0 - 1
    i = math.ceil(math.log2(max_abs))
    t = float((1 << (bw0 - 1)) - 1)
    while _round_half_away_scalar(math.ldexp(max_abs, bw0 - 1 - i)) > t:
        i += 1
    return bw0 - 1 - i


def clipped_count(values: np.ndarray, repr: FixedPointRepr) -> int:
    """Number of elements whose rounded scaled value lies outside [-t, t]."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return 0
    if not np.all(np.isfinite(v)):
        raise ValueError("values must be finite")
    t = float(repr.integer_bound)
    with np.errstate(over="ignore"):
        r = _round_half_away(np.ldexp(v, repr.f))
    return int(np.count_nonzero(np.abs(r) > t))
