"""Discrete-time rational transfer functions in the backward shift ``q^-1``.

A transfer function is stored as two coefficient arrays in *ascending*
powers of ``q^-1``::

            b[0] + b[1] q^-1 + ... + b[nb] q^-nb
    G(q) = --------------------------------------
            1    + a[1] q^-1 + ... + a[na] q^-na

Frequency responses are evaluated on the DFT grid ``z_k = exp(2j*pi*k/N)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import signal

from .errors import DenominatorZeroOnGrid

__all__ = ["RationalTF", "freq_response", "freq_response_at", "filter",
           "impulse_response", "grid_points"]


@dataclass(frozen=True, eq=False)
class RationalTF:
    """SISO rational transfer function with a monic denominator.

    A non-monic ``den`` is normalized on construction; ``den[0] == 0`` is
    rejected.
    """

    num: np.ndarray
    den: np.ndarray

    def __post_init__(self):
        num = np.atleast_1d(np.asarray(self.num, dtype=float)).copy()
        den = np.atleast_1d(np.asarray(self.den, dtype=float)).copy()
        if num.ndim != 1 or den.ndim != 1 or num.size == 0 or den.size == 0:
            raise ValueError("num and den must be nonempty 1-D coefficient lists")
        if not (np.all(np.isfinite(num)) and np.all(np.isfinite(den))):
            raise ValueError("coefficients must be finite")
        if den[0] == 0.0:
            raise ValueError("leading denominator coefficient must be nonzero")
        if den[0] != 1.0:
            num /= den[0]
            den /= den[0]
            den[0] = 1.0
        num.flags.writeable = False
        den.flags.writeable = False
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @classmethod
    def identity(cls) -> "RationalTF":
        return cls([1.0], [1.0])

    @property
    def strictly_proper(self) -> bool:
        return bool(self.num[0] == 0.0)

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.num == 0.0))

    @property
    def delay(self) -> int:
        """Index of the first nonzero numerator coefficient."""
        nz = np.flatnonzero(self.num)
        return int(nz[0]) if nz.size else 0

    @property
    def order(self) -> int:
        return max(self.num.size, self.den.size) - 1

    def poles(self) -> np.ndarray:
        # roots in z of z^na * A(z^-1), i.e. of the descending-power polynomial
        return np.roots(self.den) if self.den.size > 1 else np.array([])

    def is_stable(self, radius: float = 1.0) -> bool:
        p = self.poles()
        return bool(np.all(np.abs(p) < radius))

    def __repr__(self):
        return f"RationalTF(num={self.num.tolist()}, den={self.den.tolist()})"

    def __eq__(self, other):
        if not isinstance(other, RationalTF):
            return NotImplemented
        return (np.array_equal(self.num, other.num)
                and np.array_equal(self.den, other.den))

    def __hash__(self):
        return hash((self.num.tobytes(), self.den.tobytes()))


def grid_points(line_indices, N: int) -> np.ndarray:
    """Return ``z_k^-1 = exp(-2j*pi*k/N)`` for the given DFT lines."""
    k = np.asarray(line_indices, dtype=float)
    return np.exp(-2j * np.pi * k / N)


def freq_response_at(tf: RationalTF, zinv) -> np.ndarray:
    """Evaluate ``num(zinv)/den(zinv)`` at arbitrary points ``zinv = z^-1``."""
    zinv = np.asarray(zinv)
    d = P.polyval(zinv, tf.den)
    if np.any(np.abs(d) < 1e-14):
        raise DenominatorZeroOnGrid("denominator vanishes on the evaluation grid")
    return P.polyval(zinv, tf.num) / d


def freq_response(tf: RationalTF, line_indices, N: int) -> np.ndarray:
    """Frequency response at DFT lines ``k`` of a length-``N`` record."""
    k = np.atleast_1d(np.asarray(line_indices))
    if N < 1:
        raise ValueError("N must be positive")
    if np.any(k < 0) or np.any(k >= N):
        raise ValueError("line indices must satisfy 0 <= k < N")
    try:
        return freq_response_at(tf, grid_points(k, N))
    except DenominatorZeroOnGrid:
        bad = k[np.abs(P.polyval(grid_points(k, N), tf.den)) < 1e-14]
        raise DenominatorZeroOnGrid(
            f"denominator vanishes at lines {bad.tolist()}") from None


def filter(tf: RationalTF, u, zi=None) -> np.ndarray:
    """Apply ``tf`` to the sequence ``u`` (difference equation ``a*y = b*u``).

    ``zi`` is an optional initial state in the transposed direct-form-II
    convention of :func:`scipy.signal.lfilter`; the default is rest.
    """
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("input contains non-finite samples")
    if zi is None:
        return signal.lfilter(tf.num, tf.den, u)
    y, _ = signal.lfilter(tf.num, tf.den, u, zi=np.asarray(zi, dtype=float))
    return y


def impulse_response(tf: RationalTF, length: int) -> np.ndarray:
    if length < 1:
        raise ValueError("length must be >= 1")
    imp = np.zeros(length)
    imp[0] = 1.0
    return filter(tf, imp)
