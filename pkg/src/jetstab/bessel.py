"""Modified Bessel functions of the first kind, orders 0 and 1.

Small arguments use the power series

    I0(r) = sum_k (r/2)^(2k) / (k!)^2,   I1(r) = sum_k (r/2)^(2k+1) / (k! (k+1)!),

which has only positive terms. Large arguments use the Hankel expansion of the
exponentially scaled functions

    I_nu(r) e^(-r) sqrt(2 pi r) ~ sum_k (-1)^k a_k(nu) / r^k.

The ratio I1/I0 is always formed from the scaled values, so it never overflows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

# exp(709.78) is the largest finite double
UNSCALED_LIMIT = 700.0


@dataclass(frozen=True)
class BesselEval:
    """Evaluator configuration.

    Parameters
    ----------
    series_cutoff : float
        Arguments below this use the power series, above it the asymptotic branch.
    asymptotic_order : int
        Number of terms kept in the large-argument expansion.
    """

    series_cutoff: float = 15.0
    asymptotic_order: int = 30

    def __post_init__(self):
        if not self.series_cutoff > 0:
            raise DomainError("series_cutoff must be positive")
        if self.asymptotic_order < 1:
            raise DomainError("asymptotic_order must be at least 1")

    # -- branches -----------------------------------------------------------

    def _series(self, r, order):
        q = 0.25 * r * r
        term = np.ones_like(r) if order == 0 else 0.5 * r
        total = term.copy()
        k = 0
        while True:
            k += 1
            term = term * q / (k * (k + order))
            total = total + term
            if np.all(term <= 1e-17 * total):
                return total

    def _asymptotic_scaled(self, r, order):
        mu = 4.0 * order * order
        term = np.ones_like(r)
        total = term.copy()
        for k in range(1, self.asymptotic_order + 1):
            term = -term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * r)
            total = total + term
        return total / np.sqrt(2.0 * np.pi * r)

    def _scaled(self, r, order):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0) or not np.all(np.isfinite(r)):
            raise DomainError("Bessel arguments must be finite and nonnegative")
        out = np.empty_like(r)
        small = r < self.series_cutoff
        if np.any(small):
            rs = r[small]
            out[small] = self._series(rs, order) * np.exp(-rs)
        if np.any(~small):
            out[~small] = self._asymptotic_scaled(r[~small], order)
        return out

    # -- public -------------------------------------------------------------

    def i0e(self, r):
        """Exponentially scaled I0(r) e^(-r)."""
        return _unwrap(self._scaled(r, 0), r)

    def i1e(self, r):
        """Exponentially scaled I1(r) e^(-r)."""
        return _unwrap(self._scaled(r, 1), r)

    def i0(self, r):
        """I0(r) for 0 <= r <= 700."""
        _check_unscaled(r)
        return _unwrap(self._scaled(r, 0) * np.exp(np.asarray(r, dtype=float)), r)

    def i1(self, r):
        """I1(r) for 0 <= r <= 700."""
        _check_unscaled(r)
        return _unwrap(self._scaled(r, 1) * np.exp(np.asarray(r, dtype=float)), r)

    def ratio(self, r):
        """I1(r)/I0(r) in [0, 1), valid for every nonnegative r."""
        r = np.asarray(r, dtype=float)
        return _unwrap(self._scaled(r, 1) / self._scaled(r, 0), r)

    def ratio_prime(self, r):
        """Derivative of the ratio, 1 - ratio/r - ratio^2 (limit 1/2 at r = 0)."""
        r = np.asarray(r, dtype=float)
        q = np.asarray(self.ratio(r), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(r > 0, 1.0 - q / np.where(r > 0, r, 1.0) - q * q, 0.5)
        # the closed form cancels badly near 0; use the series there
        tiny = r < 1e-3
        if np.any(tiny):
            rt = r[tiny] if d.ndim else r
            vals = 0.5 - 3.0 * rt * rt / 16.0
            if d.ndim:
                d[tiny] = vals
            else:
                d = vals
        return _unwrap(d, r)


def _check_unscaled(r):
    if np.any(np.asarray(r, dtype=float) > UNSCALED_LIMIT):
        raise DomainError(
            f"unscaled Bessel value requested above r={UNSCALED_LIMIT}; use the scaled functions"
        )


def _unwrap(val, like):
    if np.ndim(like) == 0:
        return float(np.asarray(val).reshape(()))
    return val


_DEFAULT = BesselEval()


def i0(r):
    return _DEFAULT.i0(r)


def i1(r):
    return _DEFAULT.i1(r)


def i0e(r):
    return _DEFAULT.i0e(r)


def i1e(r):
    return _DEFAULT.i1e(r)


def ratio(r):
    """I1(r)/I0(r); accepts arrays, negative inputs are rejected."""
    return _DEFAULT.ratio(r)


def ratio_prime(r):
    return _DEFAULT.ratio_prime(r)
