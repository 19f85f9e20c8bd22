"""Conditional Bernoulli distributions over dyad sets.

Given per-dyad log-weights ``logw`` (the dyad-independent log-odds), the
conditional Bernoulli law puts mass proportional to ``prod_d w_d^{y_d}`` on
binary vectors with exactly ``m`` ones.  This is the exact distribution of a
dyad-independent model under a fixed-edge-count constraint, so its moments
give exact Fisher information and likelihood values without enumerating the
graph space.

Internally dyads with equal weights are collapsed into groups; the partition
function and moments are coefficient extractions from products of the group
polynomials ``(1 + w z)^N``, carried out on scaled nonnegative coefficient
arrays with a separate log-scale to avoid overflow.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from .errors import DataError

_NEG_INF = float("-inf")


class _Poly:
    """Truncated polynomial with nonnegative coefficients times exp(scale)."""

    __slots__ = ("scale", "coefs")

    def __init__(self, scale: float, coefs: np.ndarray):
        self.scale = scale
        self.coefs = coefs

    @staticmethod
    def one() -> "_Poly":
        return _Poly(0.0, np.array([1.0]))

    @staticmethod
    def from_log(logcoefs: np.ndarray) -> "_Poly":
        top = float(np.max(logcoefs))
        if top == _NEG_INF:
            return _Poly(_NEG_INF, np.zeros(1))
        return _Poly(top, np.exp(logcoefs - top))

    def mul(self, other: "_Poly", maxdeg: int) -> "_Poly":
        coefs = np.convolve(self.coefs, other.coefs)[: maxdeg + 1]
        top = float(np.max(coefs))
        if top <= 0.0:
            return _Poly(_NEG_INF, np.zeros(1))
        return _Poly(self.scale + other.scale + np.log(top), coefs / top)

    def log_coef_with(self, other: "_Poly", k: int) -> float:
        """log of the degree-``k`` coefficient of ``self * other``."""
        a, b = self.coefs, other.coefs
        lo = max(0, k - (len(b) - 1))
        hi = min(len(a) - 1, k)
        if lo > hi:
            return _NEG_INF
        s = float(np.dot(a[lo : hi + 1], b[k - hi : k - lo + 1][::-1]))
        if s <= 0.0:
            return _NEG_INF
        return self.scale + other.scale + float(np.log(s))


def _log_binom(n: int, t: np.ndarray) -> np.ndarray:
    return gammaln(n + 1) - gammaln(t + 1) - gammaln(n - t + 1)


class CondBernoulli:
    """Exact moments of a fixed-count conditional Bernoulli dyad vector."""

    def __init__(self, logw: np.ndarray, m: int):
        logw = np.asarray(logw, dtype=float)
        if not np.all(np.isfinite(logw)):
            raise DataError("non-finite dyad log-weights")
        d = logw.size
        if not 0 <= m <= d:
            raise DataError(f"edge-count constraint m={m} outside [0, {d}]")
        self.logw = logw
        self.d = d
        self.m = m

        values, inverse, counts = np.unique(logw, return_inverse=True, return_counts=True)
        self._gval = values
        self._gidx = inverse
        self._gsize = counts
        G = len(values)

        polys = []
        for g in range(G):
            N = int(counts[g])
            t = np.arange(0, min(N, m) + 1)
            polys.append(_Poly.from_log(_log_binom(N, t) + t * values[g]))
        self._polys = polys

        prefix = [_Poly.one()]
        for g in range(G):
            prefix.append(prefix[-1].mul(polys[g], m))
        suffix = [_Poly.one()] * (G + 1)
        for g in range(G - 1, -1, -1):
            suffix[g] = polys[g].mul(suffix[g + 1], m)
        self._prefix = prefix
        self._suffix = suffix

        self.log_kappa = prefix[G].log_coef_with(_Poly.one(), m)
        if not np.isfinite(self.log_kappa):
            raise DataError("partition function vanished; constraint is infeasible")

        self._mu_group = None
        self._pair_group = None

    def _weighted_poly(self, g: int, order: int) -> _Poly:
        """Group polynomial with coefficients weighted by t or t(t-1)."""
        N = int(self._gsize[g])
        t = np.arange(order, min(N, self.m) + 1)
        if t.size == 0:
            return _Poly(_NEG_INF, np.zeros(1))
        logc = _log_binom(N, t) + t * self._gval[g]
        w = t.astype(float) if order == 1 else t * (t - 1.0)
        coefs = np.full(min(N, self.m) + 1, _NEG_INF)
        coefs[order:] = logc + np.log(w)
        return _Poly.from_log(coefs)

    def _group_moments(self):
        if self._mu_group is not None:
            return
        G = len(self._gsize)
        m, logZ = self.m, self.log_kappa
        mu = np.zeros(G)
        pair = np.zeros((G, G))
        for g in range(G):
            left1 = self._prefix[g].mul(self._weighted_poly(g, 1), m)
            mu[g] = np.exp(left1.log_coef_with(self._suffix[g + 1], m) - logZ)
            if self._gsize[g] >= 2:
                left2 = self._prefix[g].mul(self._weighted_poly(g, 2), m)
                s2 = np.exp(left2.log_coef_with(self._suffix[g + 1], m) - logZ)
                pair[g, g] = s2 / (self._gsize[g] * (self._gsize[g] - 1.0))
            running = left1
            for h in range(g + 1, G):
                with_h = running.mul(self._weighted_poly(h, 1), m)
                c = np.exp(with_h.log_coef_with(self._suffix[h + 1], m) - logZ)
                pair[g, h] = pair[h, g] = c / (self._gsize[g] * self._gsize[h])
                running = running.mul(self._polys[h], m)
        self._mu_group = mu
        self._pair_group = pair

    def dyad_mean(self) -> np.ndarray:
        """Per-dyad inclusion probabilities E[y_d]."""
        self._group_moments()
        return (self._mu_group / self._gsize)[self._gidx]

    def dyad_second(self) -> np.ndarray:
        """Matrix of E[y_d y_e]; the diagonal holds E[y_d]."""
        self._group_moments()
        Q = self._pair_group[np.ix_(self._gidx, self._gidx)].copy()
        np.fill_diagonal(Q, self.dyad_mean())
        return Q

    def moments(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Mean and covariance of ``X.T @ y`` under the conditional law."""
        mu = self.dyad_mean()
        mean = X.T @ mu
        second = X.T @ self.dyad_second() @ X
        cov = second - np.outer(mean, mean)
        return mean, 0.5 * (cov + cov.T)

    def sampler(self) -> "CondBernoulliSampler":
        return CondBernoulliSampler(self.logw, self.m)


class CondBernoulliSampler:
    """Sequential exact sampler for fixed-count conditional Bernoulli draws."""

    def __init__(self, logw: np.ndarray, m: int):
        logw = np.asarray(logw, dtype=float)
        d, self.m = logw.size, m
        self.d = d
        self.logw = logw
        # logB[j, k]: log partition of dyads j.. with exactly k ones
        logB = np.full((d + 1, m + 1), _NEG_INF)
        logB[d, 0] = 0.0
        for j in range(d - 1, -1, -1):
            shifted = np.concatenate(([_NEG_INF], logB[j + 1, :-1] + logw[j]))
            logB[j] = np.logaddexp(logB[j + 1], shifted)
        self._logB = logB

    def draw_mask(self, rng: np.random.Generator) -> int:
        mask, c = 0, self.m
        logB, logw = self._logB, self.logw
        for j in range(self.d):
            if c == 0:
                break
            p1 = np.exp(logw[j] + logB[j + 1, c - 1] - logB[j, c])
            if rng.random() < p1:
                mask |= 1 << j
                c -= 1
        return mask
