"""
Mergeable streaming moment accumulators for checkpointed ensembles

Each accumulator holds, per checkpoint, the sample count, the running means,
the centered cross-product sums (whose diagonal is the centered second-moment
sum M2) and the centered third and fourth power sums M3 and M4. Two
accumulators combine with the pairwise update formulas for arbitrary-order
central moments, so blocks of trajectories can be reduced in any grouping.
"""
import logging
from dataclasses import dataclass

import numpy as np

from polya.errors import DomainError

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class EnsembleStats:
    """
    Per-checkpoint moment accumulators

    Attributes:
        times: checkpoint times, shape (K,)
        n: number of trajectories folded in
        mean: running means, shape (K, c)
        comoment: centered cross-product sums, shape (K, c, c)
        m3: centered third-power sums, shape (K, c)
        m4: centered fourth-power sums, shape (K, c)
    """
    times: np.ndarray
    n: int
    mean: np.ndarray
    comoment: np.ndarray
    m3: np.ndarray
    m4: np.ndarray

    @classmethod
    def empty(cls, times, dimension):
        k = len(times)
        return cls(
            times=np.asarray(times, dtype=float),
            n=0,
            mean=np.zeros((k, dimension)),
            comoment=np.zeros((k, dimension, dimension)),
            m3=np.zeros((k, dimension)),
            m4=np.zeros((k, dimension)),
        )

    @classmethod
    def from_samples(cls, times, values):
        """
        Build an accumulator from raw checkpoint samples

        Args:
            times: checkpoint times, length K
            values: array of shape (N, K, c)
        """
        values = np.asarray(values, dtype=float)
        if values.ndim != 3 or values.shape[1] != len(times):
            raise DomainError(f"samples must have shape (N, {len(times)}, c), got {values.shape}")
        n = values.shape[0]
        if n == 0:
            return cls.empty(times, values.shape[2])
        mean = values.mean(axis=0)
        d = values - mean
        return cls(
            times=np.asarray(times, dtype=float),
            n=n,
            mean=mean,
            comoment=np.einsum('nkj,nkl->kjl', d, d),
            m3=(d ** 3).sum(axis=0),
            m4=(d ** 4).sum(axis=0),
        )

    @property
    def dimension(self):
        return self.mean.shape[1]

    @property
    def m2(self):
        return np.diagonal(self.comoment, axis1=1, axis2=2).copy()

    def merge(self, other):
        """Combine two accumulators over the same checkpoints; an empty side is the identity"""
        if not np.array_equal(self.times, other.times):
            raise DomainError("cannot merge statistics over different checkpoints")
        if other.n == 0:
            return self.copy()
        if self.n == 0:
            return other.copy()

        na, nb = float(self.n), float(other.n)
        n = na + nb
        delta = other.mean - self.mean
        m2a, m2b = self.m2, other.m2

        mean = self.mean + delta * (nb / n)
        comoment = (self.comoment + other.comoment
                    + np.einsum('kj,kl->kjl', delta, delta) * (na * nb / n))
        m3 = (self.m3 + other.m3
              + delta ** 3 * (na * nb * (na - nb) / n ** 2)
              + 3.0 * delta * (na * m2b - nb * m2a) / n)
        m4 = (self.m4 + other.m4
              + delta ** 4 * (na * nb * (na * na - na * nb + nb * nb) / n ** 3)
              + 6.0 * delta ** 2 * (na * na * m2b + nb * nb * m2a) / n ** 2
              + 4.0 * delta * (na * other.m3 - nb * self.m3) / n)
        return EnsembleStats(self.times.copy(), self.n + other.n, mean, comoment, m3, m4)

    def copy(self):
        return EnsembleStats(self.times.copy(), self.n, self.mean.copy(),
                             self.comoment.copy(), self.m3.copy(), self.m4.copy())

    def identical(self, other):
        """Bitwise equality of every accumulator"""
        return (self.n == other.n
                and all(np.array_equal(a, b) for a, b in (
                    (self.times, other.times), (self.mean, other.mean),
                    (self.comoment, other.comoment), (self.m3, other.m3),
                    (self.m4, other.m4))))

    def checkpoint_index(self, t):
        hits = np.flatnonzero(np.abs(self.times - t) <= 1e-12 * max(1.0, abs(t)))
        if hits.size == 0:
            raise DomainError(f"no checkpoint at t={t}; available: {self.times.tolist()}")
        return int(hits[0])

    # Estimators

    def variance(self):
        """Unbiased variances, zero when fewer than two samples"""
        if self.n < 2:
            return np.zeros_like(self.mean)
        return self.m2 / (self.n - 1)

    def covariance(self):
        if self.n < 2:
            return np.zeros_like(self.comoment)
        return self.comoment / (self.n - 1)

    def mean_se(self):
        if self.n < 2:
            return np.full_like(self.mean, np.inf)
        return np.sqrt(self.variance() / self.n)

    def variance_se(self):
        """
        Standard error of the sample variance from the empirical fourth
        central moment: Var(s²) ≈ (μ4 − s⁴(n−3)/(n−1))/n
        """
        n = self.n
        if n < 4:
            return np.full_like(self.mean, np.inf)
        s2 = self.variance()
        mu4 = self.m4 / n
        return np.sqrt(np.maximum(mu4 - s2 ** 2 * (n - 3) / (n - 1), 0.0) / n)

    def covariance_se(self, j, k):
        """
        Conservative standard error of the (j, k) sample covariance

        Bounds E[(d_j d_k)²] by √(μ4_j μ4_k) (Cauchy–Schwarz).
        """
        n = self.n
        if n < 4:
            return np.full(len(self.times), np.inf)
        mu4 = self.m4 / n
        c = self.comoment[:, j, k] / n
        bound = np.sqrt(mu4[:, j] * mu4[:, k]) - c ** 2
        return np.sqrt(np.maximum(bound, 0.0) / n)
