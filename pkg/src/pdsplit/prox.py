"""Closed-form proximity operators.

Each function family used by the solver is a small class with three
methods: ``value`` (the function itself, +inf outside an indicator's
set), ``prox`` (the proximity operator), and ``conjugate_prox`` (the
proximity operator of the Fenchel conjugate). Conjugate proxes go
through Moreau's identity

    x = prox_{s f}(x) + s * prox_{f*/s}(x / s)

so there is a single tested code path; the squared-L2 family also
carries its explicit conjugate formula.

Step sizes may be scalars or per-coordinate vectors (``DiagonalMetric``
or plain arrays). Every family here is separable by coordinate, except
the group norm which is separable by coordinate pair and therefore
requires equal step values inside each pair.
"""

from __future__ import annotations

import numpy as np

from .linop import DiagonalMetric

__all__ = [
    "ProxFunction", "Zero", "L1", "SqL2", "L2Norm", "GroupL12",
    "IndicatorNonneg", "IndicatorBox",
    "soft_threshold", "group_soft_threshold", "prox_l2norm",
    "prox_shifted_l1", "prox_shifted_sql2",
    "conjugate_prox_via_moreau", "pair_group_steps",
]


def _step_entries(step, size: int):
    """Normalize a step parameter to a positive float or (size,) array."""
    if isinstance(step, DiagonalMetric):
        arr = step.entries
    elif np.isscalar(step):
        return float(step)
    else:
        arr = np.asarray(step, dtype=np.float64)
    if arr.shape != (size,):
        raise ValueError(f"step vector has shape {arr.shape}, expected ({size},)")
    return arr


def soft_threshold(u, lam) -> np.ndarray:
    """Componentwise shrinkage max(|u_i| - lam_i, 0) * sign(u_i)."""
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    lam = _step_entries(lam, u.size)
    return np.sign(u) * np.maximum(np.abs(u) - lam, 0.0)


def prox_shifted_l1(u, lam, b) -> np.ndarray:
    """Prox of lam * ||. - b||_1, i.e. b + Soft(u - b, lam)."""
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    b = np.broadcast_to(np.asarray(b, dtype=np.float64), u.shape)
    return b + soft_threshold(u - b, lam)


def prox_shifted_sql2(u, lam, b) -> np.ndarray:
    """Prox of lam * (1/2)||. - b||_2^2, i.e. (u + lam*b) / (1 + lam)."""
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    b = np.broadcast_to(np.asarray(b, dtype=np.float64), u.shape)
    lam = _step_entries(lam, u.size)
    return (u + lam * b) / (1.0 + lam)


def prox_l2norm(u, lam: float, b=0.0) -> np.ndarray:
    """Prox of lam * ||. - b||_2: shrink the whole vector toward b."""
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    b = np.broadcast_to(np.asarray(b, dtype=np.float64), u.shape)
    residual = u - b
    norm = np.linalg.norm(residual)
    if norm <= lam:
        return b.copy()
    return b + (1.0 - lam / norm) * residual


def group_soft_threshold(x, lam) -> np.ndarray:
    """Groupwise shrinkage of pairs (x_i, x_{m+i}) by their Euclidean norm.

    ``lam`` is a scalar, one value per group (length m), or a full-length
    vector (length 2m) whose two halves must agree.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size % 2:
        raise ValueError(f"group vector must have even length, got {x.size}")
    m = x.size // 2
    pairs = x.reshape(2, m)
    if isinstance(lam, DiagonalMetric):
        lam = lam.entries
    if not np.isscalar(lam):
        lam = np.asarray(lam, dtype=np.float64)
        if lam.shape == (2 * m,):
            if not np.array_equal(lam[:m], lam[m:]):
                raise ValueError("group steps must be equal within each coordinate pair")
            lam = lam[:m]
        elif lam.shape != (m,):
            raise ValueError(f"group threshold has shape {lam.shape}, expected ({m},) or ({2 * m},)")
    norms = np.hypot(pairs[0], pairs[1])
    shrunk = np.maximum(norms - lam, 0.0)
    scale = np.zeros(m)
    hit = norms > 0
    scale[hit] = shrunk[hit] / norms[hit]
    return (pairs * scale).reshape(2 * m)


def pair_group_steps(entries: np.ndarray, group_len: int) -> np.ndarray:
    """Equalize a dual step vector over coordinate pairs (i, m+i).

    Takes the minimum of the two values in each pair, which preserves the
    preconditioner norm bound while making the group prox well defined.
    """
    entries = np.asarray(entries, dtype=np.float64)
    if entries.shape != (2 * group_len,):
        raise ValueError(f"expected {2 * group_len} step entries, got shape {entries.shape}")
    paired = np.minimum(entries[:group_len], entries[group_len:])
    return np.concatenate([paired, paired])


def conjugate_prox_via_moreau(f: "ProxFunction", v, step) -> np.ndarray:
    """prox of step * f^* computed through Moreau's identity."""
    v = np.asarray(v, dtype=np.float64)
    s = _step_entries(step, v.size)
    inv = 1.0 / s
    return v - s * f.prox(v * inv, inv)


class ProxFunction:
    """A convex function with a closed-form proximity operator."""

    def value(self, v) -> float:
        raise NotImplementedError

    def prox(self, v, step) -> np.ndarray:
        raise NotImplementedError

    def conjugate_prox(self, v, step) -> np.ndarray:
        return conjugate_prox_via_moreau(self, v, step)

    def _shifted(self, v) -> tuple[np.ndarray, np.ndarray]:
        v = np.asarray(v, dtype=np.float64)
        shift = getattr(self, "shift", None)
        if shift is None:
            return v, np.zeros_like(v)
        shift = np.asarray(shift, dtype=np.float64)
        if shift.shape != v.shape:
            raise ValueError(f"shift has shape {shift.shape}, argument has shape {v.shape}")
        return v, shift


class Zero(ProxFunction):
    """The zero function; its prox is the identity."""

    def value(self, v) -> float:
        return 0.0

    def prox(self, v, step):
        return np.asarray(v, dtype=np.float64).copy()

    def conjugate_prox(self, v, step):
        # conjugate is the indicator of {0}; exact zeros avoid the
        # round-off of v - s*(v/s)
        return np.zeros_like(np.asarray(v, dtype=np.float64))


class L1(ProxFunction):
    """weight * ||v - shift||_1."""

    def __init__(self, weight: float, shift=None):
        if weight < 0:
            raise ValueError("weight must be nonnegative")
        self.weight = float(weight)
        self.shift = None if shift is None else np.asarray(shift, dtype=np.float64)

    def value(self, v) -> float:
        v, b = self._shifted(v)
        return self.weight * float(np.sum(np.abs(v - b)))

    def prox(self, v, step):
        v, b = self._shifted(v)
        lam = _step_entries(step, v.size)
        return b + soft_threshold(v - b, lam * self.weight)


class SqL2(ProxFunction):
    """(weight/2) * ||v - shift||_2^2."""

    def __init__(self, weight: float, shift=None):
        if weight < 0:
            raise ValueError("weight must be nonnegative")
        self.weight = float(weight)
        self.shift = None if shift is None else np.asarray(shift, dtype=np.float64)

    def value(self, v) -> float:
        v, b = self._shifted(v)
        return 0.5 * self.weight * float(np.dot(v - b, v - b))

    def prox(self, v, step):
        v, b = self._shifted(v)
        lam = _step_entries(step, v.size) * self.weight
        return (v + lam * b) / (1.0 + lam)

    def conjugate_prox(self, v, step):
        # explicit conjugate form w/(w + s) * (v - s*b); agrees with the
        # Moreau route and skips one division
        v, b = self._shifted(v)
        s = _step_entries(step, v.size)
        return self.weight * (v - s * b) / (self.weight + s)


class L2Norm(ProxFunction):
    """weight * ||v - shift||_2 over the whole vector (one block)."""

    def __init__(self, weight: float, shift=None):
        if weight < 0:
            raise ValueError("weight must be nonnegative")
        self.weight = float(weight)
        self.shift = None if shift is None else np.asarray(shift, dtype=np.float64)

    def value(self, v) -> float:
        v, b = self._shifted(v)
        return self.weight * float(np.linalg.norm(v - b))

    def prox(self, v, step):
        v, b = self._shifted(v)
        lam = _step_entries(step, v.size)
        if isinstance(lam, np.ndarray):
            # the Euclidean norm couples all coordinates, so only a
            # uniform diagonal step keeps the closed form valid
            if not np.all(lam == lam[0]):
                raise ValueError("L2Norm prox requires a scalar or uniform step")
            lam = float(lam[0])
        return prox_l2norm(v, lam * self.weight, b)


class GroupL12(ProxFunction):
    """weight * sum_i ||(v_i, v_{m+i})||_2 with m = group_len."""

    def __init__(self, weight: float, group_len: int):
        if weight < 0:
            raise ValueError("weight must be nonnegative")
        if group_len < 1:
            raise ValueError("group_len must be >= 1")
        self.weight = float(weight)
        self.group_len = int(group_len)

    def _check(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (2 * self.group_len,):
            raise ValueError(f"expected a vector of length {2 * self.group_len}, got shape {v.shape}")
        return v

    def value(self, v) -> float:
        v = self._check(v)
        pairs = v.reshape(2, self.group_len)
        return self.weight * float(np.sum(np.hypot(pairs[0], pairs[1])))

    def prox(self, v, step):
        v = self._check(v)
        lam = _step_entries(step, v.size)
        return group_soft_threshold(v, lam * self.weight)


class IndicatorNonneg(ProxFunction):
    """Indicator of the nonnegative orthant; prox is the projection."""

    def value(self, v) -> float:
        v = np.asarray(v, dtype=np.float64)
        return 0.0 if np.all(v >= 0) else np.inf

    def prox(self, v, step):
        # projection onto a separable set does not depend on the metric
        return np.maximum(np.asarray(v, dtype=np.float64), 0.0)

    def conjugate_prox(self, v, step):
        # Moreau image v - s*max(v/s, 0) evaluated exactly
        return np.minimum(np.asarray(v, dtype=np.float64), 0.0)


class IndicatorBox(ProxFunction):
    """Indicator of the box [lo, hi] (componentwise, bounds may be inf)."""

    def __init__(self, lo, hi):
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if np.any(lo > hi):
            raise ValueError("box requires lo <= hi componentwise")
        self.lo = lo
        self.hi = hi

    def value(self, v) -> float:
        v = np.asarray(v, dtype=np.float64)
        return 0.0 if np.all(v >= self.lo) and np.all(v <= self.hi) else np.inf

    def prox(self, v, step):
        return np.clip(np.asarray(v, dtype=np.float64), self.lo, self.hi)

    def conjugate_prox(self, v, step):
        # Moreau image v - s*clip(v/s, lo, hi), written so coordinates
        # whose projection is inactive come out exactly zero
        v = np.asarray(v, dtype=np.float64)
        s = _step_entries(step, v.size)
        upper = s * self.hi
        lower = s * self.lo
        return np.where(v > upper, v - upper, np.where(v < lower, v - lower, 0.0))
