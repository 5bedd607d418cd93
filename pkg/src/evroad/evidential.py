"""Belief functions on the binary frame {R, notR}.

A mass function is stored as three numbers ``(m_R, m_notR, m_omega)``; the
empty set never carries mass after normalization. Every array routine in this
module accepts arrays whose last axis has length 3 in that order, so the same
code serves single points, point clouds and whole grids.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MASS_FLOOR = 1e-12
SUM_TOL = 1e-9

R, NOT_R, OMEGA = 0, 1, 2


class TotalConflictError(ValueError):
    """Dempster normalization is undefined: all product mass fell on the empty set."""


class InconsistentCommonalityError(ValueError):
    pass


# ---------------------------------------------------------------------------
# array kernels


def vacuous_array(shape: tuple[int, ...] = ()) -> np.ndarray:
    out = np.zeros(shape + (3,))
    out[..., OMEGA] = 1.0
    return out


def floor_masses(m: np.ndarray, floor: float = MASS_FLOOR) -> np.ndarray:
    """Clamp each component to at least ``floor`` and renormalize."""
    m = np.maximum(np.asarray(m, dtype=float), floor)
    return m / m.sum(axis=-1, keepdims=True)


def dempster_unnormalized(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Conjunctive combination, returning (masses on R/notR/Omega, conflict K)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., R] = a[..., R] * (b[..., R] + b[..., OMEGA]) + a[..., OMEGA] * b[..., R]
    out[..., NOT_R] = a[..., NOT_R] * (b[..., NOT_R] + b[..., OMEGA]) + a[..., OMEGA] * b[..., NOT_R]
    out[..., OMEGA] = a[..., OMEGA] * b[..., OMEGA]
    conflict = a[..., R] * b[..., NOT_R] + a[..., NOT_R] * b[..., R]
    return out, conflict


def dempster(a: np.ndarray, b: np.ndarray, on_total_conflict: str = "raise") -> np.ndarray:
    """Dempster's rule, element-wise over the leading axes.

    ``on_total_conflict`` is ``"raise"`` or ``"vacuous"``; the latter resets
    cells whose non-conflicting mass is zero.
    """
    out, _ = dempster_unnormalized(a, b)
    # 1 - K computed from the surviving mass avoids cancellation when K ~ 1.
    norm = out.sum(axis=-1)
    dead = norm <= 0.0
    if np.any(dead):
        if on_total_conflict == "raise":
            raise TotalConflictError("total conflict between mass functions")
        out[dead] = (0.0, 0.0, 1.0)
        norm = np.where(dead, 1.0, norm)
    return out / norm[..., None]


def to_commonality_array(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    q = np.empty_like(m)
    q[..., R] = m[..., R] + m[..., OMEGA]
    q[..., NOT_R] = m[..., NOT_R] + m[..., OMEGA]
    q[..., OMEGA] = m[..., OMEGA]
    return q


def from_commonality_array(q: np.ndarray, tol: float = SUM_TOL) -> np.ndarray:
    """Moebius inversion of binary-frame commonalities (normalized inputs)."""
    q = np.asarray(q, dtype=float)
    m = np.empty_like(q)
    m[..., R] = q[..., R] - q[..., OMEGA]
    m[..., NOT_R] = q[..., NOT_R] - q[..., OMEGA]
    m[..., OMEGA] = q[..., OMEGA]
    empty = 1.0 - q[..., R] - q[..., NOT_R] + q[..., OMEGA]
    if np.any(m < -tol) or np.any(np.abs(empty) > tol):
        raise InconsistentCommonalityError("commonalities do not invert to a normalized mass function")
    return np.clip(m, 0.0, None)


def log_commonality(m: np.ndarray, floor: float = MASS_FLOOR) -> np.ndarray:
    """Log-commonalities of floored masses; the quantity summed per grid cell."""
    return np.log(to_commonality_array(floor_masses(m, floor)))


def masses_from_log_commonality(lq: np.ndarray) -> np.ndarray:
    """Recover normalized masses from summed log-commonalities.

    The unnormalized masses are ``Q(R) - Q(Om)``, ``Q(notR) - Q(Om)`` and
    ``Q(Om)``; normalization divides by their sum ``Q(R) + Q(notR) - Q(Om)``.
    Both are invariant to a common scale on Q, so the larger singleton
    log-commonality is subtracted before exponentiating. Sums over hundreds of
    points would otherwise underflow.
    """
    lq = np.asarray(lq, dtype=float)
    shift = np.maximum(lq[..., R], lq[..., NOT_R])
    q_r = np.exp(lq[..., R] - shift)
    q_n = np.exp(lq[..., NOT_R] - shift)
    m = np.empty(lq.shape)
    # Q(A) - Q(Om) = Q(A) * (1 - exp(lq_om - lq_A)), exact even when the two are close
    m[..., R] = -q_r * np.expm1(lq[..., OMEGA] - lq[..., R])
    m[..., NOT_R] = -q_n * np.expm1(lq[..., OMEGA] - lq[..., NOT_R])
    m[..., OMEGA] = np.exp(lq[..., OMEGA] - shift)
    m = np.clip(m, 0.0, None)
    return m / m.sum(axis=-1, keepdims=True)


def plausibility_array(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    num = m[..., R] + m[..., OMEGA]
    den = m[..., R] + m[..., NOT_R] + 2.0 * m[..., OMEGA]
    return num / den


def entropy_array(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    pl_r = m[..., R] + m[..., OMEGA]
    pl_n = m[..., NOT_R] + m[..., OMEGA]
    return -_xlog2x(pl_r) - _xlog2x(pl_n) + _xlog2x(m[..., OMEGA])


def _xlog2x(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    safe = np.where(p > 0.0, p, 1.0)
    return np.where(p > 0.0, p * np.log2(safe), 0.0)


# ---------------------------------------------------------------------------
# value types


@dataclass(frozen=True)
class MassFunction:
    m_R: float
    m_notR: float
    m_omega: float

    def __post_init__(self):
        vals = (self.m_R, self.m_notR, self.m_omega)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError(f"non-finite mass: {vals}")
        if min(vals) < -SUM_TOL:
            raise ValueError(f"negative mass: {vals}")
        if abs(sum(vals) - 1.0) > SUM_TOL:
            raise ValueError(f"masses sum to {sum(vals)!r}, expected 1")

    @classmethod
    def vacuous(cls) -> "MassFunction":
        return cls(0.0, 0.0, 1.0)

    @classmethod
    def from_array(cls, a) -> "MassFunction":
        a = np.asarray(a, dtype=float)
        return cls(float(a[R]), float(a[NOT_R]), float(a[OMEGA]))

    def as_array(self) -> np.ndarray:
        return np.array([self.m_R, self.m_notR, self.m_omega])

    def __iter__(self):
        return iter((self.m_R, self.m_notR, self.m_omega))


@dataclass(frozen=True)
class Commonality:
    q_R: float
    q_notR: float
    q_omega: float

    def as_array(self) -> np.ndarray:
        return np.array([self.q_R, self.q_notR, self.q_omega])


@dataclass(frozen=True)
class WeightOfEvidence:
    focal: str  # "R" or "notR"
    w: float


FOCALS = {"R": R, "notR": NOT_R}


def simple_mass(focal: str, weight: float) -> MassFunction:
    """Simple mass ``{focal}^weight``: 1 - exp(-weight) on the focal set, the rest on Omega."""
    if focal not in FOCALS:
        raise ValueError(f"focal must be 'R' or 'notR', got {focal!r}")
    if not np.isfinite(weight) or weight < 0:
        raise ValueError(f"weight of evidence must be finite and >= 0, got {weight!r}")
    m = np.zeros(3)
    m[FOCALS[focal]] = -np.expm1(-weight)
    m[OMEGA] = np.exp(-weight)
    return MassFunction.from_array(m)


def combine_dempster(a: MassFunction, b: MassFunction) -> MassFunction:
    return MassFunction.from_array(dempster(a.as_array(), b.as_array()))


def to_commonality(m: MassFunction) -> Commonality:
    return Commonality(*to_commonality_array(m.as_array()))


def from_commonality(q: Commonality) -> MassFunction:
    return MassFunction.from_array(from_commonality_array(q.as_array()))


def combine_commonality_batch(masses: Sequence[MassFunction] | np.ndarray) -> MassFunction:
    """Fuse any number of masses through summed log-commonalities.

    An empty batch yields the vacuous mass.
    """
    arr = np.asarray([tuple(m) for m in masses] if not isinstance(masses, np.ndarray) else masses, dtype=float)
    if arr.size == 0:
        return MassFunction.vacuous()
    lq = log_commonality(arr.reshape(-1, 3)).sum(axis=0)
    return MassFunction.from_array(masses_from_log_commonality(lq))


def fold_dempster(masses: Iterable[MassFunction]) -> MassFunction:
    out = MassFunction.vacuous()
    for m in masses:
        out = combine_dempster(out, m)
    return out


def plausibility_transform(m: MassFunction) -> float:
    """Probability of R proportional to singleton plausibilities."""
    den = m.m_R + m.m_notR + 2.0 * m.m_omega
    if den <= 0.0:
        raise ArithmeticError("zero plausibility mass")
    return (m.m_R + m.m_omega) / den


def entropy(m: MassFunction) -> float:
    """Decomposable entropy in bits.

    Note the vacuous mass scores 0 under this expression, same as a certain one.
    """
    return float(entropy_array(m.as_array()))
