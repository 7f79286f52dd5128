"""Box-type feasible sets, their projections and distance proximal operators.

A time-frequency box over ``Q`` complex coefficients is stored as a real box over
``2 Q`` entries, interleaving real and imaginary parts, which is the memory layout of
``z.view(np.float64)``. Projections therefore act on real and imaginary parts
independently.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .degradation import Records

TIME = "time"
TF = "tf"


@dataclass(frozen=True, eq=False)
class BoxConstraint:
    lower: np.ndarray
    upper: np.ndarray
    domain: str = TIME

    def __post_init__(self):
        if self.domain not in (TIME, TF):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("bounds must be 1-D arrays of equal length")
        if self.domain == TF and len(self.lower) % 2:
            raise ValueError("TF box needs an even number of real bounds")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ValueError("NaN bound")
        if np.any(self.lower > self.upper):
            raise ValueError("inconsistent box: lower bound above upper bound")
        self.lower.setflags(write=False)
        self.upper.setflags(write=False)

    @property
    def size(self) -> int:
        """Length of the vectors the box constrains (complex entries for TF)."""
        return len(self.lower) // 2 if self.domain == TF else len(self.lower)

    @classmethod
    def unbounded(cls, size: int, domain: str = TIME) -> "BoxConstraint":
        n = 2 * size if domain == TF else size
        return cls(np.full(n, -np.inf), np.full(n, np.inf), domain)

    @classmethod
    def point(cls, v: np.ndarray, domain: str = TIME) -> "BoxConstraint":
        r = _real_view(np.asarray(v), domain).copy()
        return cls(r, r.copy(), domain)

    def center(self) -> np.ndarray:
        """A representative point: interval midpoint, finite bound, or zero."""
        lo, up = self.lower, self.upper
        fin_lo, fin_up = np.isfinite(lo), np.isfinite(up)
        c = np.zeros_like(lo)
        both = fin_lo & fin_up
        c[both] = 0.5 * (lo[both] + up[both])
        c[fin_lo & ~fin_up] = lo[fin_lo & ~fin_up]
        c[fin_up & ~fin_lo] = up[fin_up & ~fin_lo]
        return _from_real(c, self.domain)

    def contains(self, v: np.ndarray, tol: float = 0.0) -> bool:
        r = _real_view(np.asarray(v), self.domain)
        return bool(np.all(r >= self.lower - tol) and np.all(r <= self.upper + tol))


def build_box(records: Records, domain: str | None = None) -> BoxConstraint:
    """Box whose bounds are the records' decision intervals, closed."""
    if domain is None:
        domain = TF if records.is_complex else TIME
    if (domain == TF) != records.is_complex:
        raise ValueError("TF boxes need complex records and time boxes real ones")
    lower = np.array(records.lower, dtype=float).reshape(-1)
    upper = np.array(records.upper, dtype=float).reshape(-1)
    return BoxConstraint(lower, upper, domain)


def project(box: BoxConstraint, v: np.ndarray) -> np.ndarray:
    """Entrywise clamp ``min(upper, max(v, lower))``; complex input clamps both parts."""
    v = np.asarray(v)
    r = _real_view(v, box.domain)
    if r.shape != box.lower.shape:
        raise ValueError(f"vector of length {len(v)} does not match box of size {box.size}")
    return _from_real(np.minimum(box.upper, np.maximum(r, box.lower)), box.domain)


def distance(box: BoxConstraint, v: np.ndarray) -> float:
    return float(np.linalg.norm(_real_view(np.asarray(v), box.domain)
                                - _real_view(project(box, v), box.domain)))


def prox_distance(box: BoxConstraint, v: np.ndarray, tau: float) -> np.ndarray:
    """Proximal operator of ``tau * dist(., box)``.

    Moves ``v`` a distance ``tau`` toward its projection, or onto it if closer.
    """
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    p = project(box, v)
    d = distance(box, v)
    if d <= tau:
        return p
    return v + (tau / d) * (p - v)


def _real_view(v: np.ndarray, domain: str) -> np.ndarray:
    if domain == TF:
        return np.ascontiguousarray(v, dtype=complex).view(np.float64)
    if np.iscomplexobj(v):
        raise ValueError("complex vector given to a time-domain box")
    return np.asarray(v, dtype=float)


def _from_real(r: np.ndarray, domain: str) -> np.ndarray:
    if domain == TF:
        return np.ascontiguousarray(r).view(np.complex128)
    return r
