"""Degradation models: masking, hard clipping and mid-riser quantization.

Each operation returns the degraded vector together with :class:`Records`, which
describe, entry by entry, what is known about the original value. Records are a
struct of arrays; for time-frequency data the value arrays carry a trailing axis of
length 2 holding the real and imaginary parts.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class Tag(enum.IntEnum):
    RELIABLE = 0
    MISSING = 1
    CLIPPED_LOW = 2
    CLIPPED_HIGH = 3
    QUANTIZED = 4


@dataclass(frozen=True, eq=False)
class Records:
    """Per-entry degradation description.

    ``observed``, ``lower`` and ``upper`` have shape ``(n,)`` for real data or
    ``(n, 2)`` for complex data (columns: real, imaginary). Decision bounds may be
    infinite.
    """

    tag: np.ndarray
    observed: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        n = len(self.tag)
        for name in ("observed", "lower", "upper"):
            arr = getattr(self, name)
            if arr.shape[:1] != (n,) or arr.shape != self.observed.shape:
                raise ValueError(f"records field {name!r} has shape {arr.shape}")

    def __len__(self):
        return len(self.tag)

    @property
    def is_complex(self) -> bool:
        return self.observed.ndim == 2

    def observed_values(self) -> np.ndarray:
        """Observed values as a real or complex vector."""
        if self.is_complex:
            return self.observed[:, 0] + 1j * self.observed[:, 1]
        return self.observed.copy()

    def check(self) -> None:
        """Raise ``ValueError`` if any record violates its tag's invariants."""
        tag, obs, lo, up = self.tag, self.observed, self.lower, self.upper
        if self.is_complex:
            tag = tag[:, None].repeat(2, axis=1)
        rel = tag == Tag.RELIABLE
        if np.any(lo[rel] != obs[rel]) or np.any(up[rel] != obs[rel]):
            raise ValueError("reliable record with a non-degenerate interval")
        mis = tag == Tag.MISSING
        if np.any(lo[mis] != -np.inf) or np.any(up[mis] != np.inf):
            raise ValueError("missing record with finite bounds")
        if np.any(lo[tag == Tag.CLIPPED_LOW] != -np.inf):
            raise ValueError("clipped_low record with finite lower bound")
        if np.any(up[tag == Tag.CLIPPED_HIGH] != np.inf):
            raise ValueError("clipped_high record with finite upper bound")
        q = tag == Tag.QUANTIZED
        # self-conjugate TF entries carry an exactly known zero imaginary part
        q_known = q & (lo == up)
        if np.any(obs[q_known] != lo[q_known]):
            raise ValueError("pinned part of a quantized record disagrees with its value")
        q = q & ~q_known
        if np.any(~((lo[q] < obs[q]) & (obs[q] < up[q]))):
            raise ValueError("quantization level outside its decision interval")
        if np.any(lo > up):
            raise ValueError("record with lower bound above upper bound")


def reliable_records(x: np.ndarray) -> Records:
    x = np.asarray(x, dtype=float)
    return Records(np.full(len(x), Tag.RELIABLE, dtype=np.int8), x.copy(), x.copy(), x.copy())


def apply_mask(x: np.ndarray, keep) -> tuple[np.ndarray, Records]:
    """Zero every entry not listed in ``keep`` (indices or a boolean mask)."""
    x = np.asarray(x, dtype=float)
    mask = _as_mask(keep, len(x))
    y = np.where(mask, x, 0.0)
    tag = np.where(mask, Tag.RELIABLE, Tag.MISSING).astype(np.int8)
    lower = np.where(mask, x, -np.inf)
    upper = np.where(mask, x, np.inf)
    return y, Records(tag, y.copy(), lower, upper)


def clip(x: np.ndarray, theta: float) -> tuple[np.ndarray, Records]:
    """Hard-clip ``x`` to ``[-theta, theta]``; values equal to ``±theta`` stay reliable."""
    if not theta > 0:
        raise ValueError(f"clipping threshold must be positive, got {theta}")
    x = np.asarray(x, dtype=float)
    y = np.clip(x, -theta, theta)
    high = x > theta
    low = x < -theta
    tag = np.full(len(x), Tag.RELIABLE, dtype=np.int8)
    tag[high] = Tag.CLIPPED_HIGH
    tag[low] = Tag.CLIPPED_LOW
    lower = np.where(low, -np.inf, y)
    upper = np.where(high, np.inf, y)
    return y, Records(tag, y.copy(), lower, upper)


@dataclass(frozen=True)
class QuantizerSpec:
    """Mid-riser uniform quantizer over ``[-scale, scale]`` with ``2**bits`` levels."""

    bits: int
    scale: float = 1.0

    def __post_init__(self):
        if not 1 <= self.bits <= 52:
            raise ValueError(f"bit depth out of range: {self.bits}")
        if not (np.isfinite(self.scale) and self.scale >= 0):
            raise ValueError(f"invalid quantizer scale {self.scale}")

    @property
    def delta(self) -> float:
        """Level spacing before scaling, ``2**(1 - bits)``."""
        return 2.0 ** (1 - self.bits)

    @property
    def step(self) -> float:
        return self.delta * self.scale

    @property
    def max_index(self) -> int:
        return 2 ** (self.bits - 1) - 1


def quantize(u, spec: QuantizerSpec):
    """Quantize ``u`` (scalar or array); return ``(level, lower, upper)``.

    ``level = sgn+(u) * (floor(|u| / step) + 1/2) * step`` with the cell index
    saturated at the outermost level, whose decision interval is half-infinite.
    ``sgn+(0) = +1``. The interval of a cell is ``[level - step/2, level + step/2)``.
    """
    if spec.scale == 0:
        raise ValueError("cannot quantize with a zero scale")
    u = np.asarray(u, dtype=float)
    step = spec.step
    a = np.minimum(np.abs(u), spec.scale)
    k = np.minimum(np.floor(a / step), spec.max_index)
    sign = np.where(u >= 0, 1.0, -1.0)
    level = sign * (k + 0.5) * step
    outer = k == spec.max_index
    lower = np.where(sign > 0, k * step, -(k + 1) * step)
    upper = np.where(sign > 0, (k + 1) * step, -k * step)
    lower = np.where(outer & (sign < 0), -np.inf, lower)
    upper = np.where(outer & (sign > 0), np.inf, upper)
    if level.ndim == 0:
        return float(level), float(lower), float(upper)
    return level, lower, upper


def quantize_records(x: np.ndarray, spec: QuantizerSpec) -> tuple[np.ndarray, Records]:
    level, lower, upper = quantize(np.asarray(x, dtype=float).reshape(-1), spec)
    return level, Records(np.full(len(level), Tag.QUANTIZED, dtype=np.int8),
                          level, lower, upper)


def quantize_complex(z, spec: QuantizerSpec):
    """Quantize real and imaginary parts independently.

    Returns ``(level, lower, upper)`` where ``level`` is complex and the bounds have a
    trailing axis ``(real, imag)``.
    """
    if spec.scale == 0:
        raise ValueError("zero scale: all-zero coefficient batch cannot be quantized")
    z = np.asarray(z, dtype=complex)
    lr, lor, upr = quantize(z.real, spec)
    li, loi, upi = quantize(z.imag, spec)
    level = np.asarray(lr) + 1j * np.asarray(li)
    lower = np.stack([lor, loi], axis=-1)
    upper = np.stack([upr, upi], axis=-1)
    if level.ndim == 0:
        return complex(level), lower, upper
    return level, lower, upper


def tf_scale(c: np.ndarray) -> float:
    """Largest absolute real or imaginary part of a coefficient batch."""
    c = np.asarray(c, dtype=complex)
    if c.size == 0:
        return 0.0
    return float(max(np.max(np.abs(c.real)), np.max(np.abs(c.imag))))


def degrade(x: np.ndarray, keep=None, theta: float | None = None,
            quantizer: QuantizerSpec | None = None) -> tuple[np.ndarray, Records]:
    """Simultaneous clipping, quantization and drop-out of a real signal.

    Clipping is applied first; samples that survive it unclipped are quantized;
    finally every sample outside ``keep`` is dropped. Clipped samples keep their
    half-infinite bounds rather than a quantizer cell.
    """
    x = np.asarray(x, dtype=float)
    if theta is not None:
        y, rec = clip(x, theta)
    else:
        y, rec = x.copy(), reliable_records(x)
    tag, obs, lo, up = (rec.tag.copy(), rec.observed.copy(),
                        rec.lower.copy(), rec.upper.copy())
    if quantizer is not None:
        sel = tag == Tag.RELIABLE
        level, qlo, qup = quantize(y[sel], quantizer)
        y[sel] = level
        obs[sel], lo[sel], up[sel] = level, qlo, qup
        tag[sel] = Tag.QUANTIZED
    if keep is not None:
        drop = ~_as_mask(keep, len(x))
        y[drop] = 0.0
        obs[drop] = 0.0
        lo[drop], up[drop] = -np.inf, np.inf
        tag[drop] = Tag.MISSING
    return y, Records(tag, obs, lo, up)


def random_keep(n: int, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean mask keeping ``round(fraction * n)`` uniformly chosen entries."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    mask = np.zeros(n, dtype=bool)
    mask[rng.choice(n, size=int(round(fraction * n)), replace=False)] = True
    return mask


def _as_mask(keep, n: int) -> np.ndarray:
    keep = np.asarray(keep)
    if keep.dtype == bool:
        if keep.shape != (n,):
            raise ValueError("boolean mask has the wrong length")
        return keep
    keep = keep.astype(int).reshape(-1)
    if keep.size and (keep.min() < 0 or keep.max() >= n):
        raise IndexError("keep index out of range")
    mask = np.zeros(n, dtype=bool)
    mask[keep] = True
    return mask
