"""Painless discrete Gabor transform with a Parseval-tight window.

Coefficients are stored as a flat complex vector of length ``Q = channels * n_frames``
with index ``q = n * channels + m`` (frame ``n``, channel ``m``). Frames are taken
cyclically, so the analysis operator is exactly adjoint to the synthesis operator
and, after tight normalization, ``synthesize(analyze(x)) == x``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

WINDOWS = ("sine", "hann", "rect")


def make_window(name: str, length: int) -> np.ndarray:
    """Return an unnormalized window of the given family."""
    n = np.arange(length)
    if name == "sine":
        return np.sin(np.pi * (n + 0.5) / length)
    if name == "hann":
        # periodic Hann; strictly positive shifted sum for hop <= length / 2
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * (n + 0.5) / length)
    if name == "rect":
        return np.ones(length)
    raise ValueError(f"unknown window {name!r}, expected one of {WINDOWS}")


@dataclass(frozen=True, eq=False)
class FrameSpec:
    """Geometry and (normalized) window of a cyclic Gabor frame.

    Use :func:`make_tight_frame` to build one; the constructor accepts any window,
    which is how non-tight frames are produced for testing.
    """

    window_length: int
    hop: int
    channels: int
    signal_length: int
    window: np.ndarray = field(repr=False)
    window_name: str = "sine"

    def __post_init__(self):
        if min(self.window_length, self.hop, self.channels, self.signal_length) <= 0:
            raise ValueError("frame dimensions must be positive")
        if self.channels < self.window_length:
            raise ValueError("channels must be >= window_length (painless case)")
        if self.signal_length % self.hop:
            raise ValueError("hop must divide signal_length")
        if self.window.shape != (self.window_length,):
            raise ValueError("window has wrong length")
        self.window.setflags(write=False)
        # cached frame index table, shape (n_frames, window_length)
        idx = (np.arange(self.n_frames)[:, None] * self.hop
               + np.arange(self.window_length)[None, :]) % self.signal_length
        idx.setflags(write=False)
        object.__setattr__(self, "_index", idx)

    @property
    def n_frames(self) -> int:
        return self.signal_length // self.hop

    @property
    def P(self) -> int:
        return self.signal_length

    @property
    def Q(self) -> int:
        return self.channels * self.n_frames

    @property
    def redundancy(self) -> float:
        return self.Q / self.P

    def frame_diagonal(self) -> np.ndarray:
        """Diagonal of the frame operator ``A* A`` (it is diagonal for painless frames)."""
        d = np.bincount(self._index.ravel(),
                        weights=np.tile(self.window ** 2, self.n_frames),
                        minlength=self.signal_length)
        return self.channels * d

    def is_tight(self, tol: float = 1e-8) -> bool:
        """True when ``A* A = Id`` to within ``tol`` (Parseval, bound 1)."""
        return bool(np.max(np.abs(self.frame_diagonal() - 1.0)) <= tol)

    def analysis(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != (self.signal_length,):
            raise ValueError(f"signal length {x.shape} does not match frame "
                             f"signal_length {self.signal_length}")
        frames = x[self._index] * self.window
        return np.fft.fft(frames, n=self.channels, axis=1).ravel()

    def synthesis(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c)
        if c.shape != (self.Q,):
            raise ValueError(f"coefficient length {c.shape} does not match Q={self.Q}")
        # adjoint of the unnormalized DFT is channels * ifft
        frames = np.fft.ifft(c.reshape(self.n_frames, self.channels), axis=1)
        frames = self.channels * frames[:, :self.window_length].real * self.window
        return np.bincount(self._index.ravel(), weights=frames.ravel(),
                           minlength=self.signal_length)

    def partner_index(self) -> np.ndarray:
        """Index of the complex-conjugate partner of every coefficient."""
        n = np.arange(self.n_frames)[:, None]
        m = np.arange(self.channels)[None, :]
        return (n * self.channels + (-m) % self.channels).ravel()

    def representatives(self) -> np.ndarray:
        """One index per conjugate pair (channels ``0 .. channels // 2``)."""
        q = np.arange(self.Q)
        return q[q <= self.partner_index()]

    def self_conjugate(self) -> np.ndarray:
        """Boolean mask of coefficients that are real for real input."""
        return self.partner_index() == np.arange(self.Q)


@dataclass(frozen=True, eq=False)
class Coefficients:
    values: np.ndarray
    spec: FrameSpec

    @property
    def conjugate_pairs(self) -> np.ndarray:
        """Array of ``(q, partner)`` rows, one per pair, ``q <= partner``."""
        reps = self.spec.representatives()
        return np.stack([reps, self.spec.partner_index()[reps]], axis=1)

    def __len__(self):
        return len(self.values)


def padded_length(length: int, hop: int, window_length: int = 0) -> int:
    """Smallest multiple of ``hop`` that is at least ``length`` and ``window_length``."""
    n = max(length, window_length)
    return -(-n // hop) * hop


def make_tight_frame(window_length: int, hop: int, channels: int, signal_length: int,
                     window: str = "sine") -> FrameSpec:
    """Build a Parseval-tight frame for signals of (at most) ``signal_length`` samples.

    ``signal_length`` is rounded up to a multiple of ``hop``; callers zero-pad their
    signals to ``spec.signal_length``. The window is divided by the square root of the
    frame-operator diagonal, which makes ``A* A = Id`` for any window whose shifted
    squares do not vanish.
    """
    if min(window_length, hop, channels, signal_length) <= 0:
        raise ValueError("frame dimensions must be positive")
    if channels < window_length:
        raise ValueError("channels must be >= window_length (painless case)")
    if hop > window_length:
        raise ValueError("hop larger than window_length leaves gaps in the frame")
    P = padded_length(signal_length, hop, window_length)
    g = make_window(window, window_length)
    raw = FrameSpec(window_length, hop, channels, P, g, window)
    diag = raw.frame_diagonal()
    if np.min(diag) <= 0:
        raise ValueError("window shifts do not cover the signal; frame is degenerate")
    # the diagonal has period hop, so it can be folded into the window
    g = g / np.sqrt(diag[np.arange(window_length) % P])
    return FrameSpec(window_length, hop, channels, P, g, window)


def analyze(spec: FrameSpec, x: np.ndarray) -> Coefficients:
    return Coefficients(spec.analysis(x), spec)


def synthesize(spec: FrameSpec, z) -> np.ndarray:
    values = z.values if isinstance(z, Coefficients) else z
    return spec.synthesis(values)


@dataclass(frozen=True, eq=False)
class Linop:
    """A linear map with its adjoint under the real inner product ``Re <a, b>``.

    ``size`` and ``complex_domain`` describe the input space, so power iteration
    can draw a start vector.
    """

    apply: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]
    size: int
    complex_domain: bool = False
    # set for ``diag(weight) @ base`` so solvers can share the base transform
    base: "Linop | None" = None
    weight: np.ndarray | None = None

    def __call__(self, u):
        return self.apply(u)


def identity(size: int, complex_domain: bool = False) -> Linop:
    return Linop(lambda u: u, lambda v: v, size, complex_domain)


def analysis_op(spec: FrameSpec) -> Linop:
    return Linop(spec.analysis, spec.synthesis, spec.P, False)


def synthesis_op(spec: FrameSpec) -> Linop:
    return Linop(spec.synthesis, spec.analysis, spec.Q, True)


def diagonal_op(weights: np.ndarray, inner: Linop) -> Linop:
    """``diag(weights) @ inner`` for real weights."""
    w = np.asarray(weights, dtype=float)
    return Linop(lambda u: w * inner.apply(u), lambda v: inner.adjoint(w * v),
                 inner.size, inner.complex_domain, base=inner, weight=w)


def operator_norm(operators: Sequence[Linop], tol: float = 1e-6, max_iter: int = 1000,
                  seed: int = 0) -> float:
    """Spectral norm of ``sum_m L_m* L_m`` by power iteration.

    The sum is self-adjoint and positive semidefinite, so its norm is the largest
    eigenvalue. Iteration stops once the estimate changes by less than ``tol``
    relative.
    """
    if not operators:
        raise ValueError("need at least one operator")
    size = operators[0].size
    cplx = operators[0].complex_domain
    if any(op.size != size or op.complex_domain != cplx for op in operators):
        raise ValueError("operators must share one input space")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(size)
    if cplx:
        u = u + 1j * rng.standard_normal(size)
    u /= np.linalg.norm(u)
    estimate = 0.0
    for _ in range(max_iter):
        v = sum(op.adjoint(op.apply(u)) for op in operators)
        new = np.linalg.norm(v)
        if new == 0.0:
            return 0.0
        u = v / new
        if abs(new - estimate) <= tol * new:
            return float(new)
        estimate = new
    return float(estimate)
