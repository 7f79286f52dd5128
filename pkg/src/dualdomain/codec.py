"""Double-domain coding experiment: encode a signal into partial, quantized time
samples and TF coefficients, then decode by constrained sparse reconstruction.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .degradation import (QuantizerSpec, Records, Tag, quantize_complex,
                          quantize_records, random_keep, tf_scale)
from .feasible import build_box
from .frame import FrameSpec, make_tight_frame
from .solver import (ANALYSIS, ProblemSpec, SolverConfig, solve)

PAYLOAD_VERSION = 1
SDR_CAP_DB = 300.0
PEAK_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class EncodeSpec:
    p_T: float
    p_TF: float
    b_T: int
    b_TF: int
    frame: FrameSpec
    seed: int = 0

    def __post_init__(self):
        for name in ("p_T", "p_TF"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        for name in ("b_T", "b_TF"):
            b = getattr(self, name)
            if not 1 <= b <= 52:
                raise ValueError(f"{name} must lie in [1, 52], got {b}")

    def nominal_bits(self) -> float:
        return self.p_T * self.frame.P * self.b_T + self.p_TF * self.frame.Q * self.b_TF


@dataclass(frozen=True, eq=False)
class EncodedPayload:
    time_records: Records
    tf_records: Records
    spec: EncodeSpec
    tf_scale: float
    sample_rate: int | None = None
    original_length: int | None = None

    @property
    def kept_samples(self) -> int:
        return int(np.sum(self.time_records.tag != Tag.MISSING))

    @property
    def kept_coefficients(self) -> int:
        """Number of stored TF coefficients, partners included."""
        return int(np.sum(self.tf_records.tag != Tag.MISSING))

    @property
    def p_T(self) -> float:
        """Fraction of samples actually kept."""
        return self.kept_samples / self.spec.frame.P

    @property
    def p_TF(self) -> float:
        """Fraction of coefficients actually kept."""
        return self.kept_coefficients / self.spec.frame.Q

    def bits(self) -> float:
        """Bit cost ``p_T P b_T + p_TF Q b_TF`` at the realized fractions.

        A kept conjugate pair occupies two of the ``Q`` slots and costs one complex
        number; a self-conjugate coefficient occupies one slot and costs one real.
        """
        s = self.spec
        return self.p_T * s.frame.P * s.b_T + self.p_TF * s.frame.Q * s.b_TF

    def boxes(self):
        return build_box(self.time_records, "time"), build_box(self.tf_records, "tf")

    def to_json(self) -> str:
        return json.dumps(payload_to_dict(self))

    @classmethod
    def from_json(cls, text: str) -> "EncodedPayload":
        return payload_from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "EncodedPayload":
        return cls.from_json(Path(path).read_text())


def select_tf(c: np.ndarray, frame: FrameSpec, fraction: float) -> np.ndarray:
    """Representatives of the largest-magnitude conjugate pairs.

    Selection fills ``round(fraction * Q)`` coefficient slots greedily by magnitude;
    a pair takes two slots, a self-conjugate coefficient one. If a single slot is
    left over, the largest unselected self-conjugate coefficient fills it.
    """
    target = int(round(fraction * frame.Q))
    reps = frame.representatives()
    selfc = frame.self_conjugate()[reps]
    cost = np.where(selfc, 1, 2)
    # stable sort keeps ties in index order, so selection is deterministic
    order = np.argsort(-np.abs(c[reps]), kind="stable")
    cum = np.cumsum(cost[order])
    chosen = order[cum <= target]
    used = int(cost[chosen].sum())
    if used < target:
        taken = np.zeros(len(reps), dtype=bool)
        taken[chosen] = True
        singles = order[selfc[order] & ~taken[order]]
        chosen = np.concatenate([chosen, singles[:target - used]])
    return np.sort(reps[chosen])


def encode(y: np.ndarray, spec: EncodeSpec, sample_rate: int | None = None,
           original_length: int | None = None) -> EncodedPayload:
    """Keep a random fraction of samples and the largest TF coefficients, quantized.

    ``sample_rate`` and ``original_length`` (before padding) are carried along
    for writing audio back out.
    """
    frame = spec.frame
    y = np.asarray(y, dtype=float)
    if y.shape != (frame.P,):
        raise ValueError(f"signal length {len(y)} != frame signal_length {frame.P}")
    peak = float(np.max(np.abs(y))) if y.size else 0.0
    if peak > 1.0 + PEAK_TOL:
        raise ValueError(f"signal must be peak-normalized (max |y| = {peak:.6g} > 1)")
    rng = np.random.default_rng(spec.seed)

    keep = random_keep(frame.P, spec.p_T, rng)
    tag = np.full(frame.P, Tag.MISSING, dtype=np.int8)
    obs = np.zeros(frame.P)
    lo = np.full(frame.P, -np.inf)
    up = np.full(frame.P, np.inf)
    if keep.any():
        level, rec = quantize_records(y[keep], QuantizerSpec(spec.b_T))
        tag[keep], obs[keep], lo[keep], up[keep] = rec.tag, level, rec.lower, rec.upper
    time_records = Records(tag, obs, lo, up)

    tf_records, scale = observe_tf(frame.analysis(y), frame, spec.p_TF, spec.b_TF)
    return EncodedPayload(time_records, tf_records, spec, scale,
                          sample_rate, original_length)


def observe_tf(c: np.ndarray, frame: FrameSpec, fraction: float,
               bits: int) -> tuple[Records, float]:
    """Records of the kept, quantized coefficients of ``c`` and the quantizer scale.

    The scale is the largest real or imaginary magnitude among kept coefficients
    (0 when nothing is kept). Partners are filled in by conjugation.
    """
    chosen = select_tf(c, frame, fraction) if fraction > 0 else np.array([], dtype=int)
    scale = tf_scale(c[chosen])
    quantizer = QuantizerSpec(bits, scale) if len(chosen) else None
    return _tf_records(c, chosen, frame, quantizer), scale


def _tf_records(c, chosen, frame: FrameSpec, quantizer) -> Records:
    Q = frame.Q
    tag = np.full(Q, Tag.MISSING, dtype=np.int8)
    obs = np.zeros((Q, 2))
    lo = np.full((Q, 2), -np.inf)
    up = np.full((Q, 2), np.inf)
    if quantizer is None:
        return Records(tag, obs, lo, up)
    level, qlo, qup = quantize_complex(c[chosen], quantizer)
    obs_c = np.stack([level.real, level.imag], axis=1)
    selfc = frame.self_conjugate()[chosen]
    # self-conjugate coefficients are real: only the real part is transmitted
    obs_c[selfc, 1] = 0.0
    qlo[selfc, 1] = 0.0
    qup[selfc, 1] = 0.0
    tag[chosen] = Tag.QUANTIZED
    obs[chosen], lo[chosen], up[chosen] = obs_c, qlo, qup
    partner = frame.partner_index()[chosen]
    # conjugate mirror: real bounds copied, imaginary bounds negated and swapped
    tag[partner] = Tag.QUANTIZED
    obs[partner, 0], obs[partner, 1] = obs_c[:, 0], -obs_c[:, 1]
    lo[partner, 0], up[partner, 0] = qlo[:, 0], qup[:, 0]
    lo[partner, 1], up[partner, 1] = -qup[:, 1], -qlo[:, 1]
    return Records(tag, obs, lo, up)


def decode(payload: EncodedPayload, model: str = ANALYSIS,
           config: SolverConfig | None = None, algorithm: str = "tight",
           return_report: bool = False):
    """Reconstruct the signal consistent with both observations."""
    box_T, box_TF = payload.boxes()
    problem = ProblemSpec(payload.spec.frame, box_T, box_TF, model=model)
    x, report = solve(problem, config, algorithm)
    return (x, report) if return_report else x


def tf_direct_baseline(payload: EncodedPayload) -> np.ndarray:
    """Synthesize the quantized kept coefficients, zeros elsewhere."""
    z = payload.tf_records.observed_values()
    z[payload.tf_records.tag == Tag.MISSING] = 0.0
    return payload.spec.frame.synthesis(z)


def sdr(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Signal-to-distortion ratio in dB, capped at ``SDR_CAP_DB``."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ValueError("signals differ in length")
    ref = float(np.sum(y ** 2))
    if ref == 0.0:
        raise ValueError("reference signal is zero")
    err = float(np.sum((y - y_hat) ** 2))
    if err == 0.0:
        return SDR_CAP_DB
    return float(min(10.0 * np.log10(ref / err), SDR_CAP_DB))


def _enc(v: float):
    if v == np.inf:
        return "inf"
    if v == -np.inf:
        return "-inf"
    return float(v)


def _dec(v) -> float:
    # float() parses the "inf" / "-inf" markers as well
    return float(v)


def _records_rows(rec: Records) -> list:
    if rec.is_complex:
        return [[int(t), [_enc(o[0]), _enc(o[1])], [_enc(l[0]), _enc(l[1])],
                 [_enc(u[0]), _enc(u[1])]]
                for t, o, l, u in zip(rec.tag, rec.observed, rec.lower, rec.upper)]
    return [[int(t), _enc(o), _enc(l), _enc(u)]
            for t, o, l, u in zip(rec.tag, rec.observed, rec.lower, rec.upper)]


def _records_from_rows(rows: list, complex_: bool) -> Records:
    n = len(rows)
    shape = (n, 2) if complex_ else (n,)
    tag = np.array([r[0] for r in rows], dtype=np.int8)
    cols = []
    for k in (1, 2, 3):
        vals = [([_dec(x) for x in r[k]] if complex_ else _dec(r[k])) for r in rows]
        cols.append(np.array(vals, dtype=float).reshape(shape))
    return Records(tag, *cols)


def payload_to_dict(p: EncodedPayload) -> dict:
    s, f = p.spec, p.spec.frame
    return {
        "version": PAYLOAD_VERSION,
        "P": f.P,
        "Q": f.Q,
        "frame": {"window_length": f.window_length, "hop": f.hop,
                  "channels": f.channels, "signal_length": f.signal_length,
                  "window": f.window_name},
        "seed": s.seed,
        "p_T": s.p_T,
        "p_TF": s.p_TF,
        "b_T": s.b_T,
        "b_TF": s.b_TF,
        "tf_scale": p.tf_scale,
        "sample_rate": p.sample_rate,
        "original_length": p.original_length,
        "time_records": _records_rows(p.time_records),
        "tf_records": _records_rows(p.tf_records),
    }


def payload_from_dict(d: dict) -> EncodedPayload:
    if d.get("version") != PAYLOAD_VERSION:
        raise ValueError(f"unsupported payload version {d.get('version')!r}")
    fd = d["frame"]
    frame = make_tight_frame(fd["window_length"], fd["hop"], fd["channels"],
                             fd["signal_length"], fd.get("window", "sine"))
    if frame.P != d["P"] or frame.Q != d["Q"]:
        raise ValueError("payload frame dimensions are inconsistent")
    spec = EncodeSpec(d["p_T"], d["p_TF"], d["b_T"], d["b_TF"], frame, d["seed"])
    time_records = _records_from_rows(d["time_records"], False)
    tf_records = _records_from_rows(d["tf_records"], True)
    if len(time_records) != frame.P or len(tf_records) != frame.Q:
        raise ValueError("payload record arrays have the wrong length")
    return EncodedPayload(time_records, tf_records, spec, float(d["tf_scale"]),
                          d.get("sample_rate"), d.get("original_length"))
