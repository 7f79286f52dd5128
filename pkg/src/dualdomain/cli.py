"""Command-line front end and the grid experiment harness."""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from . import codec
from .degradation import QuantizerSpec, Records, Tag, degrade, random_keep
from .feasible import BoxConstraint, build_box
from .frame import make_tight_frame
from .solver import ProblemSpec, SolverConfig, solve

log = logging.getLogger("dualdomain")

SILENCE = 1e-4
TF_DIRECT = "tf_direct"


def load_wav(path) -> tuple[np.ndarray, int]:
    """Read a WAV file as floats in [-1, 1]; multichannel input keeps channel 0."""
    try:
        rate, data = wavfile.read(str(path))
    except (OSError, ValueError) as exc:
        raise ValueError(f"cannot read WAV file {path}: {exc}") from exc
    if data.ndim == 2:
        data = data[:, 0]
    if data.dtype == np.int16:
        x = data / 32768.0
    elif data.dtype == np.int32:
        # 24-bit PCM is delivered left-aligned in int32
        x = data / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(float) - 128.0) / 128.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(float)
    else:
        raise ValueError(f"unsupported WAV sample format {data.dtype}")
    return np.asarray(x, dtype=float), int(rate)


def save_wav(path, x: np.ndarray, rate: int) -> None:
    """Write 16-bit PCM, clipping to [-1, 1]."""
    pcm = np.clip(np.round(np.clip(x, -1.0, 1.0) * 32768.0), -32768, 32767)
    wavfile.write(str(path), int(rate), pcm.astype(np.int16))


def excerpt(x: np.ndarray, rate: int, seconds: float) -> np.ndarray:
    """First ``seconds`` of audio after leading silence."""
    loud = np.flatnonzero(np.abs(x) >= SILENCE)
    start = int(loud[0]) if loud.size else 0
    return x[start:start + int(round(seconds * rate))]


def peak_normalize(x: np.ndarray) -> np.ndarray:
    peak = np.max(np.abs(x)) if x.size else 0.0
    if peak == 0:
        raise ValueError("cannot peak-normalize a silent signal")
    return x / peak


@dataclass
class ExperimentGrid:
    p_T: list = field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9])
    p_TF: list = field(default_factory=lambda: [0.0])
    bits: list = field(default_factory=lambda: [2, 4, 8, 16, 32])
    models: list = field(default_factory=lambda: ["analysis"])
    seeds: list = field(default_factory=lambda: [0])
    excerpt_seconds: float = 1.0
    window_length: int = 2048
    hop: int = 1024
    channels: int = 2048
    iterations: int = 300
    algorithm: str = "tight"

    def __post_init__(self):
        for p in list(self.p_T) + list(self.p_TF):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"fractions must lie in [0, 1], got {p}")
        for m in self.models:
            if m not in ("analysis", "synthesis", TF_DIRECT):
                raise ValueError(f"unknown model {m!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentGrid":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known - {"inputs"}
        if unknown:
            raise ValueError(f"unknown grid keys: {sorted(unknown)}")
        return cls(**{k: v for k, v in d.items() if k in known})

    def cells(self):
        return itertools.product(self.p_T, self.p_TF, self.bits, self.models, self.seeds)


@dataclass
class ResultRow:
    signal: str
    p_T: float
    p_TF: float
    b_T: int
    b_TF: int
    model: str
    seed: int
    bitrate: float
    sdr_db: float
    iterations: int
    wall_time_s: float
    status: str = "ok"


COLUMNS = [f.name for f in fields(ResultRow)]


def run_cell(signal_id: str, y: np.ndarray, rate: int, grid: ExperimentGrid,
             p_T: float, p_TF: float, b: int, model: str, seed: int) -> ResultRow:
    """Encode ``y`` (already peak-normalized and padded to the frame) and decode it."""
    start = time.perf_counter()
    frame = make_tight_frame(grid.window_length, grid.hop, grid.channels, len(y))
    row = ResultRow(signal_id, p_T, p_TF, b, b, model, seed, float("nan"),
                    float("nan"), 0, 0.0)
    try:
        if len(y) != frame.P:
            y = np.pad(y, (0, frame.P - len(y)))
        payload = codec.encode(y, codec.EncodeSpec(p_T, p_TF, b, b, frame, seed))
        row.bitrate = payload.bits() / (frame.P / rate)
        if model == TF_DIRECT:
            x = codec.tf_direct_baseline(payload)
        else:
            config = _config(grid.algorithm, grid.iterations)
            x, report = codec.decode(payload, model, config, grid.algorithm,
                                     return_report=True)
            row.iterations = report.iterations_run
        row.sdr_db = codec.sdr(y, x)
    except Exception as exc:  # a failed cell is reported, the grid goes on
        log.warning("cell %s failed: %s", (signal_id, p_T, p_TF, b, model, seed), exc)
        row.status = f"error: {type(exc).__name__}: {exc}".replace("\n", " ")
    row.wall_time_s = time.perf_counter() - start
    return row


def _run_cell_args(args):
    return run_cell(*args)


def prepare_signal(x: np.ndarray, rate: int, grid: ExperimentGrid) -> np.ndarray:
    y = peak_normalize(excerpt(x, rate, grid.excerpt_seconds))
    frame = make_tight_frame(grid.window_length, grid.hop, grid.channels, len(y))
    return np.pad(y, (0, frame.P - len(y)))


def run_grid(signals: dict, grid: ExperimentGrid, jobs: int = 1) -> list[ResultRow]:
    """Run every grid cell for every ``{id: (samples, rate)}`` signal.

    Signals must already be excerpted and normalized (see :func:`prepare_signal`).
    Rows come back in grid order regardless of ``jobs``.
    """
    tasks = [(sid, y, rate, grid) + cell
             for sid, (y, rate) in signals.items() for cell in grid.cells()]
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_cell_args(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_cell_args, tasks))


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        d = asdict(row)
        d["wall_time_s"] = f"{row.wall_time_s:.3f}"
        writer.writerow([_fmt(d[c]) for c in COLUMNS])


def _config(algorithm: str, iterations: int, tau=None, sigma=None, rho=1.0,
            tol=None) -> SolverConfig:
    kw = {"max_iterations": iterations, "rho": rho, "rel_tolerance": tol}
    if tau is not None:
        kw["tau"] = tau
    if sigma is not None:
        kw["sigma"] = sigma
    if algorithm == "general":
        return SolverConfig.for_general(**kw)
    return SolverConfig.for_tight(**kw)


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("DUALDOMAIN_JOBS", "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualdomain",
        description="Audio reconstruction from partial, clipped and quantized "
                    "observations in the time and time-frequency domains.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def frame_args(p):
        p.add_argument("--window-length", type=int, default=2048)
        p.add_argument("--hop", type=int, default=1024)
        p.add_argument("--channels", type=int, default=2048)

    rec = sub.add_parser("reconstruct", help="degrade (or load a payload) and reconstruct")
    rec.add_argument("--input", help="clean WAV to degrade")
    rec.add_argument("--payload", help="encoded payload JSON to decode instead")
    rec.add_argument("--mask-keep", type=float, help="fraction of samples kept")
    rec.add_argument("--clip-theta", type=float, help="clipping threshold")
    rec.add_argument("--quant-bits", type=int, help="time-domain bit depth")
    rec.add_argument("--tf-keep", type=float, help="fraction of TF coefficients kept")
    rec.add_argument("--tf-bits", type=int, default=16, help="TF-domain bit depth")
    rec.add_argument("--model", choices=["analysis", "synthesis"], default="analysis")
    rec.add_argument("--algorithm", choices=["general", "tight"], default="tight")
    rec.add_argument("--mode", choices=["consistent", "inconsistent"], default="consistent")
    rec.add_argument("--iterations", type=int, default=300)
    rec.add_argument("--tau", type=float)
    rec.add_argument("--sigma", type=float)
    rec.add_argument("--rho", type=float, default=1.0)
    rec.add_argument("--seed", type=int, default=0)
    rec.add_argument("--reference", help="clean WAV for SDR (defaults to --input)")
    rec.add_argument("--output", help="reconstructed WAV")
    rec.add_argument("--report", help="JSON report path")
    frame_args(rec)

    enc = sub.add_parser("encode", help="write a double-domain payload")
    enc.add_argument("--input", required=True)
    enc.add_argument("--output", required=True)
    enc.add_argument("--p-t", type=float, required=True)
    enc.add_argument("--p-tf", type=float, default=0.0)
    enc.add_argument("--b-t", type=int, default=16)
    enc.add_argument("--b-tf", type=int, default=16)
    enc.add_argument("--seed", type=int, default=0)
    enc.add_argument("--seconds", type=float, help="excerpt length (default: whole file)")
    frame_args(enc)

    exp = sub.add_parser("experiment", help="run a JSON grid over WAV inputs")
    exp.add_argument("grid", help="grid config JSON")
    exp.add_argument("inputs", nargs="*", help="WAV files (added to the grid's inputs)")
    exp.add_argument("--output", help="CSV path (default: stdout)")
    exp.add_argument("--jobs", type=int, default=_default_jobs())
    return parser


def cmd_reconstruct(args, parser) -> int:
    if args.payload is None and args.input is None:
        parser.error("reconstruct needs --input or --payload")
    if args.payload is not None:
        payload = codec.EncodedPayload.load(args.payload)
        frame = payload.spec.frame
        box_T, box_TF = payload.boxes()
        rate = payload.sample_rate or 44100
        length = payload.original_length or frame.P
        clean = None
    else:
        clean, rate = load_wav(args.input)
        length = len(clean)
        frame = make_tight_frame(args.window_length, args.hop, args.channels, length)
        box_T, box_TF = simulate_degradation(clean, frame, args)

    problem = ProblemSpec(frame, box_T, box_TF, model=args.model, mode=args.mode)
    config = _config(args.algorithm, args.iterations, args.tau, args.sigma, args.rho)
    start = time.perf_counter()
    x, report = solve(problem, config, args.algorithm)
    elapsed = time.perf_counter() - start
    x = x[:length]

    out = {k: v for k, v in asdict(report).items() if k != "primal"}
    out.update(model=args.model, algorithm=args.algorithm, mode=args.mode,
               tau=config.tau, sigma=config.sigma, rho=config.rho,
               wall_time_s=elapsed)
    reference = None
    if args.reference is not None:
        reference, _ = load_wav(args.reference)
    elif clean is not None:
        reference = clean
    if reference is not None:
        n = min(len(reference), len(x))
        out["sdr_db"] = codec.sdr(reference[:n], x[:n])
    if args.output:
        save_wav(args.output, x, rate)
    text = json.dumps(out, indent=2)
    if args.report:
        Path(args.report).write_text(text + "\n")
    else:
        print(text)
    return 0


def simulate_degradation(clean: np.ndarray, frame, args) -> tuple[BoxConstraint, BoxConstraint]:
    """Boxes for the degradations requested on the command line."""
    rng = np.random.default_rng(args.seed)
    n = len(clean)
    x = np.pad(clean, (0, frame.P - n))
    keep = None
    if args.mask_keep is not None:
        keep = np.ones(frame.P, dtype=bool)
        keep[:n] = random_keep(n, args.mask_keep, rng)
    quantizer = QuantizerSpec(args.quant_bits) if args.quant_bits else None
    _, rec = degrade(x, keep=keep, theta=args.clip_theta, quantizer=quantizer)
    # the zero padding is known exactly
    tag, obs, lo, up = rec.tag.copy(), rec.observed.copy(), rec.lower.copy(), rec.upper.copy()
    tag[n:], obs[n:], lo[n:], up[n:] = Tag.RELIABLE, 0.0, 0.0, 0.0
    box_T = build_box(Records(tag, obs, lo, up), "time")
    if args.tf_keep:
        tf_rec, _ = codec.observe_tf(frame.analysis(x), frame, args.tf_keep, args.tf_bits)
        box_TF = build_box(tf_rec, "tf")
    else:
        box_TF = BoxConstraint.unbounded(frame.Q, "tf")
    return box_T, box_TF


def cmd_encode(args) -> int:
    x, rate = load_wav(args.input)
    if args.seconds:
        x = excerpt(x, rate, args.seconds)
    y = peak_normalize(x)
    frame = make_tight_frame(args.window_length, args.hop, args.channels, len(y))
    spec = codec.EncodeSpec(args.p_t, args.p_tf, args.b_t, args.b_tf, frame, args.seed)
    payload = codec.encode(np.pad(y, (0, frame.P - len(y))), spec,
                           sample_rate=rate, original_length=len(y))
    payload.save(args.output)
    print(json.dumps({"bits": payload.bits(), "bitrate": payload.bits() / (frame.P / rate),
                      "p_T": payload.p_T, "p_TF": payload.p_TF}))
    return 0


def cmd_experiment(args) -> int:
    config = json.loads(Path(args.grid).read_text())
    grid = ExperimentGrid.from_dict(config)
    paths = list(config.get("inputs", [])) + list(args.inputs)
    signals = {}
    for path in paths:
        x, rate = load_wav(path)
        signals[Path(path).stem] = (prepare_signal(x, rate, grid), rate)
    rows = run_grid(signals, grid, jobs=args.jobs)
    if args.output:
        with open(args.output, "w", newline="") as fh:
            write_csv(rows, fh)
    else:
        write_csv(rows, sys.stdout)
    failed = sum(r.status != "ok" for r in rows)
    if failed:
        log.warning("%d of %d cells failed", failed, len(rows))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "reconstruct":
            return cmd_reconstruct(args, parser)
        if args.command == "encode":
            return cmd_encode(args)
        return cmd_experiment(args)
    except (ValueError, OSError) as exc:
        print(f"dualdomain: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
