"""Command line front end.

``nmf-inpaint restore`` degrades (or takes a mask for) one WAV file,
restores it and writes the restored audio, the mask, a per-iteration
trace and a JSON summary. ``nmf-inpaint sweep`` repeats the compact-gap
experiment over several files and gap lengths and tabulates the SNR.
"""

import argparse
import csv
import json
import logging
import os
import platform
import sys
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy
from scipy.io import wavfile

from . import __version__
from .degradation import CompactGaps, RandomDrop, degrade, read_mask, write_mask
from .estimators import ALGORITHMS, EstimatorConfig, run_estimator
from .exceptions import InfeasibleSpec, NumericalBreakdown, SymmetryViolation
from .framing import GapMask
from .metrics import snr
from .transforms import make_dft_pair

__all__ = ["ExperimentSpec", "read_wav", "write_wav", "run_experiment", "main",
           "degrade", "TRACE_COLUMNS"]

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_SPEC, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

TRACE_COLUMNS = ("iter", "step", "snr_gap_db", "nll", "rel_solution_change",
                 "rel_objective_change", "wall_ms")


@dataclass
class ExperimentSpec:
    input: str
    out_dir: str
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    frame_length: int = 4096
    hop: int = None
    n_bins: int = None
    degradation: object = None
    mask_path: str = None
    reference: str = None
    timings: bool = False

    def __post_init__(self):
        if self.hop is None:
            self.hop = self.frame_length // 2
        if self.n_bins is None:
            self.n_bins = self.frame_length
        if self.frame_length < 2 or self.frame_length % 2:
            raise ValueError("frame length must be an even integer >= 2")
        if self.hop * 2 != self.frame_length:
            raise ValueError("only hop = frame_length / 2 is supported")
        if self.degradation is not None and self.mask_path is not None:
            raise ValueError("give either a generated degradation or a mask file, not both")


def read_wav(path):
    """Mono float64 samples and sample rate; stereo is averaged."""
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    if data.dtype == np.int16:
        y = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        y = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        y = (data.astype(np.float64) - 128.0) / 128.0
    elif np.issubdtype(data.dtype, np.floating):
        y = data.astype(np.float64)
    else:
        raise OSError(f"unsupported WAV sample type {data.dtype}")
    if y.ndim == 2:
        if y.shape[1] > 1:
            warnings.warn(f"{path}: downmixing {y.shape[1]} channels to mono", stacklevel=2)
        y = y.mean(axis=1)
    return y, int(rate)


def write_wav(path, rate, y):
    wavfile.write(path, rate, np.asarray(y, dtype=np.float32))


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_trace(path, trace, timings=False):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for r in trace.records:
            writer.writerow([
                r.iteration, r.step, _fmt(r.snr_gap_db), _fmt(r.nll),
                _fmt(r.rel_solution_change), _fmt(r.rel_objective_change),
                _fmt(round(r.wall_ms, 3)) if timings else "",
            ])


def _degradation_dict(spec):
    if spec.degradation is not None:
        d = asdict(spec.degradation)
        d["mode"] = "random" if isinstance(spec.degradation, RandomDrop) else "gaps"
        return d
    if spec.mask_path is not None:
        return {"mode": "mask-file", "path": spec.mask_path}
    return {"mode": "none"}


def run_experiment(spec):
    """Run one restoration and write its artifacts; returns the summary dict."""
    y, rate = read_wav(spec.input)
    L = y.size
    reference = None
    if spec.degradation is not None:
        mask = degrade(L, spec.degradation, sample_rate=rate)
        reference = y
    elif spec.mask_path is not None:
        mask = read_mask(spec.mask_path, L)
    else:
        mask = GapMask.empty(L)
        reference = y
    if spec.reference is not None:
        reference, ref_rate = read_wav(spec.reference)
        if reference.size != L or ref_rate != rate:
            raise ValueError("reference must match the input in length and sample rate")
    if spec.frame_length > L:
        raise ValueError(f"frame length {spec.frame_length} exceeds signal length {L}")

    degraded = np.where(mask.as_boolean(), 0.0, y)
    pair = make_dft_pair(spec.frame_length, spec.n_bins)
    restored, model, trace = run_estimator(degraded, mask, pair, spec.estimator,
                                           ground_truth=reference)

    os.makedirs(spec.out_dir, exist_ok=True)
    stem = os.path.splitext(os.path.basename(spec.input))[0]
    write_wav(os.path.join(spec.out_dir, f"{stem}_restored.wav"), rate, restored)
    write_wav(os.path.join(spec.out_dir, f"{stem}_degraded.wav"), rate, degraded)
    write_mask(os.path.join(spec.out_dir, f"{stem}_mask.txt"), mask)
    write_trace(os.path.join(spec.out_dir, f"{stem}_trace.csv"), trace, spec.timings)

    gap_snr = trace.column("snr_gap_db")
    summary = {
        "input": spec.input,
        "sample_rate": rate,
        "n_samples": L,
        "n_missing": mask.n_missing,
        "gaps": mask.runs() if spec.degradation is None or isinstance(spec.degradation, CompactGaps) else None,
        "iterations": len(trace),
        "final_snr_gap_db": None,
        "peak_snr_gap_db": None,
        "peak_iteration": None,
        "final_snr_db": None,
        "heuristic": trace.meta["heuristic"],
        "max_imag_ratio": trace.meta["max_imag_ratio"],
        "wall_ms": [round(r.wall_ms, 3) for r in trace.records],
        "config": {
            "estimator": spec.estimator.to_dict(),
            "frame_length": spec.frame_length,
            "hop": spec.hop,
            "n_bins": spec.n_bins,
            "window": "sine",
            "transform": pair.case,
            "degradation": _degradation_dict(spec),
        },
        "seed": spec.estimator.seed,
        "versions": {
            "nmfinpaint": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    if summary["heuristic"]:
        summary["note"] = "AM on a non-invertible transform: heuristic spectrum, not a likelihood minimizer"
    if np.any(np.isfinite(gap_snr)):
        summary["final_snr_gap_db"] = float(gap_snr[-1])
        summary["peak_snr_gap_db"] = float(np.nanmax(gap_snr))
        summary["peak_iteration"] = int(np.nanargmax(gap_snr)) + 1
    if reference is not None and np.any(reference):
        summary["final_snr_db"] = snr(reference, restored)
    with open(os.path.join(spec.out_dir, f"{stem}_summary.json"), "w", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def _add_estimator_args(p, algorithms=True):
    if algorithms:
        p.add_argument("--algorithm", choices=ALGORITHMS, default="em-tf")
    p.add_argument("--rank", type=int, default=20, help="number of NMF components")
    p.add_argument("--frame-length", type=int, default=4096)
    p.add_argument("--hop", type=int, default=None, help="must be frame-length / 2")
    p.add_argument("--bins", type=int, default=None, help="frame-length (default) or twice it")
    p.add_argument("--outer-iters", type=int, default=100)
    p.add_argument("--nmf-iters", type=int, default=10)
    p.add_argument("--switch-after", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--track-objective", action="store_true")
    p.add_argument("--allow-heuristic", action="store_true",
                   help="allow AM with a non-invertible transform")
    p.add_argument("--early-stop", type=float, default=None, metavar="TOL",
                   help="stop after 3 iterations with relative change below TOL")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("-v", "--verbose", action="store_true")


def _estimator_config(args, algorithm):
    return EstimatorConfig(
        algorithm=algorithm, rank=args.rank, outer_iters=args.outer_iters,
        nmf_iters=args.nmf_iters, switch_after=args.switch_after, seed=args.seed,
        track_objective=args.track_objective, allow_heuristic=args.allow_heuristic,
        early_stop_tol=args.early_stop,
    )


def build_parser():
    parser = argparse.ArgumentParser(prog="nmf-inpaint", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("restore", help="restore a single WAV file")
    p.add_argument("input")
    deg = p.add_mutually_exclusive_group()
    deg.add_argument("--drop-fraction", type=float, help="drop this fraction of samples at random")
    deg.add_argument("--gaps", type=int, metavar="N", help="insert N compact gaps")
    deg.add_argument("--mask", metavar="FILE", help="file of missing sample indices")
    p.add_argument("--gap-ms", type=float, default=None, metavar="L")
    p.add_argument("--min-context-ms", type=float, default=100.0)
    p.add_argument("--reference", metavar="FILE", help="clean signal for SNR columns")
    p.add_argument("--timings", action="store_true", help="fill the wall_ms trace column")
    _add_estimator_args(p)

    s = sub.add_parser("sweep", help="compact-gap experiment over files and gap lengths")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--algorithms", nargs="+", choices=ALGORITHMS, default=["em-tf", "am"])
    s.add_argument("--gaps", type=int, default=10, metavar="N")
    s.add_argument("--gap-ms", type=float, nargs="+", default=[20, 30, 40, 50, 60, 70, 80])
    s.add_argument("--min-context-ms", type=float, default=100.0)
    _add_estimator_args(s, algorithms=False)
    return parser


def _restore(args):
    degradation = None
    if args.drop_fraction is not None:
        degradation = RandomDrop(args.drop_fraction, args.seed)
    elif args.gaps is not None:
        if args.gap_ms is None:
            raise ValueError("--gaps needs --gap-ms")
        degradation = CompactGaps(args.gaps, args.gap_ms, args.seed, args.min_context_ms)
    spec = ExperimentSpec(
        input=args.input, out_dir=args.out,
        estimator=_estimator_config(args, args.algorithm),
        frame_length=args.frame_length, hop=args.hop, n_bins=args.bins,
        degradation=degradation, mask_path=args.mask, reference=args.reference,
        timings=args.timings,
    )
    summary = run_experiment(spec)
    print(f"restored {summary['n_missing']} samples in {summary['iterations']} iterations; "
          f"gap SNR {summary['final_snr_gap_db']}")


def _sweep(args):
    rows = []
    for path in args.inputs:
        stem = os.path.splitext(os.path.basename(path))[0]
        for gap_ms in args.gap_ms:
            for algorithm in args.algorithms:
                out = os.path.join(args.out, f"{stem}_{gap_ms:g}ms_{algorithm}")
                spec = ExperimentSpec(
                    input=path, out_dir=out,
                    estimator=_estimator_config(args, algorithm),
                    frame_length=args.frame_length, hop=args.hop, n_bins=args.bins,
                    degradation=CompactGaps(args.gaps, gap_ms, args.seed, args.min_context_ms),
                )
                s = run_experiment(spec)
                rows.append((stem, gap_ms, algorithm, s["final_snr_gap_db"],
                             s["peak_snr_gap_db"], s["peak_iteration"]))
                logger.info("%s %g ms %s: %.2f dB", stem, gap_ms, algorithm, s["final_snr_gap_db"])
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "sweep.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["signal", "gap_ms", "algorithm", "final_snr_gap_db", "peak_snr_gap_db",
                    "peak_iteration"])
        w.writerows([[r[0], _fmt(float(r[1])), r[2], _fmt(r[3]), _fmt(r[4]), r[5]] for r in rows])
    with open(os.path.join(args.out, "sweep_mean.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gap_ms", "algorithm", "n_signals", "mean_final_snr_gap_db",
                    "mean_peak_snr_gap_db"])
        for gap_ms in args.gap_ms:
            for algorithm in args.algorithms:
                sel = [r for r in rows if r[1] == gap_ms and r[2] == algorithm]
                w.writerow([_fmt(float(gap_ms)), algorithm, len(sel),
                            _fmt(float(np.mean([r[3] for r in sel]))),
                            _fmt(float(np.mean([r[4] for r in sel])))])
    print(f"wrote {len(rows)} runs to {args.out}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "restore":
            _restore(args)
        else:
            _sweep(args)
    except (NumericalBreakdown, SymmetryViolation) as exc:
        print(f"numerical breakdown: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, InfeasibleSpec) as exc:
        print(f"invalid spec: {exc}", file=sys.stderr)
        return EXIT_SPEC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
