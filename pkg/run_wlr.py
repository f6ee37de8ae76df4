"""Command-line entry point: synthetic video, background decomposition, GHS baseline, metrics, raw WLR solve.

Exit codes: 0 success, 1 usage or input error, 2 solver did not converge.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from runnable_config import RunConfig, ensure_output_dir
from wlr.background import batch_background, incremental_background
from wlr.errors import UsageError, WlrError
from wlr.frames import FrameSequence, read_frames, write_frames
from wlr.ghs import ghs_solve
from wlr.metrics import MetricsReport, auc, evaluate_frames, roc
from wlr.solver import BlockWeight, solve
from wlr.synth import load_spec, synth_video

logger = logging.getLogger("run_wlr")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 2


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that raises UsageError instead of exiting."""

    def error(self, message):
        raise UsageError(message)


def build_parser() -> CliParser:
    parser = CliParser(prog="run_wlr", description="Weighted low-rank background modeling")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--config", default=None, help="key = value file supplying any flag")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic video with ground truth")
    synth.add_argument("--spec", required=True)
    synth.add_argument("--out", required=True)
    synth.add_argument("--seed", type=int, default=None, help="override the spec seed")

    dec = sub.add_parser("decompose", help="batch or incremental background estimation")
    dec.add_argument("--mode", choices=["batch", "incremental"], default=None)
    dec.add_argument("--in", dest="input", required=True)
    dec.add_argument("--out", required=True)
    dec.add_argument("--p", type=int, default=None)
    dec.add_argument("--tau", type=float, default=None)
    dec.add_argument("--alpha", type=float, default=None)
    dec.add_argument("--beta", type=float, default=None)
    dec.add_argument("--eps", type=float, default=None)
    dec.add_argument("--eps1", type=float, default=None, help="foreground threshold (default: Otsu)")
    dec.add_argument("--max-iter", type=int, default=None)
    dec.add_argument("--i1", type=int, default=None)
    dec.add_argument("--i2", type=int, default=None)
    dec.add_argument("--ir", type=int, default=None)
    dec.add_argument("--kmax", type=int, default=None)
    dec.add_argument("--seed", type=int, default=None)
    dec.add_argument("--init-rank", type=int, default=None)
    dec.add_argument("--prior-source", choices=["data", "background"], default=None)
    dec.add_argument("--solver", choices=["wlr", "ghs"], default=None)
    dec.add_argument("--workers", type=int, default=None)
    dec.add_argument("--raw-foreground", action="store_true", default=None)

    ghs = sub.add_parser("ghs", help="closed-form constrained baseline")
    ghs.add_argument("--in", dest="input", required=True)
    ghs.add_argument("--k", type=int, required=True)
    ghs.add_argument("--r", type=int, required=True)
    ghs.add_argument("--out", required=True)

    met = sub.add_parser("metrics", help="PSNR / MSSIM / MSSSIM / ROC report")
    met.add_argument("--truth", required=True, help="true background frames")
    met.add_argument("--result", required=True, help="decompose output directory")
    met.add_argument("--masks", default=None, help="ground-truth foreground masks")
    met.add_argument("--out", required=True)
    met.add_argument("--window", type=int, choices=[11, 9], default=None)

    slv = sub.add_parser("solve", help="raw WLR on a numeric CSV matrix")
    slv.add_argument("--matrix", required=True)
    slv.add_argument("--k", type=int, required=True)
    slv.add_argument("--r", type=int, required=True)
    slv.add_argument("--alpha", type=float, default=None)
    slv.add_argument("--beta", type=float, default=None)
    slv.add_argument("--eps", type=float, default=None)
    slv.add_argument("--max-iter", type=int, default=None)
    slv.add_argument("--seed", type=int, default=None)
    slv.add_argument("--trace", required=True)
    slv.add_argument("--out", default=None, help="write the rank-r approximation as CSV")
    return parser


def _require_dir(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {path}")
    return p


def cmd_synth(args, config: RunConfig) -> int:
    spec = load_spec(_require_dir(args.spec, "spec file"))
    seed = config.resolve({"seed": args.seed}).get("seed")
    if seed is not None:
        spec = spec.model_copy(update={"seed": seed})
    A, background, masks = synth_video(spec)
    out = ensure_output_dir(args.out)
    write_frames(A, out / "frames")
    write_frames(background, out / "background")
    write_frames(FrameSequence(masks.height, masks.width, masks.data * 255.0), out / "masks")
    return EXIT_OK


def cmd_decompose(args, config: RunConfig) -> int:
    flags = {
        "mode": args.mode, "p": args.p, "tau": args.tau, "alpha": args.alpha, "beta": args.beta,
        "eps": args.eps, "eps1": args.eps1, "max_iter": args.max_iter, "i1": args.i1, "i2": args.i2,
        "ir": args.ir, "k_max": args.kmax, "seed": args.seed, "init_rank": args.init_rank,
        "prior_source": args.prior_source, "solver": args.solver, "workers": args.workers,
        "raw_foreground": args.raw_foreground,
    }
    settings = config.resolve(flags)
    params = config.bg_params(flags)
    mode = settings.get("mode", "batch")
    if mode not in ("batch", "incremental"):
        raise UsageError(f"unknown mode '{mode}'")
    seq = read_frames(_require_dir(args.input, "input frames"))
    meta = (seq.height, seq.width)
    if mode == "batch":
        result = batch_background(seq.data, params, frames_meta=meta)
    else:
        result = incremental_background(seq.data, params, frames_meta=meta)

    out = ensure_output_dir(args.out)
    write_frames(FrameSequence(seq.height, seq.width, np.clip(result.B, 0, 255)), out / "background")
    denoised = np.abs(result.denoised_foreground(params.eps1))
    write_frames(FrameSequence(seq.height, seq.width, np.clip(denoised, 0, 255)), out / "foreground")
    if settings.get("raw_foreground"):
        write_frames(FrameSequence(seq.height, seq.width, np.clip(np.abs(result.F), 0, 255)), out / "raw_foreground")
    result.diagnostics_frame().to_csv(out / "diagnostics.csv", index=False)
    logger.info(f"Decomposition written to {out} (converged={result.converged})")
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_ghs(args, config: RunConfig) -> int:
    seq = read_frames(_require_dir(args.input, "input frames"))
    if not 1 <= args.k < seq.n_frames:
        raise UsageError(f"--k must be between 1 and {seq.n_frames - 1}, got {args.k}")
    A1, A2 = seq.data[:, :args.k], seq.data[:, args.k:]
    result = ghs_solve(A1, A2, args.r)
    background = np.hstack([A1, result.x2])
    out = ensure_output_dir(args.out)
    write_frames(FrameSequence(seq.height, seq.width, np.clip(background, 0, 255)), out / "background")
    return EXIT_OK


def _result_dirs(result: Path):
    background = result / "background"
    foreground = result / "foreground"
    if background.is_dir():
        return background, foreground if foreground.is_dir() else None
    return result, None


def cmd_metrics(args, config: RunConfig) -> int:
    window = config.resolve({"window": args.window}).get("window", 11)
    if window not in (9, 11):
        raise UsageError(f"window must be 11 or 9, got {window}")
    truth = read_frames(_require_dir(args.truth, "truth frames"))
    bg_dir, fg_dir = _result_dirs(_require_dir(args.result, "result directory"))
    recovered = read_frames(bg_dir)
    if (recovered.height, recovered.width, recovered.n_frames) != (truth.height, truth.width, truth.n_frames):
        raise UsageError("result frames do not match truth frames in size or count")

    reports = {"background": MetricsReport(per_frame=evaluate_frames(truth.frames(), recovered.frames(), window))}
    if args.masks:
        masks = read_frames(_require_dir(args.masks, "mask frames"))
        gt = (masks.data > 127).astype(np.float64)
        if fg_dir is None:
            raise UsageError(f"--masks given but {args.result} has no foreground directory")
        foreground = read_frames(fg_dir)
        if foreground.data.shape != gt.shape:
            raise UsageError("foreground frames do not match mask frames in size or count")
        # Thresholded foreground (any nonzero pixel) against the masks, both on the 0/255 scale.
        detected = FrameSequence(masks.height, masks.width, (foreground.data > 0) * 255.0)
        expected = FrameSequence(masks.height, masks.width, gt * 255.0)
        per_frame = evaluate_frames(expected.frames(), detected.frames(), window)
        reports["foreground"] = MetricsReport(per_frame=per_frame, roc=roc(gt, foreground.data))

    rows = []
    for target, report in reports.items():
        frame_rows = report.per_frame.assign(target=target, auc=None)
        rows.append(frame_rows)
        aggregate = report.aggregate()
        rows.append(pd.DataFrame([{"target": target, "frame": "aggregate", **aggregate}]))
    table = pd.concat(rows, ignore_index=True)[["target", "frame", "psnr", "mssim", "msssim", "auc"]]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out, index=False, na_rep="undefined")
    if "foreground" in reports:
        curve = reports["foreground"].roc
        curve.to_frame().to_csv(out.with_name(f"{out.stem}_roc.csv"), index=False, na_rep="undefined")
        logger.info(f"Foreground AUC: {auc(curve)}")
    logger.info(f"Metrics report written to {out}")
    return EXIT_OK


def cmd_solve(args, config: RunConfig) -> int:
    settings = config.resolve({"alpha": args.alpha, "beta": args.beta, "eps": args.eps,
                               "max_iter": args.max_iter, "seed": args.seed})
    alpha = settings.get("alpha", 500.0)
    beta = settings.get("beta", 1000.0)
    matrix_path = _require_dir(args.matrix, "matrix file")
    try:
        A = pd.read_csv(matrix_path, header=None).to_numpy(dtype=np.float64)
    except (ValueError, pd.errors.ParserError) as e:
        raise UsageError(f"cannot read numeric matrix from {matrix_path}: {e}")
    if not 1 <= args.k < A.shape[1]:
        raise UsageError(f"--k must be between 1 and {A.shape[1] - 1}, got {args.k}")
    rng = np.random.default_rng(settings.get("seed", 0))
    try:
        W = BlockWeight.uniform(A.shape[0], args.k, alpha, beta, rng)
    except WlrError as e:
        raise UsageError(str(e))
    state, report = solve(A[:, :args.k], A[:, args.k:], W, args.r, eps=settings.get("eps", 1e-7),
                          max_iter=settings.get("max_iter", 500))
    trace = Path(args.trace)
    trace.parent.mkdir(parents=True, exist_ok=True)
    report.trace_frame().to_csv(trace, index=False)
    if args.out:
        pd.DataFrame(state.approximation()).to_csv(args.out, header=False, index=False)
    logger.info(f"Final objective {report.final_objective:.6g} after {report.iterations} iterations")
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


COMMANDS = {
    "synth": cmd_synth,
    "decompose": cmd_decompose,
    "ghs": cmd_ghs,
    "metrics": cmd_metrics,
    "solve": cmd_solve,
}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        config = RunConfig(args.config)
        level = (args.log_level or config.resolve({}).get("log_level") or "INFO").upper()
        if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise UsageError(f"unknown log level '{level}'")
        logging.basicConfig(
            level=getattr(logging, level),
            format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        )
        logging.getLogger().setLevel(getattr(logging, level))
        return COMMANDS[args.command](args, config)
    except UsageError as e:
        logger.error(f"Usage error: {e}")
        return EXIT_USAGE
    except WlrError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
