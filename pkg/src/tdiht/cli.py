"""Command-line front end.

Subcommands: ``gen-frame``, ``phase``, ``recover`` and ``rip``. Machine
readable results go to stdout, the resolved configuration and logs to
stderr. Exit codes: 0 success, 1 usage error, 2 numerical failure,
3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import io as cio
from .experiments import ALGORITHMS, MriRunSpec, PhaseGridSpec, grid_values, run_mri, run_phase_grid
from .frames import (
    BudgetError,
    drip_exhaustive,
    drip_monte_carlo,
    frame_bounds,
    random_tight_frame,
)
from .linops import DenseMap, RankError, pseudo_inverse, radial_mask
from .recovery import AdaptiveStep, ConstantStep, DivergenceError, HaltingRule
from .seeding import fresh_seed, make_rng
from .signals import NoiseSpec, shepp_logan, snr_db_to_ratio

log = logging.getLogger("tdiht")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage errors with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# flag parsing


def parse_grid(text: str) -> tuple[int, int]:
    """``RxC``: ``R`` rho values by ``C`` delta values."""
    try:
        r, c = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like RxC, got {text!r}") from None
    if r < 1 or c < 1:
        raise argparse.ArgumentTypeError("grid dimensions must be positive")
    return r, c


def parse_step(text: str):
    if text == "adaptive":
        return AdaptiveStep()
    if text.startswith("constant:"):
        try:
            return ConstantStep(float(text.split(":", 1)[1]))
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    raise argparse.ArgumentTypeError(f"step must be 'adaptive' or 'constant:MU', got {text!r}")


def parse_snr(text: str) -> Optional[float]:
    """Return the amplitude ratio ``||M x|| / ||e||``, or None for noiseless."""
    if text == "none":
        return None
    kind, _, value = text.partition(":")
    try:
        v = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad SNR value in {text!r}") from None
    if kind == "ratio":
        ratio = v
    elif kind == "db":
        ratio = snr_db_to_ratio(v)
    else:
        raise argparse.ArgumentTypeError(f"snr must be none, ratio:R or db:R, got {text!r}")
    if not ratio > 0:
        raise argparse.ArgumentTypeError("SNR ratio must be positive")
    return ratio


def _prefixed(text: str, prefix: str) -> Optional[str]:
    return text[len(prefix):] if text.startswith(prefix) else None


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _step_name(rule) -> str:
    return "adaptive" if isinstance(rule, AdaptiveStep) else f"constant:{rule.mu}"


def _announce(config: dict) -> None:
    print(json.dumps(config, sort_keys=True), file=sys.stderr)


def _seed(args) -> int:
    return args.seed if args.seed is not None else fresh_seed()


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_frame(args) -> int:
    if args.p < args.d:
        raise UsageError(f"a frame needs p >= d, got p={args.p}, d={args.d}")
    seed = _seed(args)
    _announce({"command": "gen-frame", "d": args.d, "p": args.p, "seed": seed, "out": str(args.out)})
    pair = random_tight_frame(args.p, args.d, seed)
    omega = pair.omega.matrix
    bounds = frame_bounds(omega)
    cio.write_cosf1(args.out, omega)
    print(json.dumps({"A": bounds.A, "B": bounds.B}))
    return EXIT_OK


def cmd_phase(args) -> int:
    if args.p < args.d:
        raise UsageError(f"p must be at least d, got p={args.p}, d={args.d}")
    seed = _seed(args)
    n_rho, n_delta = args.grid
    spec = PhaseGridSpec(
        d=args.d,
        p=args.p,
        delta_values=tuple(float(v) for v in grid_values(n_delta)),
        rho_values=tuple(float(v) for v in grid_values(n_rho)),
        trials=args.trials,
        algorithm=args.algorithm,
        step_rule=args.step,
        success_tolerance=args.tolerance,
        seed=seed,
    )
    _announce({"command": "phase", "d": args.d, "p": args.p, "grid": f"{n_rho}x{n_delta}",
               "trials": args.trials, "algorithm": args.algorithm, "step": _step_name(args.step),
               "tolerance": args.tolerance, "seed": seed,
               "out": None if args.out is None else str(args.out)})
    text = run_phase_grid(spec).to_csv()
    if args.out is not None:
        cio.atomic_write(args.out, text.encode())
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _load_image(source: str) -> np.ndarray:
    n = _prefixed(source, "phantom:")
    if n is not None:
        try:
            return shepp_logan(int(n))
        except ValueError as exc:
            raise UsageError(f"bad phantom size in {source!r}: {exc}") from None
    return cio.read_pgm(source)


def _load_mask(source: str, shape):
    lines = _prefixed(source, "radial:")
    if lines is not None:
        if shape[0] != shape[1]:
            raise UsageError("radial masks need a square image")
        try:
            return radial_mask(shape[0], int(lines))
        except ValueError as exc:
            raise UsageError(f"bad radial mask {source!r}: {exc}") from None
    return cio.read_pbm(source)


def cmd_recover(args) -> int:
    seed = _seed(args)
    if args.algorithm == "aiht":
        raise UsageError("recover supports tdiht and iht (aiht needs a dense analysis operator)")
    _announce({"command": "recover", "image": args.image, "mask": args.mask,
               "threshold": args.threshold, "snr": args.snr_text, "algorithm": args.algorithm,
               "step": _step_name(args.step), "max_iter": args.max_iter, "seed": seed,
               "out": None if args.out is None else str(args.out),
               "report": None if args.report is None else str(args.report)})
    image = _load_image(args.image)
    mask = _load_mask(args.mask, image.shape)
    if mask.sampled.shape != image.shape:
        raise UsageError(f"mask {mask.sampled.shape} does not match image {image.shape}")
    noise = NoiseSpec() if args.snr is None else NoiseSpec.target_snr(args.snr)
    spec = MriRunSpec(
        image=image,
        mask=mask,
        threshold=args.threshold,
        noise=noise,
        algorithm=args.algorithm,
        step_rule=args.step,
        halting=HaltingRule(max_iterations=args.max_iter),
        seed=seed,
    )
    result = run_mri(spec)
    report = json.dumps(result.report())
    # everything is computed before the first write
    if args.out is not None:
        cio.write_pgm(args.out, result.recon)
    if args.report is not None:
        cio.atomic_write(args.report, (report + "\n").encode())
    print(report)
    return EXIT_OK


def cmd_rip(args) -> int:
    seed = _seed(args)
    omega = cio.read_cosf1(args.frame)
    if np.iscomplexobj(omega):
        raise UsageError("frame must be real")
    p, d = omega.shape
    if not 0 <= args.k <= p:
        raise UsageError(f"k must lie in [0, {p}], got {args.k}")
    _announce({"command": "rip", "frame": str(args.frame), "m": args.m, "k": args.k,
               "method": args.method, "trials": args.trials, "seed": seed})
    if args.m == "identity":
        m_map = DenseMap(np.eye(d))
    else:
        try:
            rows = int(args.m)
        except ValueError:
            raise UsageError(f"--m must be a row count or 'identity', got {args.m!r}") from None
        if rows < 1:
            raise UsageError("--m must be positive")
        m_map = DenseMap(make_rng(seed).standard_normal((rows, d)) / np.sqrt(rows))
    dictionary = pseudo_inverse(omega)
    if args.method == "brute":
        est = drip_exhaustive(m_map, dictionary, args.k)
    else:
        est = drip_monte_carlo(m_map, dictionary, args.k, args.trials, seed)
    print(est.to_json())
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tdiht", description="Cosparse recovery experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-frame", help="write a random tight frame as COSF1")
    g.add_argument("--d", type=_positive_int, required=True)
    g.add_argument("--p", type=_positive_int, required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", type=Path, required=True)
    g.set_defaults(func=cmd_gen_frame)

    ph = sub.add_parser("phase", help="phase-transition sweep, CSV output")
    ph.add_argument("--d", type=_positive_int, default=120)
    ph.add_argument("--p", type=_positive_int, default=144)
    ph.add_argument("--grid", type=parse_grid, default=(20, 20))
    ph.add_argument("--trials", type=_positive_int, default=50)
    ph.add_argument("--algorithm", choices=ALGORITHMS, default="tdiht")
    ph.add_argument("--step", type=parse_step, default=AdaptiveStep())
    ph.add_argument("--tolerance", type=float, default=1e-6)
    ph.add_argument("--seed", type=int)
    ph.add_argument("--out", type=Path)
    ph.set_defaults(func=cmd_phase)

    r = sub.add_parser("recover", help="Fourier image recovery")
    r.add_argument("--image", required=True, help="PGM path or phantom:N")
    r.add_argument("--mask", required=True, help="PBM path or radial:L")
    r.add_argument("--threshold", type=float, default=0.01)
    r.add_argument("--snr", default="none", help="none, ratio:R or db:R")
    r.add_argument("--algorithm", choices=ALGORITHMS, default="tdiht")
    r.add_argument("--step", type=parse_step, default=AdaptiveStep())
    r.add_argument("--max-iter", type=_positive_int, default=1000)
    r.add_argument("--seed", type=int)
    r.add_argument("--out", type=Path)
    r.add_argument("--report", type=Path)
    r.set_defaults(func=cmd_recover)

    rp = sub.add_parser("rip", help="D-RIP estimate, JSON output")
    rp.add_argument("--frame", type=Path, required=True)
    rp.add_argument("--m", required=True, help="row count of a Gaussian M, or identity")
    rp.add_argument("--k", type=int, required=True)
    rp.add_argument("--method", choices=("brute", "mc"), default="mc")
    rp.add_argument("--trials", type=_positive_int, default=10_000)
    rp.add_argument("--seed", type=int)
    rp.set_defaults(func=cmd_rip)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr,
                        format="%(name)s: %(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "recover":
        args.snr_text = args.snr
        try:
            args.snr = parse_snr(args.snr)
        except argparse.ArgumentTypeError as exc:
            parser.error(str(exc))
    try:
        return args.func(args)
    except (UsageError, BudgetError) as exc:
        print(f"tdiht {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, RankError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"tdiht {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, cio.FormatError) as exc:
        print(f"tdiht {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"tdiht {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
