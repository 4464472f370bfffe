"""Command-line driver.

Exit codes: 0 on success, 1 on a usage or input error, 2 when a numerical
routine fails (the error class name is printed).  Set ``AIRY_LOG=info`` or
``AIRY_LOG=debug`` for diagnostics on stderr.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys

import jsonschema
import numpy as np

from . import __version__
from .airy_core import resolution_criteria
from .errors import BadShape, NumericalError
from .files import (
    atomic_write_bytes,
    format_csv,
    read_model,
    read_photons,
    write_json,
    write_photons,
    write_sidecar,
)

log = logging.getLogger("airy_superres")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad input; route it through our codes
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n\n{self.format_usage()}")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from exc


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}") from exc


def parse_grid(text):
    """``a:b:step`` to the values ``a, a+step, ...`` up to and including ``b``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"grid must look like a:b:step, got {text!r}")
    try:
        a, b, step = (float(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from exc
    if step <= 0 or b < a:
        raise argparse.ArgumentTypeError("grid needs step > 0 and b >= a")
    count = int(math.floor((b - a) / step + 1e-9)) + 1
    return [round(a + i * step, 12) for i in range(count)]


def _parse_freqs(text):
    out = []
    for pair in text.split(";"):
        if not pair.strip():
            continue
        vals = _float_list(pair)
        if len(vals) != 2:
            raise argparse.ArgumentTypeError(f"frequency must be 'wx,wy', got {pair!r}")
        out.append(vals)
    if not out:
        raise argparse.ArgumentTypeError("no frequencies given")
    return np.array(out)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=_positive_int, default=None,
                        help="cap on worker threads (default: available cores)")

    p = _Parser(prog="airy-superres", description="Super-resolution of Airy disks.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("simulate", parents=[common], help="draw photons from a model")
    s.add_argument("--model", required=True)
    s.add_argument("--n", type=_positive_int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--granularity", type=float, default=0.0)
    s.add_argument("--poisson", action="store_true")
    s.add_argument("--out", required=True)

    o = sub.add_parser("otf", parents=[common], help="empirical OTF of a photon file")
    o.add_argument("--photons", required=True)
    o.add_argument("--freqs", type=_parse_freqs, required=True, help="'wx,wy;wx,wy;...'")
    o.add_argument("--sigma", type=float, default=None)
    o.add_argument("--beta", type=float, default=0.05)
    o.add_argument("--deconvolve", action="store_true")
    o.add_argument("--out", required=True)

    learn = sub.add_parser("learn", help="learn a superposition").add_subparsers(
        dest="method", parser_class=_Parser)
    learn.required = True
    for name in ("mpm", "tensor"):
        lp = learn.add_parser(name, parents=[common])
        src = lp.add_mutually_exclusive_group(required=True)
        src.add_argument("--photons")
        src.add_argument("--model", help="exact oracle on a model, plus --eta noise")
        lp.add_argument("--k", type=_positive_int, required=True)
        lp.add_argument("--eps1", type=float, default=None)
        lp.add_argument("--eps2", type=float, default=None)
        lp.add_argument("--delta", type=float, default=0.1)
        lp.add_argument("--seed", type=int, default=None,
                        help="defaults to the seed recorded with the photons")
        lp.add_argument("--sigma", type=float, default=None)
        lp.add_argument("--eta", type=float, default=0.0)
        lp.add_argument("--beta", type=float, default=0.05)
        lp.add_argument("--out", required=True)
        if name == "mpm":
            lp.add_argument("--separation", type=float, default=None)
            lp.add_argument("--radius", type=float, default=None)
            lp.add_argument("--rotation", choices=["angle", "chord"], default="angle")
            lp.add_argument("--step", default="wide", help="wide, narrow or a number")
            lp.add_argument("--no-adaptive", action="store_true")
        else:
            lp.add_argument("--separation", type=float, required=True)
            lp.add_argument("--m", type=_positive_int, default=None)

    lb = sub.add_parser("lowerbound", help="hardness instances").add_subparsers(
        dest="family", parser_class=_Parser)
    lb.required = True
    la = lb.add_parser("lattice", parents=[common])
    la.add_argument("--ell", type=int, required=True)
    la.add_argument("--r", type=int, required=True)
    la.add_argument("--epsilon", type=float, default=None)
    la.add_argument("--m", type=int, default=5)
    la.add_argument("--literal-alpha", action="store_true")
    la.add_argument("--sup-grid", type=int, default=512, help="0 skips the sup computation")
    la.add_argument("--out", required=True)
    mm = lb.add_parser("moment-match", parents=[common])
    mm.add_argument("--k", type=int, required=True)
    mm.add_argument("--delta", type=float, required=True, help="separation in units of abbe")
    mm.add_argument("--sigma", type=float, default=1.0 / math.pi)
    mm.add_argument("--out", required=True)

    tv = sub.add_parser("tv", help="total-variation estimates").add_subparsers(
        dest="action", parser_class=_Parser)
    tv.required = True
    sw = tv.add_parser("sweep", parents=[common])
    sw.add_argument("--family", choices=["moment-match"], default="moment-match")
    sw.add_argument("--k", type=_int_list, required=True)
    sw.add_argument("--delta-grid", type=parse_grid, required=True,
                    help="a:b:step in units of abbe")
    sw.add_argument("--n", type=_positive_int, required=True)
    sw.add_argument("--seed", type=int, required=True)
    sw.add_argument("--sigma", type=float, default=1.0 / math.pi)
    sw.add_argument("--out", required=True)

    c = sub.add_parser("criteria", parents=[common], help="classical resolution limits")
    c.add_argument("--sigma", type=float, required=True)
    c.add_argument("--out", default=None)
    return p


def _configure(args):
    level = os.environ.get("AIRY_LOG", "").lower()
    if level in ("debug", "info"):
        logging.basicConfig(
            level=logging.DEBUG if level == "debug" else logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
        )
    threads = getattr(args, "threads", None)
    if threads:
        import numba

        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    return threads


def _cmd_simulate(args, workers):
    from .sampling import sample

    model = read_model(args.model)
    batch = sample(model, args.n, args.seed, granularity=args.granularity,
                   poisson=args.poisson, workers=workers)
    write_photons(args.out, batch)
    log.info("wrote %d photons to %s", len(batch.points), args.out)


def _cmd_otf(args, workers):
    from .otf_oracle import deconvolve, estimate_otf

    batch = read_photons(args.photons, sigma=args.sigma)
    est = estimate_otf(batch, args.freqs, beta=args.beta)
    header = ["wx", "wy", "re", "im", "eta"]
    cols = [est.frequencies[:, 0], est.frequencies[:, 1], est.values.real,
            est.values.imag, est.eta_per_frequency]
    if args.deconvolve:
        dec = deconvolve(est, batch.sigma)
        header += ["sum_re", "sum_im", "sum_accuracy"]
        cols += [dec.values.real, dec.values.imag, dec.accuracy]
    atomic_write_bytes(args.out, format_csv(header, zip(*cols)))
    write_sidecar(args.out, {"photons": args.photons, "n": est.n_used, "beta": args.beta})


def _learn_source(args):
    if args.photons:
        batch = read_photons(args.photons, sigma=args.sigma)
        seed = args.seed if args.seed is not None else batch.meta.get("seed")
        return batch, seed
    return read_model(args.model), args.seed


def _cmd_learn(args, workers):
    source, seed = _learn_source(args)
    if seed is None:
        raise UsageError("--seed is required (no seed recorded with the input)")
    if args.method == "mpm":
        from .mpm_learner import learn_airy_disks

        if args.eps1 is None or args.eps2 is None:
            raise UsageError("learn mpm needs --eps1 and --eps2")
        step = args.step if args.step in ("wide", "narrow") else float(args.step)
        est = learn_airy_disks(
            source, args.k, args.eps1, args.eps2, args.delta, sigma=args.sigma,
            separation=args.separation, seed=seed, radius=args.radius, eta=args.eta,
            beta=args.beta, rotation=args.rotation, step=step,
            adaptive=not args.no_adaptive,
        )
    else:
        from .tensor_learner import tensor_resolve

        est = tensor_resolve(
            source, args.k, args.separation, eps1=args.eps1, eps2=args.eps2,
            delta=args.delta, sigma=args.sigma, m=args.m, seed=seed, eta=args.eta,
            beta=args.beta,
        )
    write_json(args.out, est.to_dict(), "estimate")
    write_sidecar(args.out, {"method": args.method, "source": args.photons or args.model})


def _cmd_lowerbound(args, workers):
    from .lowerbound import exp_sum_sup, lattice_instance, moment_match_instance

    if args.family == "lattice":
        inst = lattice_instance(args.ell, args.r, epsilon=args.epsilon, m=args.m,
                                literal_alpha=args.literal_alpha)
        body = {
            "family": "lattice",
            "rho": inst.rho.to_dict(),
            "rho_prime": inst.rho_prime.to_dict(),
            "u": inst.u,
            "params": {"ell": inst.ell, "r": inst.r, "k": inst.k, "epsilon": inst.epsilon,
                       "m": inst.m, "sigma": inst.sigma, "delta": inst.delta,
                       "literal_alpha": args.literal_alpha},
        }
        if args.sup_grid:
            body["exp_sum_sup"] = exp_sum_sup(inst, args.sup_grid)
            body["params"]["sup_grid"] = args.sup_grid
    else:
        abbe = math.pi * args.sigma
        inst = moment_match_instance(args.k, args.delta * abbe, args.sigma)
        body = {
            "family": "moment-match",
            "rho": inst.rho.to_dict(),
            "rho_prime": inst.rho_prime.to_dict(),
            "params": {"k": inst.k, "delta": inst.delta, "delta_abbe": args.delta,
                       "sigma": args.sigma},
        }
    write_json(args.out, body, "instance")


def _cmd_tv(args, workers):
    from .lowerbound import tv_sweep

    abbe = math.pi * args.sigma
    rows = tv_sweep(args.family, args.k, [d * abbe for d in args.delta_grid], args.n,
                    args.seed, sigma=args.sigma, workers=workers)
    # report delta in the same abbe units the grid was given in
    for row, d in zip(rows, [d for _ in args.k for d in args.delta_grid]):
        row["delta"] = d
    data = format_csv(["delta", "k", "tv", "std_error", "n"],
                      [(r["delta"], r["k"], r["tv"], r["std_error"], r["n"]) for r in rows])
    atomic_write_bytes(args.out, data)
    write_sidecar(args.out, {"family": args.family, "k": args.k, "n": args.n,
                             "seed": args.seed, "sigma": args.sigma, "delta_units": "abbe"})


def _cmd_criteria(args, workers):
    body = {"sigma": args.sigma, **resolution_criteria(args.sigma).as_dict()}
    if args.out:
        write_json(args.out, body, "criteria")
    else:
        from .files import dumps_json, validate

        validate(body, "criteria")
        sys.stdout.write(dumps_json(body))


_COMMANDS = {
    "simulate": _cmd_simulate,
    "otf": _cmd_otf,
    "learn": _cmd_learn,
    "lowerbound": _cmd_lowerbound,
    "tv": _cmd_tv,
    "criteria": _cmd_criteria,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        workers = _configure(args)
        _COMMANDS[args.command](args, workers)
    except SystemExit as exc:
        # --help and --version
        return exc.code if isinstance(exc.code, int) else 0
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return 1
    except BadShape as exc:
        # malformed instance parameters come from the command line
        sys.stderr.write(f"usage error: {type(exc).__name__}: {exc}\n")
        return 1
    except NumericalError as exc:
        sys.stderr.write(f"numerical failure: {type(exc).__name__}: {exc}\n")
        return 2
    except jsonschema.ValidationError as exc:
        sys.stderr.write(f"usage error: invalid JSON input: {exc.message}\n")
        return 1
    except (OSError, ValueError, KeyError) as exc:
        # unreadable inputs and out-of-range parameters count as usage errors
        sys.stderr.write(f"usage error: {type(exc).__name__}: {exc}\n")
        return 1
    return 0


def main():
    sys.exit(run())


__all__ = ["build_parser", "main", "parse_grid", "run"]
