"""Command-line interface: ``rkad test``, ``rkad nullgen`` and ``rkad simstudy``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .comparators import ann_test, centroid_pattern, k_envelope_test, scan_test
from .errors import RkadError, ValidationError
from .io import (
    cached_null,
    dumps_json,
    load_study,
    result_csv,
    result_document,
    save_null,
    study_summary,
    write_text,
)
from .sampling import RngStream
from .simstudy import (
    METHOD_ALIASES,
    METHODS,
    SCENARIOS,
    default_radii,
    load_scenarios,
    make_grid_study,
    run_study,
)
from .statistic import ALTERNATIVES, as_radii, estimate_null, rkad_test

log = logging.getLogger("rkad")

# stream tags for the comparators run by ``rkad test``
_TAG_RK, _TAG_SCAN = 11, 12


def parse_radii(text: str, sa) -> np.ndarray:
    text = text.strip()
    if text == "auto" or text.startswith("auto:"):
        count = 10 if text == "auto" else text.split(":", 1)[1]
        try:
            count = int(count)
        except ValueError:
            raise ValidationError(f"bad radius spec {text!r}; use auto:K or a comma list") from None
        if count < 1:
            raise ValidationError("auto radius count must be at least 1")
        if count == 1:
            return default_radii(sa, 2)[:1]
        return default_radii(sa, count)
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"bad radius list {text!r}") from None
    return as_radii(vals)


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _methods(text: str) -> tuple:
    out = []
    for m in _csv_list(text):
        key = METHOD_ALIASES.get(m.lower())
        if key is None:
            raise ValidationError(f"unknown method {m!r}; valid: {', '.join(METHODS)}")
        out.append(key)
    return tuple(dict.fromkeys(out))


def _alpha(text: str) -> float:
    a = float(text)
    if not 0 < a <= 0.5:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 0.5]")
    return a


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _check_nsim(G: int, alpha: float, alternative: str):
    tails = 2 if alternative == "two-sided" else 1
    if G < tails / alpha - 1:
        raise ValidationError(
            f"--nsim {G} cannot resolve a level-{alpha} {alternative} test; use at least "
            f"{int(np.ceil(tails / alpha - 1))}"
        )


# --------------------------------------------------------------------------
# test
# --------------------------------------------------------------------------


def cmd_test(args) -> int:
    t0 = time.perf_counter()
    _check_nsim(args.nsim, args.alpha, args.alternative)
    methods = _methods(args.methods)
    sa, y = load_study(args.input, args.observed_field, args.contiguity)
    n = int(y.sum())
    N = sa.n_units
    if not 1 <= n < N:
        raise ValidationError(f"need 1 <= n < N observed units, got n={n}, N={N}")
    radii = parse_radii(args.radii, sa)
    log.info("N=%d n=%d total area=%.6g radii=%s", N, n, sa.total_area, np.round(radii, 6))

    results = {}
    if "rkad" in methods:
        null = cached_null(
            args.null_cache, sa, n, radii, args.nsim, args.seed,
            lambda: estimate_null(sa, n, radii, args.nsim, args.seed, workers=args.workers),
        )
        res = rkad_test(sa, y, radii, null, args.alternative, args.alpha)
        results["rkad"] = {
            "alternative": res.alternative,
            "alpha": res.alpha,
            "n": res.n,
            "G": null.G,
            "null_seed": null.seed,
            "radii": list(res.rows()),
        }
    pp = centroid_pattern(sa, y) if ("rk" in methods or "ann" in methods) else None
    if "rk" in methods:
        kr = k_envelope_test(
            pp, radii, args.rk_nsim, RngStream(args.seed, (_TAG_RK,)), args.alternative, args.alpha
        )
        results["rk"] = {
            "alternative": kr.alternative,
            "nsim": args.rk_nsim,
            "radii": [
                {
                    "radius": float(r),
                    "k_hat": float(kr.k_hat[k]),
                    "l_hat": float(kr.l_hat[k]),
                    "envelope_lo": float(kr.lo[k]),
                    "envelope_hi": float(kr.hi[k]),
                    "decision": "reject" if kr.reject[k] else "fail-to-reject",
                }
                for k, r in enumerate(kr.radii)
            ],
        }
    if "ann" in methods:
        ar = ann_test(pp, args.alpha, args.alternative)
        results["ann"] = {
            "alternative": ar.alternative,
            "mean_nn_distance": ar.mean_nn_distance,
            "expected_distance": ar.expected_distance,
            "ratio": ar.ratio,
            "z_score": ar.z_score,
            "p_value": ar.p_value,
            "decision": "reject" if ar.reject else "fail-to-reject",
        }
    if "scan" in methods:
        if args.alternative != "clustering":
            log.warning("the scan statistic only tests for clustering; --alternative ignored")
        sr = scan_test(sa, y, args.scan_nsim, RngStream(args.seed, (_TAG_SCAN,)), args.alpha)
        results["scan"] = {
            "centre_id": sr.centre_id,
            "radius": sr.radius,
            "member_ids": list(sr.member_ids),
            "llr": sr.llr,
            "p_value": sr.p_value,
            "nsim": args.scan_nsim,
            "decision": "reject" if sr.reject else "fail-to-reject",
        }

    config = {
        "input": str(args.input),
        "observed_field": args.observed_field,
        "radii": [float(r) for r in radii],
        "radii_spec": args.radii,
        "alpha": args.alpha,
        "alternative": args.alternative,
        "nsim": args.nsim,
        "rk_nsim": args.rk_nsim,
        "scan_nsim": args.scan_nsim,
        "seed": args.seed,
        "contiguity": args.contiguity,
        "methods": list(methods),
    }
    extra = {"elapsed_seconds": time.perf_counter() - t0} if args.timing else None
    doc = result_document(__version__, config, sa, y, results, extra)
    _emit(doc, args)
    return 0


def _emit(doc, args):
    fmt = args.format
    out = args.out
    if fmt in ("json", "both"):
        text = dumps_json(doc)
        if out is None:
            sys.stdout.write(text)
        else:
            write_text(out if fmt == "json" else _with_suffix(out, ".json"), text)
    if fmt in ("csv", "both"):
        text = result_csv(doc)
        if out is None:
            sys.stdout.write(text)
        else:
            write_text(out if fmt == "csv" else _with_suffix(out, ".csv"), text)


def _with_suffix(path, suffix):
    return Path(path).with_suffix(suffix)


# --------------------------------------------------------------------------
# nullgen
# --------------------------------------------------------------------------


def _study_from_args(args):
    if args.input is not None:
        return load_study(args.input, args.observed_field, args.contiguity)
    if args.study != "grid20":
        raise ValidationError(f"unknown built-in study {args.study!r}; use grid20 or --input")
    return make_grid_study(20, 20), None


def cmd_nullgen(args) -> int:
    sa, y = _study_from_args(args)
    n = args.n if args.n is not None else (None if y is None else int(y.sum()))
    if n is None:
        raise ValidationError("give --n, or --input with --observed-field to take n from the data")
    radii = parse_radii(args.radii, sa)
    null = estimate_null(sa, n, radii, args.nsim, args.seed, workers=args.workers)
    save_null(args.out, null)
    summary = {
        "archive": str(args.out),
        "n": null.n,
        "G": null.G,
        "seed": null.seed,
        "radii": [float(r) for r in null.radii],
        "m_hat": [float(v) for v in null.m_hat],
        "fingerprint": null.fingerprint,
        "study": study_summary(sa, y),
    }
    sys.stdout.write(dumps_json(summary))
    return 0


# --------------------------------------------------------------------------
# simstudy
# --------------------------------------------------------------------------


def cmd_simstudy(args, parser) -> int:
    scenarios = dict(SCENARIOS)
    if args.config:
        scenarios.update(load_scenarios(args.config))
    ids = _csv_list(args.scenarios) if args.scenarios else list(scenarios)
    unknown = [s for s in ids if s not in scenarios]
    if unknown:
        parser.error(f"unknown scenario id(s) {', '.join(unknown)}; valid ids: {', '.join(scenarios)}")
    methods = _methods(args.methods)
    if args.input is not None:
        sa = load_study(args.input, args.observed_field, args.contiguity)[0]
    else:
        sa, _ = _study_from_args(args)
    radii = parse_radii(args.radii, sa)
    table = run_study(
        sa,
        ids,
        methods,
        args.reps,
        scenarios=scenarios,
        radii=radii,
        null_sims=args.nsim,
        rk_nsim=args.rk_nsim,
        scan_nsim=args.scan_nsim,
        alpha=args.alpha,
        seed=args.seed,
        workers=args.workers,
        dynamic=args.generator == "dynamic",
        contiguity=args.generator_contiguity,
        scan_null_mode=args.scan_null,
    )
    text = table.to_csv()
    if args.out is None:
        sys.stdout.write(text)
    else:
        write_text(args.out, text)
    if args.json:
        write_text(args.json, dumps_json(table.to_dict()))
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rkad", description="Ripley's K for areal data")
    p.add_argument("--version", action="version", version=f"rkad {__version__}")
    verbose = argparse.ArgumentParser(add_help=False)
    verbose.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *, nsim_default):
        sp.add_argument("--radii", default="auto:10", help="comma list or auto:K (default auto:10)")
        sp.add_argument("--alpha", type=_alpha, default=0.05)
        sp.add_argument("--nsim", type=_positive_int, default=nsim_default, help="null simulations G")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--workers", type=_positive_int, default=1)
        sp.add_argument("--contiguity", choices=("rook", "queen"), default="rook")

    t = sub.add_parser("test", help="test one observed pattern", parents=[verbose])
    t.add_argument("--input", required=True, help="GeoJSON FeatureCollection")
    t.add_argument("--observed-field", required=True)
    common(t, nsim_default=1000)
    t.add_argument("--alternative", choices=ALTERNATIVES, default="clustering")
    t.add_argument("--methods", default="rkad", help="comma list of rkad,rk,ann,scan")
    t.add_argument("--rk-nsim", type=_positive_int, default=100)
    t.add_argument("--scan-nsim", type=_positive_int, default=999)
    t.add_argument("--null-cache", default=None, help=".npz file or directory for null reuse")
    t.add_argument("--out", default=None, help="output path (default stdout)")
    t.add_argument("--format", choices=("json", "csv", "both"), default="json")
    t.add_argument("--timing", action="store_true", help="record wall-clock time in the output")

    g = sub.add_parser("nullgen", help="build and archive a null distribution", parents=[verbose])
    src = g.add_mutually_exclusive_group()
    src.add_argument("--study", default="grid20")
    src.add_argument("--input", default=None)
    g.add_argument("--observed-field", default=None)
    g.add_argument("--n", type=_positive_int, default=None, help="sample size")
    common(g, nsim_default=1000)
    g.add_argument("--out", required=True, help="archive path (.npz)")

    s = sub.add_parser("simstudy", help="rejection-rate simulation study", parents=[verbose])
    src = s.add_mutually_exclusive_group()
    src.add_argument("--study", default="grid20")
    src.add_argument("--input", default=None)
    s.add_argument("--observed-field", default=None)
    common(s, nsim_default=500)
    s.add_argument("--scenarios", default=None, help="comma list of scenario ids (default all)")
    s.add_argument("--methods", default="rkad", help="comma list of ann,scan,rk,rkad")
    s.add_argument("--reps", type=_positive_int, default=200)
    s.add_argument("--rk-nsim", type=_positive_int, default=100)
    s.add_argument("--scan-nsim", type=_positive_int, default=999)
    s.add_argument(
        "--scan-null", choices=("per-rep", "shared"), default="per-rep",
        help="fresh scan null per replication (exact) or one per sample size (fast)",
    )
    s.add_argument("--config", default=None, help="INI file of extra scenario definitions")
    s.add_argument("--generator", choices=("dynamic", "static"), default="dynamic")
    s.add_argument("--generator-contiguity", choices=("rook", "queen"), default="queen")
    s.add_argument("--out", default=None, help="CSV path (default stdout)")
    s.add_argument("--json", default=None, help="also write the table as JSON")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        if args.command == "test":
            return cmd_test(args)
        if args.command == "nullgen":
            return cmd_nullgen(args)
        return cmd_simstudy(args, parser)
    except RkadError as exc:
        print(f"rkad: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
