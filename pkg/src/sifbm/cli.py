"""Command-line front end.

Subcommands: gram, sample, psd-probe, flow, holder, suite.  Machine output
goes to files in --out-dir (CSV for arrays, JSON for reports and metadata);
stdout carries one-line human summaries only.  Every artifact embeds the
package version, the command, the resolved configuration and the seed, and
re-running a command with the same inputs reproduces its outputs byte for
byte.

--threads is accepted for interface compatibility and validated, but it is
deliberately excluded from the recorded configuration and has no effect on
results: there is no Python-level parallelism, and numerical results do not
depend on the flag.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .covariance import (
    Hurst,
    gram,
    psd_check,
    psd_counterexample_search,
)
from .flows import (
    Flow,
    holder_estimate,
    invert_time_change,
    load_flow,
    projected_cov,
    sample_along_flow,
)
from .ioutil import dump_json, fmt_float
from .property_suite import DEFAULT_CONFIG, SuiteConfigError, run_suite
from .sampler import NotPositiveSemidefiniteError, sample
from .set_families import SchemaError, dump_family, family_to_json, load_family

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _metadata(command: str, config: dict, seed) -> dict:
    return {
        "version": __version__,
        "command": command,
        "config": config,
        "seed": seed,
    }


def _hurst(args) -> Hurst:
    return Hurst(args.hurst, probing=getattr(args, "probing", False))


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gram(args) -> int:
    family = load_family(args.family)
    h = _hurst(args)
    g = gram(family, h, args.kernel)
    report = psd_check(g)
    out = _out_dir(args)
    g.to_csv(out / "gram.csv")
    config = {
        "family": str(args.family),
        "kernel": args.kernel,
        "hurst": h.value,
        "probing": h.probing,
    }
    dump_json(
        {
            **_metadata("gram", config, None),
            "family_hash": g.family_hash,
            "size": g.size,
            "psd": {
                "psd": report.psd,
                "min_eigenvalue": report.min_eigenvalue,
                "tolerance": report.tolerance,
                "pivoted_cholesky_ok": report.pivoted_cholesky_ok,
                "rank": report.rank,
            },
        },
        out / "gram_report.json",
    )
    print(
        f"gram: {g.size}x{g.size} {args.kernel} H={fmt_float(h.value)} "
        f"psd={report.psd} min_eig={report.min_eigenvalue:.3e} -> {out / 'gram.csv'}"
    )
    return EXIT_OK


def cmd_sample(args) -> int:
    family = load_family(args.family)
    h = _hurst(args)
    g = gram(family, h, args.kernel)
    ensemble = sample(g, args.replicates, args.seed)
    out = _out_dir(args)
    ensemble.to_csv(out / "ensemble.csv")
    config = {
        "family": str(args.family),
        "kernel": args.kernel,
        "hurst": h.value,
        "probing": h.probing,
        "replicates": args.replicates,
    }
    dump_json(
        {**_metadata("sample", config, args.seed), **ensemble.metadata()},
        out / "ensemble_meta.json",
    )
    print(
        f"sample: {ensemble.replicate_count} replicates x {ensemble.size} sets "
        f"(jitter {fmt_float(ensemble.jitter)}) -> {out / 'ensemble.csv'}"
    )
    return EXIT_OK


def cmd_psd_probe(args) -> int:
    h = Hurst(args.hurst, probing=True)
    witness = psd_counterexample_search(
        h,
        dim=args.dim,
        family_size_max=args.family_size,
        trials=args.budget,
        seed=args.seed,
    )
    out = _out_dir(args)
    config = {
        "hurst": h.value,
        "dim": args.dim,
        "family_size_max": args.family_size,
        "budget": args.budget,
    }
    report = _metadata("psd-probe", config, args.seed)
    if witness is None:
        report["found"] = False
        dump_json(report, out / "probe_report.json")
        print(f"psd-probe: none found in {args.budget} trials (H={fmt_float(h.value)})")
        return EXIT_OK
    dump_family(witness.family, out / "witness_family.json")
    report.update(
        {
            "found": True,
            "trial_index": witness.trial_index,
            "min_eigenvalue": witness.min_eigenvalue,
            "max_diagonal": witness.max_diagonal,
            "witness_family": family_to_json(witness.family),
        }
    )
    dump_json(report, out / "probe_report.json")
    print(
        f"psd-probe: witness of size {len(witness.family)} at trial "
        f"{witness.trial_index}, min_eig={witness.min_eigenvalue:.3e} "
        f"-> {out / 'witness_family.json'}"
    )
    return EXIT_OK


def _write_flow_csv(path, ts, thetas, values) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        reps = values.shape[0]
        fh.write("t,theta," + ",".join(f"rep{r}" for r in range(reps)) + "\n")
        for i, (t, th) in enumerate(zip(ts, thetas)):
            row = [fmt_float(t), fmt_float(th)] + [fmt_float(values[r, i]) for r in range(reps)]
            fh.write(",".join(row) + "\n")


def cmd_flow(args) -> int:
    flow = load_flow(args.flow)
    h = _hurst(args)
    result = sample_along_flow(flow, args.grid, h, args.replicates, args.seed)
    # Exact identity check: the family Gram against the closed projected form.
    model = np.array(
        [
            [projected_cov(flow, s, t, h) for t in result.ts]
            for s in result.ts
        ]
    )
    residual = float(np.max(np.abs(result.gram.entries - model)))
    out = _out_dir(args)
    _write_flow_csv(out / "flow_samples.csv", result.ts, result.thetas, result.ensemble.values)
    config = {
        "flow": str(args.flow),
        "hurst": h.value,
        "probing": h.probing,
        "grid": args.grid,
        "replicates": args.replicates,
    }
    dump_json(
        {
            **_metadata("flow", config, args.seed),
            "covflow_max_abs_residual": residual,
            "theta_range": [float(result.thetas[0]), float(result.thetas[-1])],
            "family_hash": result.gram.family_hash,
            "jitter": result.ensemble.jitter,
        },
        out / "flow_report.json",
    )
    print(
        f"flow: {args.grid} points, covflow residual {residual:.3e} "
        f"-> {out / 'flow_samples.csv'}"
    )
    return EXIT_OK


def _read_flow_csv(path) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("t,"):
                continue
            rows.append([float(x) for x in line.split(",")])
    if not rows:
        raise SchemaError(f"no data rows in {path}")
    data = np.asarray(rows)
    if data.shape[1] < 3:
        raise SchemaError("flow CSV needs t, theta and at least one replicate column")
    return data[:, 2:].T  # (replicates, grid)


def cmd_holder(args) -> int:
    out = _out_dir(args)
    if (args.input is None) == (args.flow is None):
        print("holder: pass exactly one of --input or --flow", file=sys.stderr)
        return EXIT_CONFIG
    if args.input is not None:
        values = _read_flow_csv(args.input)
        config = {"input": str(args.input)}
        seed = None
    else:
        if args.hurst is None:
            print("holder: --flow requires --hurst", file=sys.stderr)
            return EXIT_CONFIG
        flow = load_flow(args.flow)
        h = _hurst(args)
        # Sample on the theta-uniform grid so the estimate targets the index.
        ts = invert_time_change(flow, args.grid)
        result = sample_along_flow(flow, ts, h, args.replicates, args.seed)
        values = result.ensemble.values
        config = {
            "flow": str(args.flow),
            "hurst": h.value,
            "probing": h.probing,
            "grid": args.grid,
            "replicates": args.replicates,
        }
        seed = args.seed
    est = holder_estimate(values)
    dump_json(
        {
            **_metadata("holder", config, seed),
            "exponent": est.exponent,
            "in_fbm_regime": est.in_fbm_regime,
            "note": est.note,
            "scales": list(est.scales),
            "log_moments": list(est.log_moments),
        },
        out / "holder.json",
    )
    regime = "" if est.in_fbm_regime else f" ({est.note})"
    print(f"holder: exponent {est.exponent:.4f}{regime} -> {out / 'holder.json'}")
    return EXIT_OK


def cmd_suite(args) -> int:
    if args.config is not None:
        with open(args.config, "r", encoding="utf-8") as fh:
            try:
                config = json.load(fh)
            except json.JSONDecodeError as exc:
                print(f"suite: config is not valid JSON: {exc}", file=sys.stderr)
                return EXIT_CONFIG
    else:
        config = dict(DEFAULT_CONFIG)
        config["seed"] = args.seed
    try:
        result = run_suite(config)
    except SuiteConfigError as exc:
        print(f"suite: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(args)
    dump_json(
        {**_metadata("suite", config, config.get("seed")), **result.to_json()},
        out / "suite_report.json",
    )
    width = max(len(r.property_id) for r in result.reports)
    for r in result.reports:
        expected = result.expected[r.property_id]
        mark = "ok" if r.verdict == expected else "WRONG"
        print(f"{r.property_id:<{width}}  {r.verdict:<14} expected={expected:<14} {mark}")
    print(f"suite: exit {result.exit_code} -> {out / 'suite_report.json'}")
    return result.exit_code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sifbm",
        description="Set-indexed fractional Brownian motion toolkit",
    )
    parser.add_argument(
        "--out-dir",
        default=os.environ.get("SIFBM_OUT_DIR", "."),
        help="directory for output artifacts (env: SIFBM_OUT_DIR)",
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=int(os.environ.get("SIFBM_SEED", "0")),
        help="master seed for all randomized work (env: SIFBM_SEED)",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=0,
        help="0 = auto; accepted for compatibility, never affects results",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gram", help="kernel matrix and PSD report for a family")
    p.add_argument("--family", required=True)
    p.add_argument("--kernel", default="sifbm",
                   choices=["sifbm", "sifbm_alt", "levy", "sheet", "white_noise"])
    p.add_argument("--hurst", type=float, required=True)
    p.add_argument("--probing", action="store_true")
    p.set_defaults(func=cmd_gram)

    p = sub.add_parser("sample", help="exact Gaussian ensemble on a family")
    p.add_argument("--family", required=True)
    p.add_argument("--kernel", default="sifbm",
                   choices=["sifbm", "sifbm_alt", "levy", "sheet", "white_noise"])
    p.add_argument("--hurst", type=float, required=True)
    p.add_argument("--probing", action="store_true")
    p.add_argument("--replicates", type=int, default=1000)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("psd-probe", help="search for a non-PSD witness family")
    p.add_argument("--hurst", type=float, required=True)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--budget", type=int, default=10_000)
    p.add_argument("--family-size", type=int, default=8)
    p.set_defaults(func=cmd_psd_probe)

    p = sub.add_parser("flow", help="project and sample along a flow")
    p.add_argument("--flow", required=True)
    p.add_argument("--hurst", type=float, required=True)
    p.add_argument("--probing", action="store_true")
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--replicates", type=int, default=4)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("holder", help="path regularity exponent estimate")
    p.add_argument("--input", default=None, help="flow samples CSV")
    p.add_argument("--flow", default=None, help="flow JSON (samples internally)")
    p.add_argument("--hurst", type=float, default=None)
    p.add_argument("--probing", action="store_true")
    p.add_argument("--grid", type=int, default=4096)
    p.add_argument("--replicates", type=int, default=8)
    p.set_defaults(func=cmd_holder)

    p = sub.add_parser("suite", help="run the property verification suite")
    p.add_argument("--config", default=None, help="suite config JSON")
    p.set_defaults(func=cmd_suite)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 0:
        parser.error("--threads must be >= 0")
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotPositiveSemidefiniteError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (ValueError, ArithmeticError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
