"""Command-line front end: ``mdqam gen-map | validate | metrics | search | simulate``.

Every run writes its data files plus a ``<command>.meta.json`` sidecar
(configuration, seeds, mapping hashes) into the output directory, which
defaults to ``$MDQAM_OUT`` or ``./mdqam-out``.

Exit codes: 0 success, 2 usage error, 3 validation failure, 4 budget exhausted.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, metrics, search
from .fec import distance_spectrum
from .mapping import MdMapping, build_mapping, load_mapping, random_mapping, save_mapping, verify_selection_principles

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_BUDGET = 0, 2, 3, 4
OUT_ENV = "MDQAM_OUT"

# published fast-fading value used to pick the SNR reference and feedback variant
CALIBRATION_ANCHOR = {"m": 4, "N": 2, "snr_db": 2.0, "value": 10.212}

NAMED_MAPPINGS = {
    "proposed-4d-16qam": (4, 2),
    "proposed-6d-16qam": (4, 3),
    "proposed-4d-64qam": (6, 2),
    "proposed-6d-64qam": (6, 3),
}


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _out_dir(args) -> Path:
    d = Path(args.out_dir or os.environ.get(OUT_ENV, "mdqam-out"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def resolve_mapping(spec: str) -> tuple[str, MdMapping]:
    """Mapping from a file path, a name such as ``proposed-4d-64qam``, or ``proposed:m:N`` / ``random:m:N:seed``."""
    if spec in NAMED_MAPPINGS:
        return spec, build_mapping(*NAMED_MAPPINGS[spec])
    parts = spec.split(":")
    try:
        if parts[0] == "proposed" and len(parts) == 3:
            return spec, build_mapping(int(parts[1]), int(parts[2]))
        if parts[0] == "random" and len(parts) == 4:
            return spec, random_mapping(int(parts[1]), int(parts[2]), int(parts[3]))
    except ValueError as exc:
        raise CliError(f"invalid mapping spec {spec!r}: {exc}", EXIT_USAGE) from exc
    path = Path(spec)
    if not path.exists():
        raise CliError(f"no mapping file or known mapping named {spec!r}", EXIT_USAGE)
    try:
        return path.stem, load_mapping(path)
    except ValueError as exc:
        raise CliError(f"invalid mapping file {spec}: {exc}", EXIT_INVALID) from exc


def _run_config(command: str, args) -> dict:
    return {"command": command, **{k: v for k, v in vars(args).items() if k != "func"}}


def _snr_list(values, m: int, unit: str) -> list[float]:
    """SNR points as Es/N0 (dB); ``unit == 'eb'`` converts from Eb/N0."""
    return [analysis.eb_to_es_db(v, m) if unit == "eb" else float(v) for v in values]


# -- subcommands ---------------------------------------------------------------------


def cmd_gen_map(args) -> int:
    mp = build_mapping(args.m, args.N)
    out = Path(args.out) if args.out else _out_dir(args) / f"proposed_m{args.m}_N{args.N}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_mapping(mp, out)
    print(f"wrote {out}")
    print(f"m={args.m} N={args.N} N_min={metrics.n_min(mp):.6g} d_hat_min_sq={metrics.d_hat_min_sq(mp):.6g}")
    analysis.write_sidecar(out.with_suffix(".meta.json"), {"command": "gen-map", "m": args.m, "N": args.N},
                           {out.stem: mp})
    return EXIT_OK


def cmd_validate(args) -> int:
    name, mp = resolve_mapping(args.map)
    problems = []
    if mp.m in (4, 6) and mp.provenance.get("source") == "proposed":
        problems += verify_selection_principles(mp.m)
    for variant in metrics.VARIANTS:
        _, counts = metrics.n_spectrum(mp, variant=variant)
        if counts.sum() != mp.bits * mp.size:
            problems.append(f"{variant} spectrum sums to {counts.sum()}, expected {mp.bits * mp.size}")
    for p in problems:
        print(f"FAIL {p}")
    print(f"{name}: bijective, {mp.size} labels, {'OK' if not problems else f'{len(problems)} problem(s)'}")
    return EXIT_OK if not problems else EXIT_INVALID


def calibration_report() -> list[tuple]:
    a = CALIBRATION_ANCHOR
    return metrics.calibrate_snr_convention(build_mapping(a["m"], a["N"]), a["snr_db"], a["value"])


def cmd_metrics(args) -> int:
    rows = calibration_report()
    print(f"SNR reference calibration against {CALIBRATION_ANCHOR}:")
    for conv, variant, value, err, match in rows:
        print(f"  {conv:14s} {variant:6s} phi_fr={value:10.4f} rel_err={err:.2e}{'  <- match' if match else ''}")
    matches = [(c, v) for c, v, _, _, ok in rows if ok]
    convention, variant = matches[0] if matches else ("per-info-bit", "after")
    print(f"adopted: SNR {convention}, fast-fading variant '{variant}' feedback")
    out = Path(args.out) if args.out else _out_dir(args) / "metrics.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    used = {}
    snrs = [float(s) for s in args.snr]
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mapping_id", "m", "N", "N_min", "d_hat_min_sq", "phi_br", "phi_hat_br"]
                   + [f"phi_fr@{s:g}dB" for s in snrs] + [f"phi_fr_other@{s:g}dB" for s in snrs] + ["conventions"])
        for spec in args.map:
            name, mp = resolve_mapping(spec)
            used[name] = mp
            mm = metrics.compute_metrics(mp, snrs, convention)
            other = "before" if variant == "after" else "after"
            row = [name, mp.m, mp.N, f"{mm.n_min:.6f}", f"{mm.d_hat_min_sq:.6f}", f"{mm.phi_br_before:.6f}",
                   f"{mm.phi_br_after:.6f}"]
            row += [f"{mm.phi_fr[s][variant]:.6g}" for s in snrs] + [f"{mm.phi_fr[s][other]:.6g}" for s in snrs]
            row += [f"snr={convention};feedback={variant};other={other}"]
            w.writerow(row)
            print(",".join(str(v) for v in row))
    analysis.write_sidecar(out.with_suffix(".meta.json"),
                           {"command": "metrics", "snr_db": snrs, "convention": convention, "variant": variant,
                            "calibration": rows}, used)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_search(args) -> int:
    if args.method == "bsa" and args.m == 6 and args.N == 3 and not args.force:
        raise CliError("BSA over 2^18 labels of 6-D 64-QAM is computationally intractable "
                       "(each pass evaluates ~6.9e10 swap terms); pass --force to run it anyway", EXIT_USAGE)
    weights = {}
    for item in args.weight or []:
        key, _, val = item.partition("=")
        weights[key] = float(val)
    try:
        cfg = search.SearchConfig(cost=args.cost, seed=args.seed, design_snr_db=args.design_snr,
                                  max_swaps=args.budget if args.method == "bsa" else 100_000, weights=weights)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc
    if args.method == "bsa":
        res = search.bsa_restarts(args.m, args.N, cfg, restarts=args.restarts, threads=args.threads)
    else:
        res = search.random_search(args.m, args.N, args.budget, cfg)
    out_dir = _out_dir(args)
    stem = f"{args.method}_{args.cost}_m{args.m}_N{args.N}_s{args.seed}"
    path = Path(args.out) if args.out else out_dir / f"{stem}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_mapping(res.mapping, path, seed=args.seed)
    if args.method == "bsa":
        search.write_trace(res.trace, path.with_suffix(".trace.csv"))
    mp = res.mapping
    print(f"wrote {path}")
    print(f"cost={res.cost:.6g} objective={search.objective_value(mp, cfg):.6g} N_min={metrics.n_min(mp):.6g} "
          f"d_hat_min_sq={metrics.d_hat_min_sq(mp):.6g} phi_hat_br={metrics.harmonic_after(mp):.6g}")
    analysis.write_sidecar(path.with_suffix(".meta.json"), _run_config("search", args), {path.stem: mp})
    if res.exhausted:
        print("swap budget exhausted before a fixed point was reached", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def cmd_simulate(args) -> int:
    maps = [resolve_mapping(s) for s in args.map]
    out_dir = _out_dir(args)
    config = _run_config(f"simulate {args.kind}", args)
    if args.kind == "ber":
        results = []
        exhausted = False
        for name, mp in maps:
            snrs = _snr_list(args.snr, mp.m, args.snr_unit)
            r = analysis.run_ber(mp, args.channel, snrs, iterations=args.iters, min_errors=args.min_errors,
                                 max_bits=args.max_bits, seed=args.seed, threads=args.threads, mapping_id=name,
                                 stop_below=args.stop_below)
            results.append(r)
            for p in r.final():
                print(f"{name} {args.channel} Es/N0={p.snr_es_db:.2f} Eb/N0={p.snr_eb_db:.2f} "
                      f"iter={p.iteration} BER={p.ber:.3e} ({p.errors}/{p.bits})")
                exhausted |= p.undersampled
        analysis.write_ber_csv(results, out_dir / "ber.csv")
        analysis.write_sidecar(out_dir / "ber.meta.json", config, dict(maps))
        print(f"wrote {out_dir / 'ber.csv'}")
        if exhausted:
            print("some points reached --max-bits before --min-errors errors", file=sys.stderr)
            return EXIT_BUDGET
        return EXIT_OK
    if args.kind == "exit":
        decoder = analysis.exit_decoder(samples=args.samples, seed=args.seed)
        curves = [decoder]
        for name, mp in maps:
            for es in _snr_list(args.snr, mp.m, args.snr_unit):
                c = analysis.exit_demapper(mp, args.channel, es, samples=args.samples, seed=args.seed)
                curves.append(c)
                gap = analysis.tunnel_gap(c, decoder)
                print(f"{name} Es/N0={es:.2f} dB Eb/N0={analysis.es_to_eb_db(es, mp.m):.2f} dB "
                      f"tunnel_gap={gap:+.4f} ({'open' if gap > 0 else 'closed'})")
        analysis.write_exit_csv(curves, out_dir / "exit.csv")
        analysis.write_sidecar(out_dir / "exit.meta.json", config, dict(maps))
        print(f"wrote {out_dir / 'exit.csv'}")
        return EXIT_OK
    _, spectrum = distance_spectrum()
    bounds = []
    for name, mp in maps:
        b = analysis.floor_bound(mp, args.channel, _snr_list(args.snr, mp.m, args.snr_unit), spectrum)
        bounds.append(b)
        print(f"{name} {args.channel} [{b.form}] " + " ".join(f"{s:.1f}:{v:.3e}" for s, v in zip(b.snr_es_db, b.bound)))
    analysis.write_floor_csv(bounds, out_dir / "floor.csv", [n for n, _ in maps])
    analysis.write_sidecar(out_dir / "floor.meta.json", config, dict(maps))
    print(f"wrote {out_dir / 'floor.csv'}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mdqam", description="Multi-dimensional QAM mappings for BICM-ID")
    p.add_argument("--out-dir", help=f"output directory (default ${OUT_ENV} or ./mdqam-out)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-map", help="construct a proposed mapping and write it as JSON")
    g.add_argument("--m", type=int, choices=(4, 6), required=True)
    g.add_argument("--N", type=int, choices=(2, 3), required=True)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen_map)

    v = sub.add_parser("validate", help="check a mapping file and its invariants")
    v.add_argument("--map", required=True)
    v.set_defaults(func=cmd_validate)

    mt = sub.add_parser("metrics", help="figures of merit of one or more mappings")
    mt.add_argument("--map", nargs="+", required=True)
    mt.add_argument("--snr", nargs="+", type=float, default=[2.0, 10.0], help="SNR points (dB) for phi_fr")
    mt.add_argument("--out")
    mt.set_defaults(func=cmd_metrics)

    s = sub.add_parser("search", help="BSA or best-of-K random mapping search")
    s.add_argument("method", choices=("bsa", "random"))
    s.add_argument("--m", type=int, choices=(2, 4, 6), required=True)
    s.add_argument("--N", type=int, choices=(1, 2, 3), required=True)
    s.add_argument("--cost", choices=search.COSTS, default="phi-hat-br")
    s.add_argument("--weight", action="append", help="name=value, for --cost weighted")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--budget", type=int, default=None, help="BSA swap limit or random-search K")
    s.add_argument("--restarts", type=int, default=20)
    s.add_argument("--design-snr", type=float, default=6.0, help="Eb/N0 (dB) fixing N0 in exponential costs")
    s.add_argument("--force", action="store_true", help="allow BSA at (m, N) = (6, 3)")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_search)

    sm = sub.add_parser("simulate", help="BER, EXIT or error-floor bound runs")
    sm.add_argument("kind", choices=("ber", "exit", "floor"))
    sm.add_argument("--map", nargs="+", default=["proposed-4d-16qam"])
    sm.add_argument("--channel", choices=("awgn", "block", "fast"), default="awgn")
    sm.add_argument("--snr", nargs="+", type=float, required=True)
    sm.add_argument("--snr-unit", choices=("es", "eb"), default="es", help="SNR values are Es/N0 or Eb/N0")
    sm.add_argument("--iters", type=int, default=7)
    sm.add_argument("--min-errors", type=int, default=100)
    sm.add_argument("--max-bits", type=float, default=2e7)
    sm.add_argument("--stop-below", type=float, default=None, help="end a BER scan below this BER")
    sm.add_argument("--samples", type=int, default=analysis.EXIT_SAMPLE_FLOOR)
    sm.add_argument("--seed", type=int, default=1)
    sm.add_argument("--threads", type=int, default=1)
    sm.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "budget", 0) is None:
        args.budget = 100_000 if args.method == "bsa" else 10_000
    try:
        return args.func(args)
    except CliError as exc:
        print(f"mdqam: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"mdqam: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
