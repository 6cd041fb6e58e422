"""Command-line surface: generate streams, detect, simulate, thresholds, report.

Detection streams records from a file or stdin and can sit in a shell
pipeline next to a token logger; the verdict itself is data, so both
"rejected" and "no rejection" exit 0.  Nonzero exits are operational:
2 for bad flags or malformed records, 1 for IO failures.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import baselines, engine, simulate
from .calibrators import CalibratorKind, FixedCalibrator
from .core import VerdictStatus, load_ntp_jsonl
from .gumbel import PseudoUniformVector, WatermarkKey, parse_stream_record

RESULTS_ENV = "EWMARK_RESULTS_DIR"


def _default_out(parser: argparse.ArgumentParser, flag_value, kind: str):
    if flag_value:
        return flag_value
    env = os.environ.get(RESULTS_ENV)
    if env:
        return env
    parser.error(f"--{kind} is required (or set {RESULTS_ENV})")


def _add_detector_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--detector", default="average",
                   choices=["nonadaptive", "weight-adaptive", "og", "average"])
    p.add_argument("--calibrator", default="neglog",
                   choices=[k.value for k in CalibratorKind])
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--og-variant", default="ea2", choices=["ea", "ea2"])
    p.add_argument("--range", default=None, metavar="A,B",
                   help="clamp OG heights into [A, B] (approximate refit)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--horizon", type=int, default=None)


def _detector_config(args) -> dict:
    og_range = None
    if args.range:
        try:
            a, b = (float(x) for x in args.range.split(","))
        except ValueError:
            raise ValueError("--range expects two comma-separated numbers A,B")
        og_range = [a, b]
    return {
        "construction": args.detector,
        "g": args.calibrator,
        "gamma": args.gamma,
        "lambda": args.lam,
        "variant": args.og_variant,
        "range": og_range,
        "alpha": args.alpha,
        "beta": args.beta,
        "horizon": args.horizon,
    }


def cmd_generate(parser, args) -> int:
    if args.config:
        # generator config schema: {key_hex, context_window, ntp_source}
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        if "key_hex" in raw and raw["key_hex"]:
            args.key = raw["key_hex"]
        args.context_window = int(raw.get("context_window", args.context_window))
        source = raw.get("ntp_source", {})
        if source.get("type") == "file":
            args.ntp_file = source["path"]
        elif source.get("type") == "spike":
            args.spike_delta = float(source["delta_max"])
            args.spike_k = int(source.get("K", args.spike_k))
            args.T = int(source.get("T", args.T))
    sources = sum(x is not None for x in (args.ntp_file, args.spike_delta))
    if sources != 1:
        parser.error("exactly one NTP source: --ntp-file or --spike-delta")
    if args.watermarked and not args.key:
        parser.error("--key is required for watermarked generation")
    if args.key:
        key = WatermarkKey.from_hex(args.key, args.context_window)
    else:
        material = hashlib.blake2b(b"ewmark-null-key" + str(args.seed).encode()).digest()
        key = WatermarkKey(material, args.context_window)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(args.seed)))

    if args.ntp_file is not None:
        try:
            ntps = [p.probs for p in load_ntp_jsonl(args.ntp_file)]
        except OSError as exc:
            print(f"cannot read {args.ntp_file}: {exc}", file=sys.stderr)
            return 1
        records = simulate.gen_stream_records(ntps, args.watermarked, key, rng)
    else:
        cfg = simulate.SpikeConfig(K=args.spike_k, delta_max=args.spike_delta,
                                   T=args.T, seed=args.seed)
        records = simulate.gen_streams(cfg, args.watermarked, key, rng)

    try:
        out = open(args.out, "w", encoding="utf-8") if args.out != "-" else sys.stdout
        for r in records:
            out.write(json.dumps({"step": r.step, "token_id": r.token_id, "y": r.y}) + "\n")
        if out is not sys.stdout:
            out.close()
    except OSError as exc:
        print(f"cannot write {args.out}: {exc}", file=sys.stderr)
        return 1
    return 0


def cmd_detect(parser, args) -> int:
    cfg = json.load(open(args.config)) if args.config else _detector_config(args)
    try:
        # only keep the full trajectory when it will be written out
        state = engine.detector_from_config(cfg, monitor=args.monitor,
                                            record_trace=bool(args.trace_out))
    except ValueError as exc:
        parser.error(str(exc))

    key = None
    if args.key:
        key = WatermarkKey.from_hex(args.key, args.context_window)
    context: list[int] = []

    if args.input and args.input != "-":
        try:
            fh = open(args.input, "r", encoding="utf-8")
        except OSError as exc:
            print(f"cannot read {args.input}: {exc}", file=sys.stderr)
            return 1
    else:
        fh = sys.stdin

    lineno = 0
    try:
        for line in iter(fh.readline, ""):
            lineno += 1
            if not line.strip():
                continue
            try:
                rec_obj = json.loads(line)
                explicit_ctx = rec_obj.get("context")
                # an explicit pivotal value wins; otherwise recompute it from
                # the token id under the configured key
                if key is not None and "y" not in rec_obj:
                    step = int(rec_obj["step"])
                    token = int(rec_obj["token_id"])
                    ctx = explicit_ctx if explicit_ctx is not None else context
                    y = PseudoUniformVector(key, ctx, step).coordinate(token)
                    context.append(token)
                else:
                    rec = parse_stream_record(line, lineno)
                    y = rec.y
                    context.append(rec.token_id)
            except (ValueError, KeyError, TypeError) as exc:
                print(f"malformed record at line {lineno}: {exc}", file=sys.stderr)
                return 2
            verdict = state.step(y)
            if args.per_step:
                row = state.rows[-1]
                print(json.dumps({"t": row.t, "y": row.y, "e_value": row.e_value,
                                  "log_m": row.log_m, "verdict": row.verdict}), flush=True)
            if verdict.status is not VerdictStatus.RUNNING and not args.monitor:
                break
            if state.horizon is not None and state.t >= state.horizon:
                break
    finally:
        if fh is not sys.stdin:
            fh.close()

    verdict = state.finish()
    if args.trace_out:
        try:
            engine.write_trace_csv(args.trace_out, state.rows)
        except OSError as exc:
            print(f"cannot write {args.trace_out}: {exc}", file=sys.stderr)
            return 1
    print(json.dumps(verdict.to_dict()), flush=True)
    return 0


def cmd_simulate(parser, args) -> int:
    out = _default_out(parser, args.out, "out")
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        spike = simulate.SpikeConfig(**raw["spike"])
        names = raw.get("detectors")
        replicates = int(raw.get("replicates", 200))
        alpha = float(raw.get("alpha", 0.05))
    else:
        spike = simulate.SpikeConfig(K=args.spike_k, delta_max=args.spike_delta,
                                     T=args.T, seed=args.seed)
        names = args.detectors.split(",") if args.detectors else None
        replicates = args.replicates
        alpha = args.alpha
    detectors = _named_detectors(parser, names, alpha)
    cfg = simulate.ExperimentConfig(spike=spike, detectors=detectors,
                                    replicates=replicates, alpha=alpha)
    curves = simulate.run_experiment(cfg)
    paths = simulate.emit_results(curves, out)
    print(json.dumps({"results_dir": out, "files": [os.path.basename(p) for p in paths]}))
    return 0


def _named_detectors(parser, names, alpha):
    if not names:
        return simulate.default_detectors(alpha)
    table = {
        "ars": baselines.SumTestConfig("ars", alpha),
        "log": baselines.SumTestConfig("log", alpha),
        "nonadaptive": engine.Nonadaptive(),
        "weight-adaptive": engine.WeightAdaptive(),
        "og": engine.OG(variant="ea2"),
        "average": engine.Average(),
    }
    out = []
    for name in names:
        name = name.strip()
        if name not in table:
            parser.error(f"unknown detector {name!r}; choose from {sorted(table)}")
        out.append((name, table[name]))
    return tuple(out)


def cmd_thresholds(parser, args) -> int:
    if args.score == "gum_d":
        parser.error("h_gum_d score: not implemented (external reference)")
    print(f"{baselines.null_threshold(args.score, args.T, args.alpha):.6f}")
    return 0


def cmd_lambda0(parser, args) -> int:
    lam = engine.find_lambda0(args.delta, FixedCalibrator(CalibratorKind(args.calibrator)))
    print(f"{lam:.6f}")
    return 0


def cmd_report(parser, args) -> int:
    results = _default_out(parser, args.results, "results")
    manifest_path = os.path.join(results, "manifest.json")
    if not os.path.exists(manifest_path):
        print(f"no results manifest at {manifest_path}", file=sys.stderr)
        return 1
    curves = simulate.read_results(results)
    t_points = ([int(x) for x in args.t_points.split(",")] if args.t_points
                else sorted({max(1, curves.T // 4), max(1, curves.T // 2), curves.T}))

    width = max(len(n) for n in curves.names) + 2
    for metric in simulate.ErrorCurves.METRICS:
        print(f"\n{metric} (alpha={curves.alpha}, replicates={curves.replicates})")
        header = "detector".ljust(width) + "".join(f"t={t}".rjust(12) for t in t_points)
        print(header)
        for name in curves.names:
            vals = curves.rates[name][metric]
            line = name.ljust(width) + "".join(f"{vals[t-1]:12.4f}" for t in t_points)
            print(line)

    for metric in ("type1", "seq_type1", "type2"):
        path = os.path.join(results, f"wide_{metric}.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t," + ",".join(curves.names) + "\n")
            for t in range(1, curves.T + 1):
                row = [str(t)] + [repr(float(curves.rates[n][metric][t - 1])) for n in curves.names]
                fh.write(",".join(row) + "\n")
    print(f"\nplot-ready columns written under {results}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ewmark",
                                     description="Anytime-valid watermark detection")
    parser.add_argument("--seed", type=int, default=0)
    # accepted before or after the subcommand; SUPPRESS keeps an absent
    # subcommand-level flag from clobbering the global value
    seed_parent = argparse.ArgumentParser(add_help=False)
    seed_parent.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[seed_parent], help="generate a pivotal-record stream")
    g.add_argument("--config", default=None,
                   help="generator config JSON {key_hex, context_window, ntp_source}")
    g.add_argument("--ntp-file", default=None, help="JSONL file of probability arrays")
    g.add_argument("--spike-delta", type=float, default=None)
    g.add_argument("--spike-k", type=int, default=1000)
    g.add_argument("--T", type=int, default=700)
    g.add_argument("--key", default=None, help="watermark key (hex)")
    g.add_argument("--context-window", type=int, default=0)
    g.add_argument("--watermarked", action="store_true")
    g.add_argument("--out", default="-")

    d = sub.add_parser("detect", parents=[seed_parent], help="run the online test over a record stream")
    d.add_argument("--input", default=None, help="JSONL stream file ('-' or omit for stdin)")
    d.add_argument("--config", default=None, help="detector config JSON file")
    _add_detector_flags(d)
    d.add_argument("--key", default=None,
                   help="watermark key (hex); recompute y from token ids")
    d.add_argument("--context-window", type=int, default=0)
    d.add_argument("--trace-out", default=None)
    d.add_argument("--per-step", action="store_true",
                   help="print one JSON line per processed record")
    d.add_argument("--monitor", action="store_true",
                   help="keep updating past any decision")

    s = sub.add_parser("simulate", parents=[seed_parent], help="run the Monte-Carlo error-rate experiment")
    s.add_argument("--config", default=None, help="experiment config JSON file")
    s.add_argument("--spike-delta", type=float, default=0.2)
    s.add_argument("--spike-k", type=int, default=1000)
    s.add_argument("--T", type=int, default=700)
    s.add_argument("--replicates", type=int, default=200)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--detectors", default=None,
                   help="comma-separated subset of ars,log,nonadaptive,weight-adaptive,og,average")
    s.add_argument("--out", default=None)

    t = sub.add_parser("thresholds", parents=[seed_parent], help="exact null threshold for a sum baseline")
    t.add_argument("--score", required=True, choices=["ars", "log", "gum_d"])
    t.add_argument("--T", type=int, required=True)
    t.add_argument("--alpha", type=float, required=True)

    l = sub.add_parser("lambda0", parents=[seed_parent], help="positive-drift mixture weight for worst-case NTP")
    l.add_argument("--delta", type=float, required=True)
    l.add_argument("--calibrator", default="neglog", choices=[k.value for k in CalibratorKind])

    r = sub.add_parser("report", parents=[seed_parent], help="render result curves as text tables")
    r.add_argument("--results", default=None)
    r.add_argument("--t-points", default=None, help="comma-separated prefix lengths")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "generate": cmd_generate,
        "detect": cmd_detect,
        "simulate": cmd_simulate,
        "thresholds": cmd_thresholds,
        "lambda0": cmd_lambda0,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](parser, args)
    except ValueError as exc:
        parser.error(str(exc))


if __name__ == "__main__":
    sys.exit(main())
