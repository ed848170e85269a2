"""Command-line interface: ``seqmon calibrate | monitor | simulate``.

Exit codes: 0 no alarm (or success), 1 at least one alarm, 2 error.
Alarm events are written as JSON lines, one per alarm, flushed as they
occur; the run summary goes to stderr.
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import calibrate, threshold_for
from .core import (
    BadSpec,
    LrvConfig,
    MonitorConfig,
    ParseError,
    SeqmonError,
    ShapeMismatch,
    as_fraction,
    iter_csv_rows,
    read_csv,
)
from .detector import DetectorState, step
from .simlab import MODELS, ChangeSpec, DgpSpec, mc_power, mc_size, to_csv, to_table

FORMAT_VERSION = 1
LRV_ALIASES = {"qs": "quadratic_spectral", "standard": "standard_truncated"}


def digest(data: bytes) -> str:
    """64-bit blake2b content hash as 16 hex digits."""
    return hashlib.blake2b(data, digest_size=8).hexdigest()


def _f17(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict = field(default_factory=dict)
    threshold: float | None = None
    calibration: str | None = None
    version: str = __version__
    seed: int | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


# --------------------------------------------------------------------------
# calibration file


def _lrv_from_args(args) -> LrvConfig:
    bw = args.bandwidth
    if bw != "log10":
        try:
            bw = float(bw)
        except ValueError:
            raise BadSpec(f"--bandwidth must be a number or 'log10', got {bw!r}") from None
    return LrvConfig(method=LRV_ALIASES[args.lrv], bandwidth=bw)


def write_calibration(path, cal, input_digest: str) -> None:
    cfg = cal.config
    lines = [
        "# seqmon calibration",
        f"format_version={FORMAT_VERSION}",
        f"seqmon_version={__version__}",
        f"m={cfg.m}",
        f"d={cfg.d}",
        f"T={cfg.T}",
        f"alpha={_f17(cfg.alpha)}",
        f"method={cfg.calibration}",
        f"independent={'true' if cfg.independent else 'false'}",
        f"lrv={cfg.lrv.method}",
        f"bandwidth={cfg.lrv.bandwidth if isinstance(cfg.lrv.bandwidth, str) else _f17(cfg.lrv.bandwidth)}",
        f"floor_fraction={_f17(cfg.lrv.floor_fraction)}",
        f"seed={cfg.seed}",
        f"replicates={cfg.bootstrap_n}",
        f"input_digest={input_digest}",
        f"threshold={_f17(cal.threshold)}",
        "sigma=" + ",".join(_f17(v) for v in cal.sigma.sigma),
        "shift=" + ",".join(_f17(v) for v in cal.shift),
        "stable_sum=" + ",".join(_f17(v) for v in cal.stable_sum),
        "lrv_floored=" + ",".join(str(h) for h in sorted(cal.sigma.floored)),
    ]
    if cal.bootstrap is not None:
        bq = cal.bootstrap
        rho = cal.rho.rho if cal.rho is not None else np.eye(cfg.d)
        lines += [
            f"rho_digest={digest(np.ascontiguousarray(rho).tobytes())}",
            f"bootstrap_q={_f17(bq.q_value)}",
            f"bootstrap_n={bq.n_replicates}",
            f"bootstrap_seed={bq.seed}",
            f"psd_repair_applied={'true' if bq.psd_repair_applied else 'false'}",
            "min_eigen_clipped="
            + ("" if bq.min_eigen_clipped is None else _f17(bq.min_eigen_clipped)),
        ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_calibration(path) -> dict:
    """Parse a calibration file into a dict of strings (values unparsed)."""
    out: dict[str, str] = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError("expected key=value", n)
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    for key in ("format_version", "m", "d", "T", "threshold", "sigma", "shift", "stable_sum"):
        if key not in out:
            raise ParseError(f"calibration file lacks {key!r}", 1)
    if int(out["format_version"]) != FORMAT_VERSION:
        raise BadSpec(f"unsupported calibration format {out['format_version']}")
    return out


def _floats(s: str) -> np.ndarray:
    return np.array([float(v) for v in s.split(",")], dtype=np.float64)


def state_from_calibration(cal: dict) -> DetectorState:
    m, d = int(cal["m"]), int(cal["d"])
    sigma = _floats(cal["sigma"])
    prefix = _floats(cal["stable_sum"])
    shift = _floats(cal["shift"])
    if sigma.shape != (d,) or prefix.shape != (d,) or shift.shape != (d,):
        raise ShapeMismatch("calibration vectors do not have d entries")
    return DetectorState(
        m=m,
        n_mon=int(as_fraction(cal["T"]) * m),
        sigma=sigma,
        shift=shift,
        shifted_sum=prefix,
        umin_shifted=np.full(d, np.inf),
        umax_shifted=np.full(d, -np.inf),
        active_idx=np.arange(d, dtype=np.int64),
        n_active=d,
    )


# --------------------------------------------------------------------------
# commands


def cmd_calibrate(args) -> int:
    raw = Path(args.stable).read_bytes()
    stable = read_csv(args.stable, header=args.header)
    m, d = stable.n_rows, stable.n_cols
    if (args.m is not None and args.m != m) or (args.d is not None and args.d != d):
        raise ShapeMismatch(f"stable CSV is {m}x{d}, flags say {args.m}x{args.d}")
    cfg = MonitorConfig(
        m=m, d=d, T=args.T, alpha=args.alpha, calibration=args.method,
        lrv=_lrv_from_args(args), bootstrap_n=args.replicates, seed=args.seed,
        independent=args.independent,
    )
    cal = calibrate(stable, cfg)
    write_calibration(args.out, cal, digest(raw))
    print(f"threshold={_f17(cal.threshold)}")
    return 0


def cmd_monitor(args) -> int:
    cal = read_calibration(args.calibration)
    state = state_from_calibration(cal)
    thr = float(cal["threshold"]) if args.threshold is None else args.threshold
    n_alarms = 0
    with contextlib.ExitStack() as stack:
        out = stack.enter_context(open(args.out, "a")) if args.out else sys.stdout
        if args.stream == "-":
            src, stream_name = sys.stdin, "<stdin>"
        else:
            src = stack.enter_context(open(args.stream, newline=""))
            stream_name = args.stream
        for row in iter_csv_rows(src, header=args.header, ncols=state.d):
            if state.finished:
                break
            state, dec = step(state, row, thr, eliminate=not args.no_eliminate)
            if not dec.rejected:
                continue
            comps = sorted(dec.rejected)
            event = {
                "k": dec.k,
                "components": comps,
                "statistic": [float(state.last_stats[h - 1]) for h in comps],
                "threshold": thr,
            }
            out.write(json.dumps(event) + "\n")
            out.flush()
            n_alarms += 1
            if args.stop_on_first_alarm:
                break
    manifest = RunManifest(
        command="monitor",
        config={k: cal[k] for k in ("m", "d", "T", "alpha", "method") if k in cal},
        inputs={"calibration": digest(Path(args.calibration).read_bytes()), "stream": stream_name},
        threshold=thr,
        calibration=cal.get("method"),
        seed=int(cal["seed"]) if "seed" in cal else None,
    )
    summary = {
        "alarms": n_alarms,
        "surviving_set": sorted(state.active_set),
        "steps_consumed": state.k,
        "manifest": asdict(manifest),
    }
    print(json.dumps(summary), file=sys.stderr)
    return 1 if n_alarms else 0


def _parse_cell(text: str) -> dict:
    """``M4,m=500,d=500,T=1`` -> {'model': 'M4', 'm': 500, 'd': 500, 'T': '1'}."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts or parts[0] not in MODELS:
        raise BadSpec(f"cell must start with a model name {MODELS}, got {text!r}")
    cell = {"model": parts[0]}
    for p in parts[1:]:
        key, _, val = p.partition("=")
        if key not in ("m", "d", "T") or not val:
            raise BadSpec(f"bad cell entry {p!r}; expected m=.., d=.., T=..")
        cell[key] = val if key == "T" else int(val)
    return cell


def cmd_simulate(args) -> int:
    model, m, d, T = args.model, args.m, args.d, args.T
    if args.table1_cell:
        cell = _parse_cell(args.table1_cell)
        model, m, d, T = cell["model"], cell.get("m", m), cell.get("d", d), cell.get("T", T)
    if m is None or d is None:
        raise BadSpec("--m and --d (or --table1-cell) are required")
    if args.runs < 1:
        raise BadSpec(f"--runs must be positive, got {args.runs}")
    dgp = DgpSpec(model=model, m=m, d=d, T=T, seed=args.seed)
    cfg = MonitorConfig(
        m=m, d=d, T=T, alpha=args.alpha, calibration=args.method,
        lrv=_lrv_from_args(args), bootstrap_n=args.replicates, seed=args.seed,
        independent=args.independent,
    )
    deltas = []
    if args.deltas:
        deltas = [float(v) for v in args.deltas.split(",")]
    elif args.delta is not None:
        deltas = [args.delta]
    if deltas:
        results = [
            mc_power(
                dgp, ChangeSpec(delta=dl, affected=args.alternative, k_star=args.k_star),
                cfg, args.runs, eliminate=not args.no_eliminate,
            )
            for dl in deltas
        ]
    else:
        results = [mc_size(dgp, cfg, args.runs)]
    report = to_table(results) if args.format == "table" else to_csv(results)
    fixed = None
    if cfg.calibration == "gumbel" or cfg.independent:
        fixed, _ = threshold_for(cfg)
    manifest = RunManifest(
        command="simulate",
        config={
            "model": model, "m": m, "d": d, "T": str(as_fraction(T)), "alpha": args.alpha,
            "method": args.method, "independent": args.independent, "lrv": args.lrv,
            "bandwidth": args.bandwidth, "replicates": args.replicates, "runs": args.runs,
            "deltas": deltas, "alternative": args.alternative if deltas else None,
            "k_star": args.k_star,
        },
        inputs={"report": digest(report.encode())},
        threshold=fixed,
        calibration=args.method,
        seed=args.seed,
    )
    if args.out:
        Path(args.out).write_text(report)
        Path(args.out + ".manifest.json").write_text(manifest.to_json() + "\n")
    else:
        sys.stdout.write(report)
    if args.format != "table" and not deltas:
        r = results[0]
        print(
            f"rate={r.rate:.4f} wilson95=[{r.ci_lo:.4f}, {r.ci_hi:.4f}] runs={r.runs}",
            file=sys.stderr,
        )
    return 0


# --------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--T", default="1", help="monitoring horizon as a multiple of m")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--method", choices=("gumbel", "bootstrap"), default="gumbel")
    p.add_argument("--independent", action="store_true",
                   help="bootstrap with identity spatial correlation")
    p.add_argument("--lrv", choices=tuple(LRV_ALIASES), default="qs")
    p.add_argument("--bandwidth", default="log10")
    p.add_argument("--replicates", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqmon", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"seqmon {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="estimate variances and a threshold from a stable CSV")
    p.add_argument("stable")
    p.add_argument("--out", required=True, help="calibration file to write")
    p.add_argument("--header", action="store_true", help="CSV has a header row")
    p.add_argument("--m", type=int)
    p.add_argument("--d", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("monitor", help="monitor a CSV stream against a calibration")
    p.add_argument("calibration")
    p.add_argument("stream", nargs="?", default="-", help="CSV file, or - for stdin")
    p.add_argument("--header", action="store_true")
    p.add_argument("--threshold", type=float, help="override the calibrated threshold")
    p.add_argument("--stop-on-first-alarm", action="store_true")
    p.add_argument("--no-eliminate", action="store_true")
    p.add_argument("--out", help="append JSONL alarms here instead of stdout")
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("simulate", help="Monte Carlo size or power")
    p.add_argument("--model", choices=MODELS, default="M4")
    p.add_argument("--m", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--table1-cell", help="e.g. M4,m=500,d=500,T=1")
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--delta", type=float)
    p.add_argument("--deltas", help="comma-separated grid of shift sizes")
    p.add_argument("--alternative", default="A1", choices=("A1", "A2", "A3"))
    p.add_argument("--k-star", type=int)
    p.add_argument("--no-eliminate", action="store_true")
    p.add_argument("--format", choices=("csv", "table"), default="csv")
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SeqmonError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
