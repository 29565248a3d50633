"""Command-line front end.

Subcommands: simulate, classify, fit-rates, reorder-demo, paramcheck.
Exit codes: 0 on success (a detected blow-up is a result, not a failure),
2 for unreadable input or bad arguments, 3 for configurations that parse but
fail validation.
"""
import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import dynamics, rates, reorder, scenario
from ._core import BACKEND
from .errors import TokenDynError
from .parameterization import REGIMES, LdlFactors, ldl_build, random_ldl, spectrum_signs
from .linalg import eigh, sym_part
from .s6 import S6Params, as_tokens

RNG_ALGORITHM = "numpy.random.PCG64"
EXIT_OK, EXIT_UNREADABLE, EXIT_INVALID = 0, 2, 3

PARAM_SOURCES = ("explicit", "scalar", "io_matrix", "ldl", "random")
OUTPUTS = ("trajectory_csv", "attention_csv", "report_json")


class ConfigError(TokenDynError):
    pass


class UnreadableConfig(Exception):
    pass


@dataclass
class RunConfig:
    params: S6Params
    x0: np.ndarray
    t_end: float
    integrator: str = "adaptive"
    h: float = 1e-3
    rel_tol: float = dynamics.DEFAULT_REL_TOL
    sample_every: int | None = None
    snapshot_policy: str = "linear"
    snapshot_count: int = 200
    snapshot_t_min: float | None = None
    blowup_threshold: float = dynamics.DEFAULT_BLOWUP_THRESHOLD
    outputs: list = field(default_factory=lambda: list(OUTPUTS))
    fits: list = field(default_factory=list)
    seed: int | None = None

    def resolved(self):
        """Everything needed to rerun this config, random draws included."""
        p = self.params
        return {
            "params": {
                "a": p.a.tolist(),
                "S_Delta": p.S_Delta.tolist(),
                "S_B": p.S_B.tolist(),
                "S_C": p.S_C.tolist(),
            },
            "x0": self.x0.tolist(),
            "t_end": self.t_end,
            "integrator": (
                {"fixed": {"h": self.h, "sample_every": self.sample_every}}
                if self.integrator == "fixed"
                else {"adaptive": {"rel_tol": self.rel_tol}}
            ),
            "snapshots": {
                "policy": self.snapshot_policy,
                "count": self.snapshot_count,
                "t_min": self.snapshot_t_min,
            },
            "blowup_threshold": self.blowup_threshold,
            "outputs": self.outputs,
            "fits": self.fits,
        }


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UnreadableConfig(f"cannot read {path}: {exc}") from exc


def _one_of(block, keys, what):
    if not isinstance(block, dict):
        raise ConfigError(f"{what} must be an object")
    found = [k for k in keys if k in block]
    if len(found) != 1:
        raise ConfigError(f"{what} needs exactly one of {keys}, got {sorted(block)}")
    return found[0], block[found[0]]


def _seed(spec, default):
    seed = spec.get("seed", default)
    if seed is None:
        raise ConfigError("random source needs a seed (in the config or via --seed)")
    return int(seed)


def _parse_params(block, seed):
    kind, spec = _one_of(block, PARAM_SOURCES, "params")
    if kind == "explicit":
        return S6Params(a=spec["a"], S_Delta=spec["S_Delta"], S_B=spec["S_B"], S_C=spec["S_C"])
    if kind == "scalar":
        return S6Params.scalar(spec["mu"], spec["s_delta"], spec["a"])
    if kind == "io_matrix":
        return S6Params.from_io_matrix(spec["matrix"], spec["S_Delta"], spec["a"])
    if kind == "ldl":
        factors = LdlFactors(spec["L_unit"], spec["d_raw"], spec["signs"])
        S_B, S_C = ldl_build(factors)
        a = np.broadcast_to(np.asarray(spec["a"], dtype=np.float64), (factors.D,))
        return S6Params(a=a, S_Delta=spec["S_Delta"], S_B=S_B, S_C=S_C)
    rng = np.random.default_rng(_seed(spec, seed))
    return S6Params.random(rng, int(spec["D"]), int(spec["N"]))


def _parse_x0(spec, D, seed):
    if isinstance(spec, dict):
        kind, inner = _one_of(spec, ("random",), "x0")
        rng = np.random.default_rng(_seed(inner, seed))
        return rng.standard_normal((int(inner.get("D", D)), int(inner["L"])))
    return as_tokens(spec, D)


def parse_config(data, seed=None):
    """Build a :class:`RunConfig` from a decoded JSON document."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    try:
        params = _parse_params(data["params"], seed)
        x0 = _parse_x0(data["x0"], params.D, seed)
        if x0.shape[0] != params.D:
            raise ConfigError(f"x0 has {x0.shape[0]} channels, params have {params.D}")
        t_end = float(data["t_end"])
        if not t_end > 0:
            raise ConfigError("t_end must be positive")
        cfg = RunConfig(params=params, x0=x0, t_end=t_end, seed=seed)
        kind, spec = _one_of(data.get("integrator", {"adaptive": {}}), ("fixed", "adaptive"),
                             "integrator")
        cfg.integrator = kind
        if kind == "fixed":
            cfg.h = float(spec["h"])
            cfg.sample_every = spec.get("sample_every")
        else:
            cfg.rel_tol = float(spec.get("rel_tol", cfg.rel_tol))
        snaps = data.get("snapshots", {})
        cfg.snapshot_policy = snaps.get("policy", "linear")
        cfg.snapshot_count = int(snaps.get("count", cfg.snapshot_count))
        cfg.snapshot_t_min = snaps.get("t_min")
        cfg.blowup_threshold = float(data.get("blowup_threshold", cfg.blowup_threshold))
        cfg.outputs = list(data.get("outputs", OUTPUTS))
        unknown = set(cfg.outputs) - set(OUTPUTS)
        if unknown:
            raise ConfigError(f"unknown outputs {sorted(unknown)}")
        cfg.fits = list(data.get("fits", []))
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, TokenDynError):
            raise
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path, seed=None):
    return parse_config(_read_json(path), seed)


def run_simulation(cfg):
    """Integrate a config; returns (record, blowup report)."""
    with_attention = "attention_csv" in cfg.outputs
    sample_times = None
    if cfg.integrator == "fixed":
        if cfg.sample_every is None or cfg.snapshot_policy == "geometric":
            sample_times = dynamics.snapshot_times(
                cfg.t_end, cfg.snapshot_count, cfg.snapshot_policy, cfg.snapshot_t_min
            )
        record = dynamics.integrate_fixed(
            cfg.params, cfg.x0, cfg.t_end, cfg.h,
            sample_every=cfg.sample_every or 1,
            with_attention=with_attention,
            blowup_threshold=cfg.blowup_threshold,
            sample_times=sample_times,
        )
        report = dynamics.BlowupReport(detected=record.status == dynamics.BLOWUP_DETECTED,
                                       blowup_time=record.blowup_time)
        if report.detected:
            last = np.abs(record.states[-1])
            d, l = np.unravel_index(int(np.argmax(last)), last.shape)
            report = dynamics.BlowupReport(True, record.blowup_time, (int(l), int(d)))
        return record, report
    if cfg.snapshot_count > 0:
        sample_times = dynamics.snapshot_times(
            cfg.t_end, cfg.snapshot_count, cfg.snapshot_policy, cfg.snapshot_t_min
        )
    return dynamics.integrate_adaptive(
        cfg.params, cfg.x0, cfg.t_end, cfg.rel_tol, cfg.blowup_threshold,
        sample_times=sample_times, with_attention=with_attention,
    )


def _finite_or_none(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def _sanitize(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.generic):
        return _sanitize(obj.item())
    return obj


def compute_fits(record, fits):
    """Apply fit requests ({kind, window[, channel, tokens]}) to a record."""
    results = []
    for spec in fits:
        kind = spec.get("kind", "power")
        if kind == "blowup":
            try:
                t = rates.estimate_blowup(record)
            except TokenDynError as exc:
                results.append({"kind": kind, "error": str(exc)})
            else:
                results.append({"kind": kind, "blowup_time": t})
            continue
        window = tuple(spec["window"]) if "window" in spec else None
        channels = [spec["channel"]] if "channel" in spec else range(record.D)
        tokens = spec.get("tokens", range(record.L))
        for d in channels:
            for l in tokens:
                entry = {"kind": kind, "channel": int(d), "token": int(l)}
                values = np.abs(record.token(l, d))
                try:
                    if kind == "power":
                        fit = rates.fit_power(record.times, values, window)
                    elif kind == "logpower":
                        fit = rates.fit_logpower(record.times, values, int(l) + 1, window)
                    else:
                        raise ConfigError(f"unknown fit kind {kind!r}")
                except ConfigError:
                    raise
                except TokenDynError as exc:
                    entry["error"] = str(exc)
                else:
                    entry.update(fit.to_dict())
                results.append(entry)
    return results


# -- file output -------------------------------------------------------------


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    return repr(float(v))


def trajectory_csv(record):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    L = record.L
    if record.D == 1:
        w.writerow(["t"] + [f"x_{l + 1}" for l in range(L)])
        for t, s in zip(record.times, record.states):
            w.writerow([_fmt(t)] + [_fmt(v) for v in s[0]])
    else:
        w.writerow(["t", "ch"] + [f"x_{l + 1}" for l in range(L)])
        for d in range(record.D):
            for t, s in zip(record.times, record.states):
                w.writerow([_fmt(t), d + 1] + [_fmt(v) for v in s[d]])
    return buf.getvalue()


def attention_csv(record):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "ch", "l", "j", "P"])
    for t, P in zip(record.times, record.attention):
        for d in range(P.shape[0]):
            for l in range(P.shape[1]):
                for j in range(l + 1):
                    w.writerow([_fmt(t), d + 1, l + 1, j + 1, _fmt(P[d, l, j])])
    return buf.getvalue()


def read_trajectory_csv(path):
    """Inverse of :func:`trajectory_csv`."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[:2] == ["t", "ch"]:
        data = np.array(body, dtype=np.float64)
        channels = np.unique(data[:, 1]).astype(int)
        times = data[data[:, 1] == channels[0], 0]
        states = np.stack([data[data[:, 1] == c, 2:] for c in channels], axis=1)
    else:
        data = np.array(body, dtype=np.float64)
        times, states = data[:, 0], data[:, None, 1:]
    return dynamics.TrajectoryRecord(times=times, states=states)


def dumps_json(obj):
    return json.dumps(_sanitize(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


# -- subcommands -------------------------------------------------------------


def _classification(cfg):
    try:
        return scenario.classify(cfg.params, cfg.x0).to_dict(), None
    except TokenDynError as exc:
        return None, str(exc)


def cmd_simulate(args, out=sys.stdout):
    cfg = load_config(args.config, args.seed)
    record, blow = run_simulation(cfg)
    scen, scen_err = _classification(cfg)

    blowup = {
        "detected": blow.detected,
        "blowup_time": _finite_or_none(blow.blowup_time),
        "trigger": None if blow.trigger is None
        else {"token": blow.trigger[0] + 1, "channel": blow.trigger[1] + 1},
    }
    if cfg.params.D == 1 and cfg.params.io_matrix[0, 0] > 0:
        blowup["analytic_bound_min"] = _finite_or_none(
            scenario.blowup_bound(cfg.params, cfg.x0)[1]
        )
    if blow.detected:
        try:
            blowup["extrapolated_time"] = rates.estimate_blowup(record)
        except TokenDynError:
            blowup["extrapolated_time"] = None

    report = {
        "tool": {"name": "tokendyn", "version": __version__},
        "rng": {"algorithm": RNG_ALGORITHM, "seed": cfg.seed},
        "config": cfg.resolved(),
        "scenario": scen,
        "scenario_error": scen_err,
        "trajectory": {
            "status": record.status,
            "n_snapshots": len(record.times),
            "t_final": float(record.times[-1]),
            "blowup_time": _finite_or_none(record.blowup_time),
        },
        "blowup": blowup,
        "fits": compute_fits(record, cfg.fits),
    }
    out_dir = args.out_dir or "."
    written = []
    if "trajectory_csv" in cfg.outputs:
        written.append(os.path.join(out_dir, "trajectory.csv"))
        _atomic_write(written[-1], trajectory_csv(record))
    if "attention_csv" in cfg.outputs:
        written.append(os.path.join(out_dir, "attention.csv"))
        _atomic_write(written[-1], attention_csv(record))
    if "report_json" in cfg.outputs:
        written.append(os.path.join(out_dir, "report.json"))
        _atomic_write(written[-1], dumps_json(report))
    print(f"status: {record.status}", file=out)
    if record.blowup_time is not None:
        print(f"blowup_time: {float(record.blowup_time)!r}", file=out)
    for path in written:
        print(f"wrote {path}", file=out)
    return EXIT_OK


def cmd_classify(args, out=sys.stdout):
    cfg = load_config(args.config, args.seed)
    rep = scenario.classify(cfg.params, cfg.x0)
    print(f"label: {rep.display_label}", file=out)
    if isinstance(rep.mu, float):
        print(f"mu: {rep.mu!r}", file=out)
    else:
        print("mu eigenvalues: " + ", ".join(repr(float(v)) for v in rep.mu.eigenvalues), file=out)
    print(f"sign(S_Delta x_l0): {rep.per_token_sdelta_sign}", file=out)
    print(f"r0: {rep.r0!r}", file=out)
    print(f"slow-divergence hypothesis: {rep.hypothesis_holds}", file=out)
    if rep.blowup_bounds is not None:
        shown = [None if math.isinf(b) else b for b in rep.blowup_bounds]
        print(f"blow-up bounds: {shown}", file=out)
    if args.out_dir:
        path = os.path.join(args.out_dir, "classification.json")
        _atomic_write(path, dumps_json(rep.to_dict()))
        print(f"wrote {path}", file=out)
    return EXIT_OK


def cmd_fit_rates(args, out=sys.stdout):
    if args.trajectory:
        try:
            record = read_trajectory_csv(args.trajectory)
        except (OSError, ValueError, IndexError) as exc:
            raise UnreadableConfig(f"cannot read {args.trajectory}: {exc}") from exc
        if args.kind == "blowup":
            record.status = dynamics.BLOWUP_DETECTED
    elif args.config:
        record, _ = run_simulation(load_config(args.config, args.seed))
    else:
        raise ConfigError("fit-rates needs --trajectory or --config")
    spec = {"kind": args.kind}
    if args.window:
        spec["window"] = args.window
    results = compute_fits(record, [spec])
    text = dumps_json({"fits": results})
    out.write(text)
    if args.out_dir:
        _atomic_write(os.path.join(args.out_dir, "fits.json"), text)
    return EXIT_OK


def _table(rows, fmt="{: .6f}"):
    return "\n".join("  ".join(fmt.format(v) for v in row) for row in rows)


def cmd_reorder_demo(args, out=sys.stdout):
    if args.L < 1 or args.D < 1 or not args.tau > 0 or args.p < 1:
        raise argparse.ArgumentTypeError("need L >= 1, D >= 1, tau > 0, p >= 1")
    seed = 0 if args.seed is None else args.seed
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((args.D, args.L))
    S_Delta = rng.standard_normal((args.D, args.D))
    K = np.zeros(args.D) if args.zero_k else rng.standard_normal(args.D)
    rp = reorder.ReorderParams(K=K, tau=args.tau, p=args.p, order=args.order)
    s = reorder.importance_scores(S_Delta, K, x)
    P = reorder.softsort(s, rp)
    xr = reorder.reorder_tokens(x, P)
    print(f"seed: {seed}  rng: {RNG_ALGORITHM}  L={args.L} D={args.D} "
          f"tau={args.tau!r} p={args.p!r} order={args.order}", file=out)
    print("K: " + _table([K]).strip(), file=out)
    print("scores:", file=out)
    print(_table([s]), file=out)
    print("soft permutation P:", file=out)
    print(_table(P, "{:.4f}"), file=out)
    print("hard permutation (row argmax): " + " ".join(str(i) for i in P.argmax(axis=1)), file=out)
    print("comparison sort:               "
          + " ".join(str(i) for i in reorder.sort_permutation(s, args.order)), file=out)
    print("tokens before (rows = channels):", file=out)
    print(_table(x), file=out)
    print("tokens after x P^T:", file=out)
    print(_table(xr), file=out)
    return EXIT_OK


def cmd_paramcheck(args, out=sys.stdout):
    if args.dim < 1:
        raise argparse.ArgumentTypeError("--dim must be >= 1")
    seed = 0 if args.seed is None else args.seed
    rng = np.random.default_rng(seed)
    factors = random_ldl(rng, args.dim, args.regime)
    S_B, S_C = ldl_build(factors)
    eig = eigh(sym_part(S_C.T @ S_B)).eigenvalues
    signs = spectrum_signs(S_B, S_C)
    print(f"seed: {seed}  rng: {RNG_ALGORITHM}  D={args.dim} regime={args.regime}", file=out)
    print("L_unit:", file=out)
    print(_table(factors.L_unit), file=out)
    print("d_raw: " + _table([factors.d_raw]).strip(), file=out)
    print("signs: " + " ".join(f"{int(v):+d}" for v in factors.signs), file=out)
    print("eigenvalues of S_C^T S_B: " + ", ".join(repr(float(v)) for v in eig), file=out)
    print("sign pattern: " + " ".join(f"{v:+d}" for v in signs), file=out)
    ok = sorted(signs) == sorted(int(v) for v in factors.signs)
    print(f"inertia matches: {ok}", file=out)
    return EXIT_OK if ok else EXIT_INVALID


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="run config (JSON)")
    common.add_argument("--out-dir", default=argparse.SUPPRESS, help="directory for outputs")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="seed for random sources (u64)")

    parser = argparse.ArgumentParser(prog="tokendyn", parents=[common],
                                     description="Token dynamics of S6 layers.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__} ({BACKEND} kernels)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="integrate a config")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("classify", parents=[common], help="classify the regime of a config")
    p.set_defaults(func=cmd_classify)
    p = sub.add_parser("fit-rates", parents=[common], help="fit asymptotic rates")
    p.add_argument("--trajectory", help="trajectory CSV written by simulate")
    p.add_argument("--kind", choices=["power", "logpower", "blowup"], default="power")
    p.add_argument("--window", type=float, nargs=2, metavar=("T_LO", "T_HI"))
    p.set_defaults(func=cmd_fit_rates)
    p = sub.add_parser("reorder-demo", parents=[common], help="show SoftSort reordering")
    p.add_argument("--L", type=int, default=6)
    p.add_argument("--D", type=int, default=2)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--order", choices=[reorder.DESCENDING, reorder.ASCENDING],
                   default=reorder.DESCENDING)
    p.add_argument("--zero-k", action="store_true", help="use K = 0 (all scores tied)")
    p.set_defaults(func=cmd_reorder_demo)
    p = sub.add_parser("paramcheck", parents=[common], help="check an LDL^T parameterization")
    p.add_argument("--dim", type=int, default=4)
    p.add_argument("--regime", choices=list(REGIMES), default="mixed")
    p.set_defaults(func=cmd_paramcheck)
    return parser


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("config", "out_dir", "seed"):
        if not hasattr(args, name):
            setattr(args, name, None)
    if args.command in ("simulate", "classify") and args.config is None:
        parser.error(f"{args.command} needs --config")
    try:
        return args.func(args, out=out)
    except UnreadableConfig as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNREADABLE
    except argparse.ArgumentTypeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNREADABLE
    except TokenDynError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
