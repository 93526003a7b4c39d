"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 runtime or certification failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .coalescence import default_h_max
from .dynamics import FORMATS, GraphDoc, Window, graph_document, parse_json, relevant_edges, render, run
from .experiments import (
    ExperimentConfig,
    fittest_choice_rate,
    monte_carlo_distance,
    pareto_csv,
    pareto_tightness,
    summary_csv,
    tail_csv,
    tail_estimate,
    to_csv,
    write_manifest,
)
from .fitness import NodeStream, Tag
from .lattice import ModelParams, reach
from .urn import DEFAULT_TOL, UncertifiedWinnerError, UrnInstance, sample_winner_rubin, simulate_urn_batch

SEED_ENV = "WARM_SEED"

# name -> (converter, default); None default means "required by the subcommand".
_DEFAULTS = {
    "a": (str, "3"),
    "beta": (float, 1.5),
    "gamma": (float, 0.2),
    "seed": (int, None),
    "tol": (float, DEFAULT_TOL),
    "h_max": (int, None),
    "workers": (int, 1),
    "out": (str, None),
    "n": (int, None),
    "n_list": (str, None),
    "reps": (int, None),
    "steps": (int, None),
    "layers": (int, 4),
    "width": (int, 4),
    "threshold": (float, None),
    "format": (str, "dot"),
    "fitnesses": (str, None),
    "eps": (float, 0.5),
    "m_list": (str, "10,100,1000,10000"),
    "x_max": (float, None),
}

_REPS_DEFAULT = {"distance": 200, "sweep": 200, "tail": 10000, "urn": 1000, "pareto": 1000}
# Flags whose default depends on the subcommand.
_COMMAND_DEFAULTS = {"reps": _REPS_DEFAULT, "steps": {"simulate": 20, "urn": 0}}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        values = [int(float(t)) if "e" in t.lower() else int(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError as exc:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from exc
    if not values:
        raise UsageError("empty list")
    return values


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError as exc:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def read_config(path: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment; keys match flag names."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            if key not in _DEFAULTS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value
    return out


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--a", help="reach base a > 1, decimal or p/q (default: 3)")
    g.add_argument("--beta", help="reinforcement exponent beta > 1 (default: 1.5)")
    g.add_argument("--gamma", help="fitness tail index, 0 < gamma < 1 (default: 0.2)")
    g.add_argument("--seed", help=f"64-bit master seed (default: ${SEED_ENV}, else 0)")
    g = p.add_argument_group("run")
    g.add_argument("--config", help="key = value file; command-line flags take precedence (default: none)")
    g.add_argument("--out", help="write the result here and a JSON manifest next to it (default: stdout)")
    g.add_argument("--workers", help="worker processes; output does not depend on it (default: 1)")


def _add_walk_flags(p: argparse.ArgumentParser, reps_default: int) -> None:
    p.add_argument("--reps", help=f"replications per N (default: {reps_default})")
    p.add_argument("--h-max", dest="h_max", help="last layer explored before censoring (default: ceil(log_a N) + 128)")
    p.add_argument("--tol", help=f"certified error per urn winner (default: {DEFAULT_TOL:g})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="warmnet", description="Activity-reinforced layered random graph: simulation and distance statistics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", help="finite-window weight dynamics, exported as a graph")
    _add_model_flags(p)
    p.add_argument("--steps", help="reinforcement steps (default: 20)")
    p.add_argument("--layers", help="number of layers in the window, last one frozen (default: 4)")
    p.add_argument("--width", help="layer-0 roots are x in [-width, width] (default: 4)")
    p.add_argument("--threshold", help="keep only edges with activation share above this (default: keep all)")
    p.add_argument("--format", choices=FORMATS, help="output format (default: dot)")

    p = sub.add_parser("distance", help="summary of H_N for one N")
    _add_model_flags(p)
    p.add_argument("--n", help="horizontal distance N >= 1 (required)")
    _add_walk_flags(p, _REPS_DEFAULT["distance"])

    p = sub.add_parser("sweep", help="summary of H_N over several N")
    _add_model_flags(p)
    p.add_argument("--n-list", dest="n_list", help="comma-separated N values (required)")
    _add_walk_flags(p, _REPS_DEFAULT["sweep"])

    p = sub.add_parser("tail", help="empirical survival of H_N - 2 log_a N")
    _add_model_flags(p)
    p.add_argument("--n", help="horizontal distance N >= 1 (required)")
    p.add_argument("--x-max", dest="x_max", help="largest x on the integer grid (default: largest observed)")
    _add_walk_flags(p, _REPS_DEFAULT["tail"])

    p = sub.add_parser("urn", help="urn winner statistics")
    _add_model_flags(p)
    p.add_argument("--fitnesses", help="comma-separated fitnesses; tabulates winner frequencies (default: layer mode)")
    p.add_argument("--steps", help="with --fitnesses: also run direct simulations of this many draws (default: 0)")
    p.add_argument("--layers", help="without --fitnesses: layer h of the neighborhoods to test (default: 4)")
    p.add_argument("--eps", help="without --fitnesses: dominance level eps > 0 (default: 0.5)")
    p.add_argument("--threshold", help="weight share that decides a direct-simulation winner (default: 0.99)")
    p.add_argument("--reps", help=f"replications (default: {_REPS_DEFAULT['urn']})")
    p.add_argument("--tol", help=f"certified error per winner (default: {DEFAULT_TOL:g})")

    p = sub.add_parser("pareto", help="quantiles of sum / second-largest of Pareto samples")
    _add_model_flags(p)
    p.add_argument("--m-list", dest="m_list", help="comma-separated sample sizes m >= 2 (default: 10,100,1000,10000)")
    p.add_argument("--reps", help=f"replications per m (default: {_REPS_DEFAULT['pareto']})")

    p = sub.add_parser("export", help="convert a JSON graph export to another format")
    p.add_argument("input", help="JSON file written by 'simulate --format json'")
    p.add_argument("--format", choices=FORMATS, help="output format (default: dot)")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--config", help="key = value file; command-line flags take precedence (default: none)")
    return parser


def _resolve(ns: argparse.Namespace) -> dict:
    cfg = read_config(ns.config) if getattr(ns, "config", None) else {}
    opts = {}
    for key, (conv, default) in _DEFAULTS.items():
        raw = getattr(ns, key, None)
        if raw is None:
            raw = cfg.get(key)
        if raw is None and key == "seed":
            raw = os.environ.get(SEED_ENV, "0")
        if raw is None and key in _COMMAND_DEFAULTS:
            raw = _COMMAND_DEFAULTS[key].get(ns.command)
        if raw is None:
            opts[key] = default
            continue
        try:
            opts[key] = conv(raw)
        except ValueError as exc:
            raise UsageError(f"invalid value for --{key.replace('_', '-')}: {raw!r}") from exc
    return opts


def _params(opts: dict) -> ModelParams:
    try:
        return ModelParams(opts["a"], opts["beta"], opts["gamma"], opts["seed"])
    except (ValueError, TypeError) as exc:
        raise UsageError(f"{exc}; the model needs a > 1, beta > 1 and 0 < gamma < 1") from exc


def _require(opts: dict, *keys: str) -> None:
    for k in keys:
        if opts.get(k) is None:
            raise UsageError(f"missing required flag --{k.replace('_', '-')}")


def _positive(opts: dict, *keys: str) -> None:
    for k in keys:
        if opts.get(k) is not None and opts[k] < 1:
            raise UsageError(f"--{k.replace('_', '-')} must be >= 1")


def _emit(data, opts: dict, manifest: Optional[dict] = None, started: float = 0.0) -> None:
    if isinstance(data, str):
        data = data.encode("utf-8")
    out = opts.get("out")
    if out:
        with open(out, "wb") as fh:
            fh.write(data)
        if manifest is not None:
            write_manifest(out + ".manifest.json", manifest, time.perf_counter() - started)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def _cmd_simulate(opts, started):
    params = _params(opts)
    _positive(opts, "layers")
    if opts["steps"] < 0 or opts["width"] < 0:
        raise UsageError("--steps and --width must be >= 0")
    window = Window.cone(params, opts["layers"], opts["width"])
    if opts["steps"] and not window.active:
        raise UsageError("window has no activatable node; use --layers >= 2")
    state = run(window, opts["steps"])[-1]
    doc = graph_document(state, window)
    if opts["threshold"] is not None:
        keep = {(v.x, v.h, w.x, w.h) for v, w in relevant_edges(state, opts["threshold"])}
        doc.edges = [e for e in doc.edges if e[:4] in keep]
    manifest = {"command": "simulate", "params": params.as_dict(), "steps": opts["steps"], "layers": opts["layers"],
                "width": opts["width"], "threshold": opts["threshold"], "format": opts["format"]}
    _emit(render(doc, opts["format"]), opts, manifest, started)


def _walk_config(opts, n_list) -> ExperimentConfig:
    params = _params(opts)
    _positive(opts, "reps", "workers")
    if any(n < 1 for n in n_list):
        raise UsageError("every N must be >= 1")
    if not 0 < opts["tol"] < 1:
        raise UsageError("--tol must lie in (0, 1)")
    return ExperimentConfig(params, n_list, opts["reps"], opts["h_max"], opts["tol"], opts["out"], opts["workers"])


def _cmd_distance(opts, started, name="distance"):
    if name == "distance":
        _require(opts, "n")
        n_list = [opts["n"]]
    else:
        _require(opts, "n_list")
        n_list = _int_list(opts["n_list"])
    cfg = _walk_config(opts, n_list)
    rows = monte_carlo_distance(cfg)
    manifest = {"command": name, **cfg.as_dict(),
                "h_max_effective": {str(n): cfg.h_max or default_h_max(n, cfg.params.a) for n in n_list}}
    _emit(summary_csv(rows), opts, manifest, started)


def _cmd_tail(opts, started):
    _require(opts, "n")
    cfg = _walk_config(opts, [opts["n"]])
    grid = None
    if opts["x_max"] is not None:
        grid = list(range(0, int(opts["x_max"]) + 1))
    res = tail_estimate(cfg.params, opts["n"], cfg.replications, grid, cfg.h_max, cfg.tol, cfg.workers)
    if res.slope is None:
        print("slope: unavailable (fewer than 3 grid points with survival > 10/reps)", file=sys.stderr)
    else:
        print(f"slope: {res.slope:.6f} +- {res.slope_se:.6f} over {res.n_fit} points", file=sys.stderr)
    manifest = {"command": "tail", **cfg.as_dict(), "slope": res.slope, "slope_se": res.slope_se,
                "n_fit": res.n_fit, "censored": res.censored, "uncertified": res.uncertified}
    _emit(tail_csv(res), opts, manifest, started)


def _cmd_urn(opts, started):
    params = _params(opts)
    _positive(opts, "reps")
    reps = opts["reps"]
    tol = opts["tol"]
    if opts["fitnesses"] is not None:
        try:
            urn = UrnInstance(_float_list(opts["fitnesses"]), params.beta)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        counts = np.zeros(urn.n_colors, dtype=np.int64)
        base = NodeStream(params.seed, Tag.URN, ())
        for r in range(reps):
            counts[sample_winner_rubin(urn, base.child(r), tol).index] += 1
        header = ["color", "fitness", "rubin_count", "rubin_freq"]
        direct = None
        steps = opts["steps"]
        if steps < 0:
            raise UsageError("--steps must be >= 0")
        if steps > 0:
            share = 0.99 if opts["threshold"] is None else opts["threshold"]
            w = simulate_urn_batch(urn, steps, NodeStream(params.seed, Tag.URN_SIM, ()), reps)
            top = w.argmax(axis=1)
            decided = (w.max(axis=1) - 1) / steps > share
            direct = np.bincount(top[decided], minlength=urn.n_colors)
            header += ["direct_count", "direct_freq"]
        rows = []
        for i, f in enumerate(urn.fitnesses):
            row = [i, float(f), int(counts[i]), counts[i] / reps]
            if direct is not None:
                row += [int(direct[i]), direct[i] / reps]
            rows.append(row)
        if direct is not None:
            undecided = reps - int(direct.sum())
            rows.append(["undecided", "", 0, 0.0, undecided, undecided / reps])
        text = to_csv(header, rows)
    else:
        h = opts["layers"]
        if h < 0 or not opts["eps"] > 0:
            raise UsageError("--layers must be >= 0 and --eps > 0")
        res = fittest_choice_rate(params, h, reps, opts["eps"], tol)
        text = to_csv(
            ["layer", "colors", "replications", "eps", "rate", "se", "q_eps", "p_dominant", "bound"],
            [[h, 2 * reach(h, params.a) + 1, reps, opts["eps"], res.rate, res.se, res.q_eps, res.p_dominant, res.bound]],
        )
    manifest = {"command": "urn", "params": params.as_dict(), "reps": reps, "tol": tol,
                "fitnesses": opts["fitnesses"], "layers": opts["layers"], "eps": opts["eps"]}
    _emit(text, opts, manifest, started)


def _cmd_pareto(opts, started):
    params = _params(opts)
    _positive(opts, "reps")
    m_list = _int_list(opts["m_list"])
    if any(m < 2 for m in m_list):
        raise UsageError("every m must be >= 2")
    rows = pareto_tightness(params.gamma, m_list, opts["reps"], params.seed)
    manifest = {"command": "pareto", "params": params.as_dict(), "m_list": m_list, "reps": opts["reps"]}
    _emit(pareto_csv(rows), opts, manifest, started)


def _cmd_export(opts, started, ns):
    try:
        with open(ns.input, "rb") as fh:
            doc: GraphDoc = parse_json(fh.read())
    except (KeyError, ValueError, TypeError) as exc:
        raise UsageError(f"{ns.input}: not a graph JSON export ({exc})") from exc
    _emit(render(doc, opts["format"]), opts)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        # --help and --version exit 0, usage errors exit 1
        return int(exc.code or 0)
    started = time.perf_counter()
    try:
        opts = _resolve(ns)
        cmd = ns.command
        if cmd == "simulate":
            _cmd_simulate(opts, started)
        elif cmd in ("distance", "sweep"):
            _cmd_distance(opts, started, cmd)
        elif cmd == "tail":
            _cmd_tail(opts, started)
        elif cmd == "urn":
            _cmd_urn(opts, started)
        elif cmd == "pareto":
            _cmd_pareto(opts, started)
        elif cmd == "export":
            _cmd_export(opts, started, ns)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"warmnet {ns.command}: error: {exc}", file=sys.stderr)
        return 1
    except (UncertifiedWinnerError, OverflowError, OSError) as exc:
        print(f"warmnet {ns.command}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
