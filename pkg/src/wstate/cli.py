"""Command-line front end.

Subcommands: ``run``, ``sweep``, ``compare``, ``loss`` and ``selftest``.

Output formats
--------------
``--output json`` writes an envelope ``{"meta": {...}, "data": ...}``; ``meta``
echoes the command, the resolved configuration and whether values come from
full simulation or from closed-form formulas. Floats are written with
``repr`` and therefore round-trip exactly.

``--output csv`` writes a header row and comma separated values with ``.`` as
the decimal mark. Summary lines (sweep argmax) start with ``#``.

``--output table`` is a human-readable fixed-width table.

Circuit dumps (``run --dump-circuit FILE``) are JSON documents with one entry
per stage::

    {"label": "...", "input_modes": ["a1", ...], "output_modes": ["b1H", ...],
     "matrix": [[[re, im], ...], ...]}

``matrix`` is row-major with rows indexed by output modes.

Config files (``--config FILE``) are flat JSON objects whose keys mirror the
long flag names (``"ph-min"`` or ``"ph_min"``). Flags given on the command
line win over config values.

Exit codes: 0 success, 1 usage error, 2 selftest failure, 3 N above the
simulation cap without ``--analytic``.
"""

from __future__ import annotations

import argparse
import cmath
import csv
import io
import json
import sys
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .analysis import (
    CURVE_NAMES,
    analytic_joint,
    loss_analysis,
    scaling_curves,
    sweep,
)
from .fock import apply_transform, condition_on_pattern, make_product_input
from .network import (
    MultiportSpec,
    circuit_transform,
    eraser_multiport,
    full_circuit,
    input_modes,
)
from .protocol import (
    SIMULATION_CAP,
    ProtocolConfig,
    feedforward_correction,
    run_protocol,
    site_pattern,
    total_probability,
)
from .states import ghz_state, w_state

EXIT_OK, EXIT_USAGE, EXIT_SELFTEST, EXIT_CAPABILITY = 0, 1, 2, 3

DEFAULTS: dict[str, Any] = {
    "n": 3,
    "ph": None,
    "feedforward": False,
    "analytic": False,
    "ph_min": 0.001,
    "ph_max": 0.999,
    "steps": 999,
    "n_max": 30,
    "drop": 1,
    "output": "table",
    "out": None,
}


class UsageError(Exception):
    pass


class CapabilityError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    # defaults are None so that config-file values can fill the gaps
    p.add_argument("--output", choices=("json", "csv", "table"), default=None)
    p.add_argument("--out", metavar="FILE", default=None)
    p.add_argument("--config", metavar="FILE", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wstate", description="Heralded W-state generation via quantum eraser.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="simulate the protocol and report every herald outcome")
    run.add_argument("--n", type=int)
    run.add_argument("--ph", type=float, help="H-arm probability (default (N-1)/N)")
    run.add_argument("--feedforward", action="store_true", default=None)
    run.add_argument("--analytic", action="store_true", default=None)
    run.add_argument("--dump-circuit", metavar="FILE", default=None)
    _add_common(run)

    sw = sub.add_parser("sweep", help="success probability over a p_h grid")
    sw.add_argument("--n", type=int)
    sw.add_argument("--ph-min", type=float)
    sw.add_argument("--ph-max", type=float)
    sw.add_argument("--steps", type=int)
    sw.add_argument("--feedforward", action="store_true", default=None)
    sw.add_argument("--analytic", action="store_true", default=None)
    _add_common(sw)

    cmp_ = sub.add_parser("compare", help="success probability of all protocols versus N")
    cmp_.add_argument("--n-max", type=int)
    _add_common(cmp_)

    loss = sub.add_parser("loss", help="W versus GHZ states after losing qubits")
    loss.add_argument("--n", type=int)
    loss.add_argument("--drop", type=int)
    _add_common(loss)

    st = sub.add_parser("selftest", help="run the invariant checks")
    _add_common(st)
    return parser


def _load_config(path: str | None) -> dict[str, Any]:
    if not path:
        return {}
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict) or any(isinstance(v, (dict, list)) for v in raw.values()):
        raise UsageError("config file must be a flat JSON object")
    cfg = {}
    for key, value in raw.items():
        norm = key.lstrip("-").replace("-", "_")
        if norm not in DEFAULTS:
            raise UsageError(f"unknown config key {key!r}")
        cfg[norm] = value
    return cfg


def resolve(args: argparse.Namespace) -> dict[str, Any]:
    """Merge defaults < config file < command-line flags."""
    cfg = _load_config(getattr(args, "config", None))
    out = {}
    for key, default in DEFAULTS.items():
        flag = getattr(args, key, None)
        out[key] = flag if flag is not None else cfg.get(key, default)
    return out


# -- serialisation -----------------------------------------------------------


def transform_to_json(label: str, transform) -> dict[str, Any]:
    return {
        "label": label,
        "input_modes": [str(m) for m in transform.input_modes],
        "output_modes": [str(m) for m in transform.output_modes],
        "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in transform.matrix],
    }


def _json(meta: dict, data: Any) -> str:
    return json.dumps({"meta": meta, "data": data}, indent=2) + "\n"


def _csv(header: Sequence[str], rows: Sequence[Sequence[Any]], trailer: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    for line in trailer:
        buf.write(f"# {line}\n")
    return buf.getvalue()


def _table(header: Sequence[str], rows: Sequence[Sequence[Any]], trailer: Sequence[str] = ()) -> str:
    def fmt(v):
        return f"{v:.10g}" if isinstance(v, float) else str(v)

    cells = [list(header)] + [[fmt(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines + list(trailer)) + "\n"


def _emit(fmt: str, meta: dict, data: Any, header, rows, trailer=()) -> str:
    if fmt == "json":
        return _json(meta, data)
    if fmt == "csv":
        return _csv(header, rows, trailer)
    return _table(header, rows, trailer)


# -- commands ----------------------------------------------------------------


def _config_meta(opts: dict, keys: Sequence[str]) -> dict:
    return {k: opts[k] for k in keys}


def _analytic_records(n: int, p_h: float, feedforward: bool) -> list[dict]:
    spec = MultiportSpec(n)
    gamma = spec.gamma()
    prob = analytic_joint(n, p_h)
    records = []
    for k in range(1, n + 1):
        col = gamma[:, k - 1]
        phases = [float(cmath.phase(g)) for g in col]
        overlap = abs(sum(g / abs(g) for g in col)) ** 2 / n**2
        corr = feedforward_correction(k, spec, n)
        fixed = abs(sum(g * c / abs(g) for g, c in zip(col, corr.site_phases))) ** 2 / n**2
        records.append(
            {
                "k": k,
                "probability": prob,
                "phases": phases,
                "fidelity_raw": overlap,
                "fidelity_corrected": fixed,
                "accepted": feedforward or k == 1,
            }
        )
    return records


def cmd_run(opts: dict, dump_path: str | None = None) -> str:
    n = int(opts["n"])
    p_h = opts["ph"] if opts["ph"] is not None else (n - 1) / n
    opts = dict(opts, ph=p_h)
    config = ProtocolConfig(n, float(p_h), feedforward=bool(opts["feedforward"]))
    analytic = bool(opts["analytic"])
    if n > SIMULATION_CAP and not analytic:
        raise CapabilityError(
            f"n={n} exceeds the full-simulation cap of {SIMULATION_CAP}; pass --analytic"
        )
    if dump_path:
        stages = full_circuit(config)
        dump = [transform_to_json(s.label, s.transform) for s in stages]
        dump.append(transform_to_json("composed", circuit_transform(stages, n)))
        with open(dump_path, "w") as fh:
            json.dump(dump, fh, indent=2)
    if analytic:
        records = _analytic_records(n, config.p_h, config.feedforward)
    else:
        records = [
            {
                "k": r.k,
                "probability": r.probability,
                "phases": list(r.phases),
                "fidelity_raw": r.fidelity_raw,
                "fidelity_corrected": r.fidelity_corrected,
                "accepted": r.accepted,
            }
            for r in run_protocol(config)
        ]
    total = float(sum(r["probability"] for r in records if r["accepted"]))
    mode = "analytic" if analytic else "simulation"
    meta = {
        "command": "run",
        "mode": mode,
        "version": __version__,
        "config": _config_meta(opts, ("n", "ph", "feedforward", "analytic")),
    }
    data = {"outcomes": records, "total_success_probability": total}
    header = ["k", "probability", "fidelity_raw", "fidelity_corrected", "accepted", "phases", "mode"]
    rows = [
        [r["k"], r["probability"], r["fidelity_raw"], r["fidelity_corrected"], r["accepted"],
         ";".join(repr(p) for p in r["phases"]), mode]
        for r in records
    ]
    rows.append(["total", total, "", "", "", "", mode])
    return _emit(opts["output"], meta, data, header, rows)


def cmd_sweep(opts: dict) -> str:
    n, lo, hi, steps = int(opts["n"]), float(opts["ph_min"]), float(opts["ph_max"]), int(opts["steps"])
    if steps < 1:
        raise UsageError("--steps must be >= 1")
    if not (0.0 < lo <= hi < 1.0) or (steps > 1 and lo == hi):
        raise UsageError("need 0 < ph-min < ph-max < 1")
    if steps == 1 and lo != hi:
        raise UsageError("a single-step sweep needs ph-min == ph-max")
    analytic = bool(opts["analytic"])
    if n > SIMULATION_CAP and not analytic:
        raise CapabilityError(
            f"n={n} exceeds the full-simulation cap of {SIMULATION_CAP}; pass --analytic"
        )
    ProtocolConfig(n, lo)  # validates n
    grid = np.linspace(lo, hi, steps)
    samples = sweep(n, grid, bool(opts["feedforward"]), "analytic" if analytic else "simulate")
    best = max(samples, key=lambda s: s[1])
    mode = "analytic" if analytic else "simulation"
    meta = {
        "command": "sweep",
        "mode": mode,
        "version": __version__,
        "config": _config_meta(opts, ("n", "ph_min", "ph_max", "steps", "feedforward", "analytic")),
    }
    data = {
        "samples": [{"p_h": p, "probability": v} for p, v in samples],
        "argmax_ph": best[0],
        "max_probability": best[1],
    }
    summary = [f"argmax_ph={best[0]!r},max_probability={best[1]!r}"]
    return _emit(opts["output"], meta, data, ["p_h", "probability"], samples, summary)


def cmd_compare(opts: dict) -> str:
    n_max = int(opts["n_max"])
    if n_max < 2:
        raise UsageError("--n-max must be >= 2")
    curves = scaling_curves(n_max)
    meta = {"command": "compare", "mode": "analytic", "version": __version__,
            "config": _config_meta(opts, ("n_max",))}
    data = {c.name: [{"n": n, "probability": p} for n, p in c.points] for c in curves}
    rows = [[n] + [c.at(n) for c in curves] for n in range(2, n_max + 1)]
    return _emit(opts["output"], meta, data, ["N", *CURVE_NAMES], rows)


def cmd_loss(opts: dict) -> str:
    n, drop = int(opts["n"]), int(opts["drop"])
    if n < 2:
        raise UsageError("--n must be >= 2")
    if not 1 <= drop < n:
        raise UsageError("--drop must satisfy 1 <= drop < n")
    sites = list(range(n - drop + 1, n + 1))
    entries = {}
    for name, ket in (("W", w_state(n)), ("GHZ", ghz_state(n))):
        rho, rep = loss_analysis(ket, sites)
        entries[name] = {
            "remaining_sites": list(rep.remaining),
            "all_zeros_weight": rep.all_zeros_weight,
            "one_excitation_weight": rep.one_excitation_weight,
            "w_block_fidelity": rep.w_block_fidelity,
            "w_overlap": rep.w_overlap,
            "ghz_mixture_distance": rep.ghz_mixture_distance,
            "diagonal": [float(x) for x in np.real(np.diag(rho.matrix))],
        }
    meta = {"command": "loss", "mode": "exact", "version": __version__,
            "config": _config_meta(opts, ("n", "drop"))}
    header = ["input", "all_zeros_weight", "one_excitation_weight", "w_block_fidelity",
              "w_overlap", "ghz_mixture_distance"]
    rows = [[name] + [e[h] for h in header[1:]] for name, e in entries.items()]
    return _emit(opts["output"], meta, entries, header, rows)


# -- selftest ----------------------------------------------------------------

MultiportFactory = Callable[[int], MultiportSpec]


def selftest_checks(
    ns: Sequence[int] = (2, 3, 4, 5), multiport: MultiportFactory | None = None
) -> dict[str, dict[int, bool]]:
    """Invariant matrix: check name -> {N: passed}."""
    multiport = multiport or MultiportSpec
    names = (
        "unitarity",
        "norm_preserved",
        "probability_sum",
        "equiprobable_heralds",
        "fidelity_raw",
        "fidelity_corrected",
        "analytic_no_ff",
        "analytic_ff",
    )
    results: dict[str, dict[int, bool]] = {name: {} for name in names}
    for n in ns:
        p_h = (n - 1) / n
        try:
            spec = multiport(n)
            config = ProtocolConfig(n, p_h, multiport=spec, feedforward=True)
            stages = full_circuit(config)
            composed = circuit_transform(stages, n)
            results["unitarity"][n] = composed.is_isometry() and eraser_multiport(spec).is_isometry()
        except ValueError:
            for name in names:
                results[name][n] = False
            continue

        state = make_product_input(input_modes(n))
        for st in stages:
            state = apply_transform(state, st.transform)
        results["norm_preserved"][n] = abs(state.norm_squared() - 1) <= 1e-10

        records = run_protocol(config)
        probs = [r.probability for r in records]
        _, sited = condition_on_pattern(state, site_pattern(n))
        results["probability_sum"][n] = abs(sum(probs) - sited) <= 1e-10
        results["equiprobable_heralds"][n] = max(probs) - min(probs) <= 1e-12
        results["fidelity_raw"][n] = abs(records[0].fidelity_raw - 1) <= 1e-9
        results["fidelity_corrected"][n] = all(abs(r.fidelity_corrected - 1) <= 1e-9 for r in records)
        expected = (n - 1) ** (n - 1) / n ** (n + 1)
        results["analytic_no_ff"][n] = abs(records[0].probability - expected) <= 1e-10
        results["analytic_ff"][n] = abs(total_probability(records) - n * expected) <= 1e-10
    return results


def render_selftest(results: dict[str, dict[int, bool]]) -> str:
    ns = sorted({n for row in results.values() for n in row})
    header = ["check", *[f"N={n}" for n in ns]]
    rows = [[name] + ["pass" if row.get(n) else "FAIL" for n in ns] for name, row in results.items()]
    return _table(header, rows)


def cmd_selftest(opts: dict) -> tuple[str, bool]:
    results = selftest_checks()
    ok = all(all(row.values()) for row in results.values())
    if opts["output"] == "json":
        meta = {"command": "selftest", "mode": "simulation", "version": __version__, "config": {}}
        text = _json(meta, {"passed": ok, "checks": {k: {str(n): v for n, v in row.items()}
                                                     for k, row in results.items()}})
    else:
        text = render_selftest(results) + ("all checks passed\n" if ok else "selftest FAILED\n")
    return text, ok


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = resolve(args)
        ok = True
        if args.command == "run":
            text = cmd_run(opts, args.dump_circuit)
        elif args.command == "sweep":
            text = cmd_sweep(opts)
        elif args.command == "compare":
            text = cmd_compare(opts)
        elif args.command == "loss":
            text = cmd_loss(opts)
        else:
            text, ok = cmd_selftest(opts)
    except CapabilityError as exc:
        print(f"wstate: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except (UsageError, ValueError) as exc:
        print(f"wstate: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if opts["out"]:
        with open(opts["out"], "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if ok else EXIT_SELFTEST


if __name__ == "__main__":
    sys.exit(main())
