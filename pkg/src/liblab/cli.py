"""Command-line front end: experiment specs, orchestration, artifacts.

    liblab evolve --preset delta_zero --t 1 --out m.csv
    liblab verify --preset raised_cosine --t-max 8 --out report.json
    liblab oracle-mc --config mc.json

One experiment = one ExperimentSpec, supplied either as a JSON file
(--config) or assembled from inline flags.  Outputs are deterministic for
a fixed spec: JSON artifacts carry {meta, provenance, data} with the
volatile timestamp confined to meta, CSV artifacts carry the same
provenance in leading '#' comment lines.  Exit codes: 0 success,
1 validation failure, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .entropy import calibrate_Z, chi_orb, i_star, verify_identity
from .errors import LiblabError, SpecValidationError, TooCloseToSpectrum
from .fubm import moment_flow, moments_of
from .loewner import make_flow
from .matrix_oracle import MatrixModelConfig, simulate_spectrum
from .measures import DEFAULT_GRID, TraceParams, measure_from_spec
from .transforms import pde_residual_G

COMMANDS = ("evolve", "istar", "chiorb", "verify", "moments", "oracle-mc", "pde-check")
CSV_COMMANDS = ("evolve", "moments", "oracle-mc")
N_MOMENT_COLUMNS = 16

# JSON configs may use the inline-flag spellings
_KEY_ALIASES = {"tauP": "tau_p", "tauQ": "tau_q", "preset": "measure"}


@dataclass
class ExperimentSpec:
    """Complete, serializable description of one experiment run."""

    command: str
    tau_p: float = 0.5
    tau_q: float = 0.5
    measure: object = "haar_half"  # preset name or measure dict
    times: Optional[List[float]] = None
    t: Optional[float] = None
    t_max: float = 8.0
    grid: int = DEFAULT_GRID
    tol: float = 1e-6
    seed: int = 0
    out: Optional[str] = None
    format: str = "json"
    # matrix-oracle knobs
    n: int = 500
    dt: float = 1e-2
    samples: int = 8
    initial: str = "free"
    # finite-difference step for pde-check
    fd_step: float = 1e-3

    def validate(self) -> "ExperimentSpec":
        if self.command not in COMMANDS:
            raise SpecValidationError(
                f"unknown command {self.command!r}; choose from {', '.join(COMMANDS)}"
            )
        if self.format not in ("json", "csv"):
            raise SpecValidationError("format must be 'json' or 'csv'")
        if self.format == "csv" and self.command not in CSV_COMMANDS:
            raise SpecValidationError(
                f"command {self.command!r} emits a scalar report; use --format json"
            )
        try:
            self.params()  # trace fractions in range
        except Exception as exc:
            raise SpecValidationError(str(exc)) from None
        if self.times is not None:
            ts = [float(x) for x in self.times]
            if any(t < 0 for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
                raise SpecValidationError("times must be nonnegative, strictly increasing")
            self.times = ts
        if self.tol <= 0 or self.t_max <= 0 or self.fd_step <= 0:
            raise SpecValidationError("tol, t_max and fd_step must be positive")
        if self.grid < 64 or self.grid & (self.grid - 1):
            raise SpecValidationError("grid must be a power of two, at least 64")
        return self

    def params(self) -> TraceParams:
        return TraceParams(self.tau_p, self.tau_q)

    def initial_measure(self):
        return measure_from_spec(self.measure, self.params(), self.grid)

    def resolved_times(self, default: float = 1.0) -> List[float]:
        if self.times is not None:
            return self.times
        return [self.t if self.t is not None else default]

    def canonical(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True, separators=(",", ":"))


def spec_from_dict(raw: dict) -> ExperimentSpec:
    """Build and validate a spec from a JSON object; unknown keys rejected."""
    known = {f.name for f in dataclasses.fields(ExperimentSpec)}
    merged = {}
    for key, value in raw.items():
        key = _KEY_ALIASES.get(key, key)
        if key not in known:
            raise SpecValidationError(f"unknown config key {key!r}")
        merged[key] = value
    if "command" not in merged:
        raise SpecValidationError("config is missing the 'command' key")
    return ExperimentSpec(**merged).validate()


# ---------------------------------------------------------------------------
# command handlers
# ---------------------------------------------------------------------------


def _moment_header() -> List[str]:
    return [f"moment_{k}" for k in range(1, N_MOMENT_COLUMNS + 1)]


def _run_evolve(spec: ExperimentSpec):
    params = spec.params()
    flow = make_flow(spec.initial_measure(), params)
    rows = []
    for t in spec.resolved_times():
        m = flow.measure_at(t)
        c = 2.0 * m.cos_moments(N_MOMENT_COLUMNS)
        rows.append([t, m.interior_mass, m.atom_zero, m.atom_pi, *c[1:]])
    header = ["t", "interior_mass", "atom_zero", "atom_pi", *_moment_header()]
    return {
        "data": {"columns": header, "rows": rows},
        "csv": (header, rows),
        "prov": {"loewner": dict(flow.diagnostics)},
    }


def _run_moments(spec: ExperimentSpec):
    mv = moments_of(spec.initial_measure())
    rows = []
    recursion_t = 0.0
    for t in spec.resolved_times():
        # liberation time t corresponds to recursion time 2t
        mv = moment_flow(mv, 2.0 * t - recursion_t)
        recursion_t = 2.0 * t
        rows.append([t, *mv.c[1 : N_MOMENT_COLUMNS + 1]])
    header = ["t", *_moment_header()]
    return {"data": {"columns": header, "rows": rows}, "csv": (header, rows), "prov": {}}


def _run_istar(spec: ExperimentSpec):
    value, details = i_star(
        spec.initial_measure(),
        spec.params(),
        t_max=spec.t_max,
        tol=spec.tol,
        return_details=True,
    )
    data = {
        "i_star": value,
        "error": details["error"],
        "probe": details["probe"],
        "phi_samples": details["samples"],
    }
    return {"data": data, "prov": {}}


def _run_chiorb(spec: ExperimentSpec):
    params = spec.params()
    value = chi_orb(spec.initial_measure(), params)
    return {"data": {"chi_orb": value, "Z": calibrate_Z(params)}, "prov": {}}


def _run_verify(spec: ExperimentSpec):
    report = verify_identity(
        spec.initial_measure(), spec.params(), t_max=spec.t_max, tol=spec.tol
    )
    return {"data": dataclasses.asdict(report) | {"holds": report.holds}, "prov": {}}


def _run_oracle_mc(spec: ExperimentSpec):
    times = spec.resolved_times()
    config = MatrixModelConfig(
        n=spec.n,
        tau_p=spec.tau_p,
        tau_q=spec.tau_q,
        dt=spec.dt,
        t_end=times[-1],
        samples=spec.samples,
        seed=spec.seed,
    )
    result = simulate_spectrum(config, initial=spec.initial, times=times)
    header = ["t", "eigenvalue_index", "value"]
    rows = list(result.iter_csv_rows())
    data = {
        "times": list(result.times),
        "eigenvalues": [result.pooled(i).tolist() for i in range(len(result.times))],
    }
    return {
        "data": data,
        "csv": (header, rows),
        "prov": {"unitarity_drift": result.unitarity_drift},
    }


def _pde_z_grid() -> np.ndarray:
    # fine spacing keeps the centered z-difference error well under the
    # time-derivative error; heights chosen clear of the spectrum [0, 1]
    re = np.linspace(-0.5, 1.5, 51)
    z = np.concatenate([re + 0.75j, re + 1.1j])
    for zk in z:
        x = min(max(zk.real, 0.0), 1.0)
        if abs(zk - x) < 0.2:
            raise TooCloseToSpectrum(f"z = {zk} is within 0.2 of the spectrum [0, 1]")
    return z


def _run_pde_check(spec: ExperimentSpec):
    params = spec.params()
    flow = make_flow(spec.initial_measure(), params)
    t0 = spec.t if spec.t is not None else 1.0
    h = spec.fd_step
    t_grid = np.array([t0 - h, t0, t0 + h])
    if t_grid[0] <= 0:
        raise SpecValidationError("pde-check needs t - fd_step > 0")
    z = _pde_z_grid()
    g = np.stack([flow.G(t, z) for t in t_grid])
    # two horizontal lines; differentiate each separately (uniform spacing per line)
    m = len(z) // 2
    reps = [
        pde_residual_G(g[:, :m], t_grid, z[:m], params),
        pde_residual_G(g[:, m:], t_grid, z[m:], params),
    ]
    data = {
        "t": t0,
        "fd_step": h,
        "n_z": len(z),
        "max_residual": max(r["max"] for r in reps),
        "mean_residual": float(np.mean([r["mean"] for r in reps])),
    }
    return {"data": data, "prov": {"loewner": dict(flow.diagnostics)}}


_HANDLERS = {
    "evolve": _run_evolve,
    "istar": _run_istar,
    "chiorb": _run_chiorb,
    "verify": _run_verify,
    "moments": _run_moments,
    "oracle-mc": _run_oracle_mc,
    "pde-check": _run_pde_check,
}


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _sig17(value):
    """Round-trip-exact float serialization (17 significant digits)."""
    if isinstance(value, float):
        return float(f"{value:.17g}") if math.isfinite(value) else value
    if isinstance(value, (np.floating,)):
        return _sig17(float(value))
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, dict):
        return {k: _sig17(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sig17(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_sig17(v) for v in value.tolist()]
    return value


def _provenance(spec: ExperimentSpec, extras: dict) -> dict:
    canonical = spec.canonical()
    prov = {
        "spec": json.loads(canonical),
        "spec_hash": hashlib.sha256(canonical.encode()).hexdigest(),
        "versions": {
            "liblab": __version__,
            "numpy": np.__version__,
            "python": "%d.%d.%d" % sys.version_info[:3],
        },
    }
    prov.update(extras)
    return _sig17(prov)


def _emit_json(spec: ExperimentSpec, data: dict, prov: dict) -> str:
    payload = {
        "meta": {"timestamp": datetime.now(timezone.utc).isoformat()},
        "provenance": prov,
        "data": _sig17(data),
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _emit_csv(spec: ExperimentSpec, csv_payload, prov: dict) -> str:
    header, rows = csv_payload
    lines = [
        f"# liblab {spec.command}",
        f"# timestamp: {datetime.now(timezone.utc).isoformat()}",
        f"# provenance: {json.dumps(prov, sort_keys=True, separators=(',', ':'))}",
        ",".join(header),
    ]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
                cells.append(str(int(v)))
            else:
                cells.append(f"{float(v):.17g}")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def run(spec: ExperimentSpec) -> str:
    """Execute a validated spec; return the artifact text (also written to spec.out)."""
    result = _HANDLERS[spec.command](spec)
    prov = _provenance(spec, result.get("prov", {}))
    if spec.format == "csv":
        text = _emit_csv(spec, result["csv"], prov)
    else:
        text = _emit_json(spec, result["data"], prov)
    if spec.out:
        with open(spec.out, "w") as fh:
            fh.write(text)
    return text


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on bad flags, not argparse's default 2
        raise SpecValidationError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="liblab", description=__doc__, add_help=True)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON experiment spec (exclusive with inline flags)")
    p.add_argument("--preset", help="initial measure preset name")
    p.add_argument("--tauP", type=float, dest="tau_p")
    p.add_argument("--tauQ", type=float, dest="tau_q")
    p.add_argument("--t", type=float)
    p.add_argument("--times", help="comma-separated snapshot times")
    p.add_argument("--t-max", type=float, dest="t_max")
    p.add_argument("--grid", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv"))
    p.add_argument("--n", type=int, help="matrix size for oracle-mc")
    p.add_argument("--dt", type=float, help="Euler step for oracle-mc")
    p.add_argument("--samples", type=int, help="Monte Carlo replicas")
    p.add_argument("--initial", choices=("free", "equal"))
    p.add_argument("--fd-step", type=float, dest="fd_step")
    p.add_argument("--amplitude", type=float, help="raised_cosine amplitude")
    return p


def _spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    inline = {}
    for key in (
        "tau_p",
        "tau_q",
        "t",
        "t_max",
        "grid",
        "tol",
        "seed",
        "out",
        "format",
        "n",
        "dt",
        "samples",
        "initial",
        "fd_step",
    ):
        val = getattr(args, key)
        if val is not None:
            inline[key] = val
    if args.preset is not None:
        if args.amplitude is not None:
            inline["measure"] = {"kind": args.preset, "amplitude": args.amplitude}
        else:
            inline["measure"] = args.preset
    elif args.amplitude is not None:
        raise SpecValidationError("--amplitude requires --preset")
    if args.times is not None:
        try:
            inline["times"] = [float(x) for x in args.times.split(",") if x.strip()]
        except ValueError:
            raise SpecValidationError(f"cannot parse --times {args.times!r}") from None

    if args.config:
        if inline:
            raise SpecValidationError("--config cannot be combined with inline flags")
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            raise SpecValidationError(f"cannot read config: {exc}") from None
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecValidationError(
                f"{args.config}:{exc.lineno}:{exc.colno}: {exc.msg}"
            ) from None
        if not isinstance(raw, dict):
            raise SpecValidationError("config must be a JSON object")
        if raw.get("command", args.command) != args.command:
            raise SpecValidationError(
                f"config command {raw['command']!r} disagrees with {args.command!r}"
            )
        raw["command"] = args.command
        return spec_from_dict(raw)

    inline["command"] = args.command
    return spec_from_dict(inline)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        spec = _spec_from_args(args)
    except SpecValidationError as exc:
        print(f"liblab: validation error: {exc}", file=sys.stderr)
        return 1
    try:
        text = run(spec)
    except SpecValidationError as exc:
        print(f"liblab: validation error: {exc}", file=sys.stderr)
        return 1
    except LiblabError as exc:
        print(f"liblab: numerical failure: {exc}", file=sys.stderr)
        print(f"liblab: offending spec: {spec.canonical()}", file=sys.stderr)
        return 2
    if not spec.out:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
