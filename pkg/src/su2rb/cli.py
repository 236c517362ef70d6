"""Command-line interface: campaigns, tables, matrices, predictions and frame complexity."""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from .analysis import (QUBIT_SCHEMES, FitError, analyze, qubit_frame_complexity, variance_table_j,
                       variance_table_k)
from .noise import MEAS_KINDS, NOISE_KINDS, NoiseModel, SpamModel, gate_error_channel, gate_error_rates
from .protocols import PROTOCOLS, ExperimentPlan, FrameConstructionError, FrameSpec, NumericalHealthError, estimate
from .superop import average_fidelity, exact_quality_params, f_inverse, f_matrix, m_matrix
from .wigner import DomainError, HalfInt

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

DEFAULT_LENGTHS = (1, 2, 4, 8, 16, 32, 64)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# serialization

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _to_json(obj) -> str:
    """JSON with every float written to 17 significant digits; non-finite floats become null."""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (float, np.floating)):
        return _fmt(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _to_json(obj.tolist())
    if isinstance(obj, dict):
        items = (f"{json.dumps(str(k))}: {_to_json(v)}" for k, v in obj.items())
        return "{" + ", ".join(items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_to_json(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class CampaignConfig:
    """Serialized campaign; spin is carried as ``twice_j``.

    ``shots`` is "infinite" or a positive integer.  ``noise`` names the gate
    noise kind; ``gamma`` is its strength.  ``twice_ell`` optionally picks the
    level of physical-SPAM protocols.
    """

    twice_j: int
    protocol: str
    gamma: float
    phi: float
    meas_kind: str
    sequence_lengths: tuple = DEFAULT_LENGTHS
    num_circuits: int = 10000
    shots: object = "infinite"
    seed: int = 0
    noise: str = "coherent_jz2"
    frame_target: str = "irrep"
    circuits: str = "shared"
    twice_ell: int | None = None

    REQUIRED = ("twice_j", "protocol", "gamma", "phi", "meas_kind")

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        missing = [k for k in cls.REQUIRED if k not in d]
        if missing:
            raise ConfigError(f"missing config keys: {', '.join(missing)}")
        d = dict(d)
        if "sequence_lengths" in d:
            d["sequence_lengths"] = tuple(d["sequence_lengths"])
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sequence_lengths"] = list(self.sequence_lengths)
        return d

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        def is_int(x):
            return isinstance(x, int) and not isinstance(x, bool)

        def is_num(x):
            return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)

        need(is_int(self.twice_j) and self.twice_j >= 1, "twice_j must be an integer >= 1")
        need(self.protocol in PROTOCOLS, f"protocol must be one of {', '.join(PROTOCOLS)}")
        need(is_num(self.gamma) and self.gamma >= 0, "gamma must be a non-negative number")
        need(is_num(self.phi), "phi must be a number")
        need(self.meas_kind in MEAS_KINDS, f"meas_kind must be one of {', '.join(MEAS_KINDS)}")
        need(self.noise in NOISE_KINDS and self.noise != "custom_kraus",
             "noise must be none, coherent_jz2 or dephasing")
        need(all(is_int(m) for m in self.sequence_lengths), "sequence_lengths must be integers")
        need(is_int(self.num_circuits) and self.num_circuits >= 1, "num_circuits must be a positive integer")
        need(self.shots == "infinite" or (is_int(self.shots) and self.shots >= 1),
             "shots must be 'infinite' or a positive integer")
        need(is_int(self.seed) and 0 <= self.seed < 2 ** 64, "seed must be a 64-bit unsigned integer")
        need(self.frame_target in ("irrep", "rank1"), "frame_target must be irrep or rank1")
        need(self.circuits in ("shared", "independent"), "circuits must be shared or independent")
        need(self.twice_ell is None or is_int(self.twice_ell), "twice_ell must be an integer")

    def to_plan(self) -> ExperimentPlan:
        try:
            return ExperimentPlan(
                j=HalfInt(self.twice_j), protocol=self.protocol,
                sequence_lengths=self.sequence_lengths, num_circuits=self.num_circuits,
                shots=None if self.shots == "infinite" else self.shots,
                noise=NoiseModel(self.noise, float(self.gamma)),
                spam=SpamModel(phi=float(self.phi), meas_kind=self.meas_kind),
                seed=self.seed, frame_spec=FrameSpec(self.frame_target),
                ell=None if self.twice_ell is None else HalfInt(self.twice_ell),
                circuits=self.circuits)
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def load_config(path) -> CampaignConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        return CampaignConfig.from_dict(raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# campaigns

DECAY_COLUMNS = ("k", "m", "d_km", "stderr", "n_circuits")


def _decay_csv(data) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DECAY_COLUMNS)
    for r in data.records():
        w.writerow([r["k"], r["m"], _fmt(r["d_km"]), _fmt(r["stderr"]), r["n_circuits"]])
    return buf.getvalue()


def run_campaign(config: CampaignConfig, out_root, threads: int | None = None, force: bool = False):
    """Simulate, fit and write ``decays.csv``, ``result.json`` and ``probabilities.json``.

    Returns ``(output directory, RBResult)``.
    """
    plan = config.to_plan()
    out = Path(out_root) / config.digest()
    if out.exists() and any(out.iterdir()) and not force:
        raise FileExistsError(f"{out} already holds results; pass --force to overwrite")
    t0 = time.perf_counter()
    table = estimate(plan, threads=threads)
    data = table.decays()
    fit_error = None
    try:
        result = analyze(data)
    except FitError as exc:
        fit_error = str(exc)
        result = None
    wall = time.perf_counter() - t0

    out.mkdir(parents=True, exist_ok=True)
    (out / "decays.csv").write_text(_decay_csv(data))
    body = result.to_dict() if result is not None else {"fit_error": fit_error}
    body.update({
        "config": config.to_dict(),
        "seed": config.seed,
        "metadata": table.metadata,
        "wall_time": wall,
    })
    (out / "result.json").write_text(_to_json(body) + "\n")
    raw = {
        "levels": table.metadata["levels"],
        "matrices": {str(m): table.matrix(m) for m in table.sequence_lengths},
    }
    if table.weighted:
        raw["weighted"] = {str(m): table.weighted[m] / table.counts[m] for m in table.sequence_lengths}
    (out / "probabilities.json").write_text(_to_json(raw) + "\n")
    if fit_error is not None:
        raise NumericalHealthError(fit_error)
    return out, result


# ---------------------------------------------------------------------------
# table-style subcommands

def _csv_rows(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def tables_csv(which: str, twice_j: int) -> str:
    cols = ["chirb", "r1rb", "sschirb", "ssr1rb"]
    if which == "k":
        t = variance_table_k(Fraction(twice_j, 2))
        return _csv_rows(["k"] + cols, [[k] + list(r) for k, r in enumerate(t)])
    if which == "j":
        t = variance_table_j(Fraction(twice_j, 2))
        return _csv_rows(["twice_j"] + cols, [[tj] + list(r) for tj, r in enumerate(t)])
    rows = []
    for s in QUBIT_SCHEMES:
        ns = (1, 2, 3) if s.startswith("nqubit") else (None,)
        for n in ns:
            c = qubit_frame_complexity(s, n)
            rows.append([s, "" if n is None else n, c.n_group, str(c.uniform_metric), str(c.optimal_metric)])
    return _csv_rows(["scheme", "n", "n_group", "uniform_metric", "optimal_metric"], rows)


def matrices_csv(twice_j: int) -> str:
    j = Fraction(twice_j, 2)
    rows = []
    mats = (("M", m_matrix(j)), ("F", f_matrix(j, normalized=True)), ("F_inv", f_inverse(j)[0]))
    for name, mat in mats:
        for r, row in enumerate(mat):
            rows.append([name, r] + [float(v) for v in row])
    return _csv_rows(["matrix", "row"] + [f"c{i}" for i in range(twice_j + 1)], rows)


def predict_csv(twice_j: int, noise: str, gamma: float) -> str:
    j = Fraction(twice_j, 2)
    model = NoiseModel(noise, gamma)
    f = exact_quality_params(gate_error_channel(j, model))
    p = gate_error_rates(j, model)
    rows = [[k, float(f[k]), float(p[k])] for k in range(twice_j + 1)]
    rows.append(["average_fidelity", float(average_fidelity(j, f)), ""])
    return _csv_rows(["k", "f_k", "p_k"], rows)


def complexity_csv(scheme: str, n: int | None) -> str:
    c = qubit_frame_complexity(scheme, n)
    coeffs = ";".join(f"{v}x{mult}" for v, mult in c.coefficients.items())
    return _csv_rows(["scheme", "n_group", "coefficients", "uniform_metric", "optimal_metric"],
                     [[scheme, c.n_group, coeffs, str(c.uniform_metric), str(c.optimal_metric)]])


# ---------------------------------------------------------------------------
# entry point

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="su2rb", description="SU(2) synthetic randomized benchmarking toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a campaign from a JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default="results")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    run.add_argument("--force", action="store_true", help="overwrite an existing results directory")

    tab = sub.add_parser("tables", help="zero-noise variance and frame-complexity tables")
    tab.add_argument("--twice-j", type=int, default=7)
    tab.add_argument("--table", choices=("k", "j", "complexity"), default="k")
    tab.add_argument("--out")

    mat = sub.add_parser("matrices", help="M, normalized F and its inverse")
    mat.add_argument("--twice-j", type=int, default=7)
    mat.add_argument("--out")

    pre = sub.add_parser("predict", help="exact f_k and p_k of a gate-noise model")
    pre.add_argument("--twice-j", type=int, default=7)
    pre.add_argument("--noise", choices=("none", "coherent_jz2", "dephasing"), default="coherent_jz2")
    pre.add_argument("--gamma", type=float, default=0.04)
    pre.add_argument("--out")

    cx = sub.add_parser("complexity", help="qubit frame sample complexity")
    cx.add_argument("--scheme", choices=QUBIT_SCHEMES, required=True)
    cx.add_argument("--n", type=int)
    cx.add_argument("--out")
    return ap


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _error(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg = CampaignConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
            out, _ = run_campaign(cfg, args.out, threads=args.threads, force=args.force)
            sys.stdout.write(f"{out}\n")
        else:
            if getattr(args, "twice_j", 1) < 0 or (args.command != "tables" and getattr(args, "twice_j", 1) < 1):
                raise ConfigError("--twice-j out of range")
            if args.command == "tables":
                _emit(tables_csv(args.table, args.twice_j), args.out)
            elif args.command == "matrices":
                _emit(matrices_csv(args.twice_j), args.out)
            elif args.command == "predict":
                _emit(predict_csv(args.twice_j, args.noise, args.gamma), args.out)
            else:
                _emit(complexity_csv(args.scheme, args.n), args.out)
    except (ConfigError, DomainError, FileExistsError) as exc:
        return _error("config", str(exc), EXIT_CONFIG)
    except (NumericalHealthError, FrameConstructionError) as exc:
        return _error("numerical", str(exc), EXIT_NUMERICAL)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
