"""Command-line experiment runner.

Every subcommand turns its flags into an :class:`ExperimentSpec`, runs it and
writes CSV/JSON artifacts plus ``manifest.json`` into the output directory.
Artifacts are byte-stable: floats are written with 17 significant digits and
parallel results are merged in task-key order. The manifest holds wall time
and versions, so it is the one file that changes between identical runs.

Exit status: 0 when every verdict is consistent or converged, 2 when any
verdict is not, 1 on an operational error (bad config, unwritable output).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__, asym, chromatic, coeffs, fourier, limits, phase
from ._backend import BACKEND
from .coeffs import ConfigError
from .recurrence import RecurrenceOverflow, eval_nonsymmetric, eval_symmetric, fmt

COMMANDS = ("check-conditions", "eval", "phase-trace", "lemma-verify", "fourier-cm", "fourier-fkm",
            "limits", "uniformity", "conjecture", "chromatic")
EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2


class OperationalError(RuntimeError):
    pass


# -- serialisation -----------------------------------------------------------

def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return fmt(x)


def dumps(obj, indent=0):
    """JSON text with fixed 17-digit floats and insertion-ordered keys."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_, int, float, np.integer, np.floating)):
        return _num(obj)
    if isinstance(obj, complex):
        return dumps({"re": obj.real, "im": obj.imag}, indent)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray, complex)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


# -- configuration -----------------------------------------------------------

_POWER = re.compile(r"^power-p([0-9.eE+-]+)$")
_FREUD = re.compile(r"^freud-b([0-9.eE+-]+)$")


def load_yaml(path):
    try:
        with open(path) as fh:
            return yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else str(path)
        raise ConfigError(where, getattr(exc, "problem", None) or str(exc)) from None
    except OSError as exc:
        raise OperationalError(f"cannot read {path}: {exc.strerror}") from None


def builtin_families():
    fams = coeffs.corpus() + [coeffs.hermite()]
    return {f.label: f for f in fams}


def resolve_family(spec, prefix="family"):
    """A family from a built-in label, a config mapping or a YAML file path."""
    if isinstance(spec, coeffs.CoefficientFamily):
        return spec
    if isinstance(spec, dict):
        return coeffs.CoefficientFamily.from_config(spec, prefix)
    if not isinstance(spec, str):
        raise ConfigError(prefix, f"expected a name or mapping, got {spec!r}")
    known = builtin_families()
    if spec in known:
        return known[spec]
    m = _POWER.match(spec)
    if m:
        return coeffs.power_law(float(m.group(1)))
    m = _FREUD.match(spec)
    if m:
        return coeffs.freud(float(m.group(1)))
    if os.path.exists(spec):
        doc = load_yaml(spec)
        if isinstance(doc, dict) and "family" in doc:
            doc = doc["family"]
        return resolve_family(doc, prefix)
    raise ConfigError(prefix, f"unknown family {spec!r}; expected one of {sorted(known)} or a config file")


def resolve_families(spec):
    if spec in (None, "corpus"):
        return coeffs.corpus()
    return [resolve_family(spec)]


def parse_grid(text, key):
    """'a:b:n' (inclusive linspace) or a comma list."""
    if isinstance(text, (list, tuple)):
        vals = text
    else:
        text = str(text)
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ConfigError(key, "range grids look like start:stop:count")
            try:
                a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
            except ValueError:
                raise ConfigError(key, f"cannot parse {text!r}") from None
            if n < 1:
                raise ConfigError(key, "count must be positive")
            return [float(v) for v in np.linspace(a, b, n)]
        vals = text.split(",")
    try:
        return [float(v) for v in vals]
    except (TypeError, ValueError):
        raise ConfigError(key, f"cannot parse {text!r}") from None


# -- experiment spec ---------------------------------------------------------

@dataclass
class ExperimentSpec:
    command: str
    family: object = None
    params: dict = field(default_factory=dict)
    out: str = "out"
    workers: int = 1

    def to_dict(self):
        fam = self.family
        if isinstance(fam, coeffs.CoefficientFamily):
            fam = fam.to_config()
        return {"command": self.command, "family": fam, "params": dict(sorted(self.params.items())),
                "out": self.out, "workers": self.workers}

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("spec", "expected a mapping")
        for key in doc:
            if key not in ("command", "family", "params", "out", "workers"):
                raise ConfigError(f"spec.{key}", "unknown key")
        cmd = doc.get("command")
        if cmd not in COMMANDS:
            raise ConfigError("spec.command", f"expected one of {COMMANDS}, got {cmd!r}")
        params = doc.get("params") or {}
        if not isinstance(params, dict):
            raise ConfigError("spec.params", "expected a mapping")
        workers = doc.get("workers", 1)
        if not isinstance(workers, int) or workers < 1:
            raise ConfigError("spec.workers", "expected a positive integer")
        return cls(cmd, doc.get("family"), params, str(doc.get("out", "out")), workers)


def _mapper(workers, n_tasks):
    if workers > 1 and n_tasks > 1:
        pool = ProcessPoolExecutor(max_workers=min(workers, n_tasks))
        return pool, pool.map
    return None, map


def _get(params, key, default, kind=float):
    v = params.get(key, default)
    if v is None:
        return None
    try:
        if kind is int:
            if isinstance(v, float) and v.is_integer():
                v = int(v)
            if isinstance(v, bool) or not isinstance(v, int):
                raise TypeError
            return v
        if kind is float:
            if isinstance(v, bool):
                raise TypeError
            return float(v)
        return kind(v)
    except (TypeError, ValueError):
        raise ConfigError(f"params.{key}", f"expected {kind.__name__}, got {v!r}") from None


# -- command bodies: each returns (artifacts, ok) ------------------------------

def _conditions_task(args):
    fam, horizon = args
    return coeffs.check_conditions(fam, horizon).to_dict()


def cmd_check_conditions(spec):
    fams = resolve_families(spec.family)
    horizon = _get(spec.params, "N", 10_000, int)
    pool, mapper = _mapper(spec.workers, len(fams))
    try:
        reports = list(mapper(_conditions_task, [(f, horizon) for f in fams]))
    finally:
        if pool:
            pool.shutdown()
    ok = all(all(r["status"] == "consistent" for r in rep["conditions"].values()) for rep in reports)
    return {"conditions.json": dumps({"horizon": horizon, "families": reports})}, ok


def cmd_eval(spec):
    fam = resolve_family(spec.family or "hermite")
    omega = _get(spec.params, "omega", 1.0)
    N = _get(spec.params, "N", 10_000, int)
    stride = _get(spec.params, "stride", 1000, int)
    fn = eval_symmetric if fam.is_symmetric else eval_nonsymmetric
    tr = fn(fam, omega, N, stride)
    return {"eval.csv": tr.to_csv()}, True


def cmd_phase_trace(spec):
    fam = resolve_family(spec.family or "hermite")
    omega = _get(spec.params, "omega", 1.0)
    N = _get(spec.params, "N", 10_000, int)
    parity = _get(spec.params, "parity", "even-pair", str)
    try:
        tr = phase.unwind_phase(fam, omega, N, parity)
    except phase.PhaseMismatch as exc:
        return {"phase.json": dumps({"family": fam.label, "omega": omega, "mismatch_index": exc.index,
                                     "mismatch": exc.mismatch})}, False
    summary = {"family": fam.label, "omega": omega, "parity": parity, "pairs": N,
               "burn_in": tr.burn_in, "max_mismatch": tr.max_mismatch}
    arts = {"phase.csv": tr.to_csv()}
    ok = True
    band = spec.params.get("band")
    if band is not None:
        rep = phase.delta_band(fam, omega, N, _get(spec.params, "band", 0.01), parity, trace=tr)
        summary["band"] = rep.to_dict()
        ok = rep.certified
    arts["phase.json"] = dumps(summary)
    return arts, ok


def _lemma_task(args):
    lemma, fam, omega = args
    try:
        return asym.verify_lemma(lemma, fam, omega).to_dict()
    except (asym.PreconditionError, asym.RangeError, asym.BranchCutError) as exc:
        return {"lemma": lemma, "family": fam.label, "omega": omega, "verdict": "error",
                "error": f"{type(exc).__name__}: {exc}"}


def cmd_lemma_verify(spec):
    lemma = _get(spec.params, "lemma", "all", str)
    lemmas = list(asym.LEMMAS) if lemma == "all" else [lemma]
    for lem in lemmas:
        if lem not in asym.LEMMAS:
            raise ConfigError("params.lemma", f"unknown lemma {lem!r}; expected one of {list(asym.LEMMAS)}")
    fams = resolve_families(spec.family)
    omegas = parse_grid(spec.params.get("omega", "1"), "params.omega")
    tasks = sorted(((lem, f, w) for lem in lemmas for f in fams for w in omegas),
                   key=lambda t: (t[1].label, t[2], t[0]))
    pool, mapper = _mapper(spec.workers, len(tasks))
    try:
        reports = list(mapper(_lemma_task, tasks))
    finally:
        if pool:
            pool.shutdown()
    ok = all(r["verdict"] == "consistent" for r in reports)
    rows = ["lemma,family,omega,verdict,fit_exponent,claimed"]
    for r in reports:
        e = r.get("fit_exponent")
        rows.append(f"{r['lemma']},{r['family']},{fmt(r['omega'])},{r['verdict']},"
                    f"{'' if e is None else fmt(e)},{fmt(r['claimed']) if 'claimed' in r else ''}")
    return {"lemmas.json": dumps(reports), "lemmas.csv": "\n".join(rows) + "\n"}, ok


def cmd_fourier_cm(spec):
    x = _get(spec.params, "x", 0.1)
    M = _get(spec.params, "M", 4, int)
    table = fourier.cm_fft(x, M)
    contour = []
    for m in range(1, min(M, 4) + 1):
        c = fourier.cm_contour(x, m)
        contour.append({"m": m, "contour": c, "gap": abs(c - table.c(m))})
    side = table.sidecar()
    side["contour"] = contour
    ok = math.isfinite(table.error) and all(r["gap"] <= 1e-8 for r in contour)
    return {"cm.csv": table.to_csv(), "cm.csv.json": dumps(side)}, ok


def cmd_fourier_fkm(spec):
    x = _get(spec.params, "x", 0.1)
    m = _get(spec.params, "m", 1, int)
    k = _get(spec.params, "k", 1, int)
    s = fourier.fkm_structure(x, m, k)
    s.update(x=x, m=m, k=k)
    ok = s["conj_gap"] <= 1e-10 and s["parity_gap"] <= 1e-10
    return {"fkm.json": dumps(s)}, ok


def _limit_task(args):
    fam, w, N = args
    p = limits.limit_point(fam, w, N)
    return {"omega": w, "value": p.value, "ratio": None if p.value is None else p.value / 2, "beta": p.beta,
            "fluctuation": p.fluctuation, "converged": p.converged, "error": p.error,
            "window": [N // 2, N]}


def cmd_limits(spec):
    fam = resolve_family(spec.family or "hermite")
    grid = parse_grid(spec.params.get("omega_grid", "-2:2:17"), "params.omega_grid")
    N = _get(spec.params, "N", 100_000, int)
    limits._require_family(fam, N, limits.MIN_N)
    tasks = [(fam, w, N) for w in sorted(grid)]
    pool, mapper = _mapper(spec.workers, len(tasks))
    try:
        rows = list(mapper(_limit_task, tasks))
    finally:
        if pool:
            pool.shutdown()
    for r in rows:
        r["family"] = fam.label
    ok = all(r["converged"] for r in rows)
    return {"limits.json": dumps(rows)}, ok


def cmd_uniformity(spec):
    fam = resolve_family(spec.family or "hermite")
    B = _get(spec.params, "B", 2.0)
    points = _get(spec.params, "points", 17, int)
    N = _get(spec.params, "N", 100_000, int)
    pool, mapper = _mapper(spec.workers, points)
    try:
        rep = limits.uniformity_scan(fam, B, points, N, mapper=mapper)
    finally:
        if pool:
            pool.shutdown()
    return {"uniformity.json": dumps(rep.to_dict())}, rep.all_converged


def _rho_key(r):
    return fmt(r).replace("-", "m").replace(".", "p")


def cmd_conjecture(spec):
    fam = resolve_family(spec.family or "power-p0.5")
    rhos = parse_grid(spec.params.get("rho_grid", "0,1,2.5"), "params.rho_grid")
    omega = _get(spec.params, "omega", 1.0)
    N = _get(spec.params, "N", 100_000, int)
    pool, mapper = _mapper(spec.workers, len(rhos))
    try:
        verdicts = limits.conjecture_scan(fam, rhos, omega, N, mapper=mapper)
    finally:
        if pool:
            pool.shutdown()
    arts = {}
    rows = []
    contradicts = False
    for v in verdicts:
        d = v.to_dict()
        d.update(family=fam.label, omega=omega)
        rows.append(d)
        arts[f"envelope_rho{_rho_key(v.rho)}.csv"] = v.envelope_csv()
        inside = abs(v.rho) < limits.BOUNDARY
        outside = abs(v.rho) > limits.BOUNDARY
        if (inside and v.classification == "unstable") or (outside and v.classification == "stable"):
            contradicts = True
    arts["conjecture.json"] = dumps(rows)
    return arts, not contradicts


def load_signals(path):
    doc = load_yaml(path)
    if isinstance(doc, list):
        return chromatic.TrigSignal.from_config(doc, "signal"), None
    if not isinstance(doc, dict) or "f" not in doc:
        raise ConfigError("signal", "expected a list of terms or a mapping with keys f and g")
    for key in doc:
        if key not in ("f", "g"):
            raise ConfigError(f"signal.{key}", "unknown key")
    f = chromatic.TrigSignal.from_config(doc["f"], "signal.f")
    g = chromatic.TrigSignal.from_config(doc["g"], "signal.g") if "g" in doc else None
    return f, g


def cmd_chromatic(spec):
    fam = resolve_family(spec.family or "hermite")
    mode = _get(spec.params, "mode", "norm", str)
    path = spec.params.get("signal")
    if path is None:
        raise ConfigError("params.signal", "a signal file is required")
    f, g = load_signals(path)
    N = _get(spec.params, "N", 100_000, int)
    if mode == "norm":
        est = chromatic.norm(fam, f, N)
        out = est.to_dict()
        out["t_spread"] = chromatic.t_spread(fam, f, N) if f.terms else 0.0
        return {"chromatic.json": dumps(out)}, est.converged
    if mode == "orthogonality":
        freqs = sorted(set(f.freqs.tolist()) | (set(g.freqs.tolist()) if g else set()))
        if len(freqs) < 2:
            raise ConfigError("signal", "orthogonality needs at least two distinct frequencies")
        lo = min(1000, N)
        reps = []
        for i, w in enumerate(freqs):
            for s in freqs[i + 1:]:
                r = chromatic.orthogonality_check(fam, w, s, N, [lo, (lo + N) // 2, N] if N > lo else [N])
                reps.append(r.to_dict())
        ok = all(r["bound_holds"] and r["decay"] >= 3 for r in reps)
        return {"chromatic.json": dumps(reps)}, ok
    if mode == "cd":
        n = _get(spec.params, "n", 50, int)
        res = chromatic.operator_cd_check(fam, f, g if g is not None else f, n)
        rec = max(chromatic.recurrence_residual(fam, k, f) for k in range(0, n + 1))
        out = asdict(res)
        out["recurrence_residual"] = rec
        return {"chromatic.json": dumps(out)}, res.relative <= 1e-10 and rec <= 1e-12
    raise ConfigError("params.mode", f"expected norm, orthogonality or cd, got {mode!r}")


HANDLERS = {
    "check-conditions": cmd_check_conditions, "eval": cmd_eval, "phase-trace": cmd_phase_trace,
    "lemma-verify": cmd_lemma_verify, "fourier-cm": cmd_fourier_cm, "fourier-fkm": cmd_fourier_fkm,
    "limits": cmd_limits, "uniformity": cmd_uniformity, "conjecture": cmd_conjecture,
    "chromatic": cmd_chromatic,
}


def _versions():
    import mpmath
    return {"opasym": __version__, "backend": BACKEND, "python": platform.python_version(),
            "numpy": np.__version__, "mpmath": mpmath.__version__}


def run(spec, log=None):
    """Execute one spec; returns the exit status."""
    log = log or sys.stderr
    start = time.perf_counter()
    out = Path(spec.out)
    status, error, artifacts = EXIT_OK, None, {}
    try:
        artifacts, ok = HANDLERS[spec.command](spec)
        status = EXIT_OK if ok else EXIT_VIOLATION
    except ConfigError as exc:
        status, error = EXIT_ERROR, f"config error at {exc}"
    except (OperationalError, RecurrenceOverflow, limits.PreconditionError, ValueError, ArithmeticError) as exc:
        status, error = EXIT_ERROR, f"{type(exc).__name__}: {exc}"
    if error:
        print(f"opasym {spec.command}: {error}", file=log)
    try:
        out.mkdir(parents=True, exist_ok=True)
        digests = {}
        for name in sorted(artifacts):
            data = artifacts[name].encode()
            (out / name).write_bytes(data)
            digests[name] = hashlib.sha256(data).hexdigest()
        manifest = {"spec": spec.to_dict(), "versions": _versions(), "exit_status": status,
                    "error": error, "artifacts": digests,
                    "wall_time_s": round(time.perf_counter() - start, 3)}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    except OSError as exc:
        print(f"opasym {spec.command}: cannot write to {out}: {exc.strerror}", file=log)
        return EXIT_ERROR
    return status


# -- argument parsing --------------------------------------------------------

def _common(p, family=True):
    if family:
        p.add_argument("--family", help="built-in label, 'corpus', or a YAML family config")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)


def build_parser():
    ap = argparse.ArgumentParser(prog="opasym", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-conditions", help="regularity conditions on a family or the corpus")
    _common(p)
    p.add_argument("--N", type=int, default=10_000, help="horizon")

    p = sub.add_parser("eval", help="checkpointed recurrence trace")
    _common(p)
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--N", type=int, default=10_000)
    p.add_argument("--stride", type=int, default=1000)

    p = sub.add_parser("phase-trace", help="unwound phase trace of E_n")
    _common(p)
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--N", type=int, default=10_000, help="number of pairs")
    p.add_argument("--parity", default="even-pair", choices=phase.PARITIES)
    p.add_argument("--band", type=float, help="also certify the increment band")

    p = sub.add_parser("lemma-verify", help="remainder decay of the asymptotic expansions")
    _common(p)
    p.add_argument("--lemma", default="all")
    p.add_argument("--omega", default="1", help="comma list or start:stop:count")

    p = sub.add_parser("fourier-cm", help="Fourier coefficients c_m(x)")
    _common(p, family=False)
    p.add_argument("--x", type=float, default=0.1)
    p.add_argument("--M", type=int, default=4)

    p = sub.add_parser("fourier-fkm", help="one coefficient f_k^m(x)")
    _common(p, family=False)
    p.add_argument("--x", type=float, default=0.1)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--k", type=int, default=1)

    p = sub.add_parser("limits", help="limit estimates on an omega grid")
    _common(p)
    p.add_argument("--omega-grid", default="-2:2:17")
    p.add_argument("--N", type=int, default=100_000)

    p = sub.add_parser("uniformity", help="grid extrema of the limit on [-B, B]")
    _common(p)
    p.add_argument("--B", type=float, default=2.0)
    p.add_argument("--points", type=int, default=17)
    p.add_argument("--N", type=int, default=100_000)

    p = sub.add_parser("conjecture", help="stability scan over rho for offset recurrences")
    _common(p)
    p.add_argument("--rho-grid", default="0,1,2.5")
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--N", type=int, default=100_000)

    p = sub.add_parser("chromatic", help="norms, orthogonality and operator identities")
    _common(p)
    p.add_argument("--signal", required=True, help="YAML list of {omega, re, im} terms, or {f: ..., g: ...}")
    p.add_argument("--mode", choices=("norm", "orthogonality", "cd"), default="norm")
    p.add_argument("--N", type=int, default=100_000)
    p.add_argument("--n", type=int, default=50, help="degree for the cd mode")

    p = sub.add_parser("run", help="run a YAML/JSON experiment spec")
    p.add_argument("spec")
    p.add_argument("--out", help="override the spec's output directory")
    return ap


def spec_from_args(ns):
    params = {k: v for k, v in vars(ns).items()
              if k not in ("command", "family", "out", "workers") and v is not None}
    return ExperimentSpec(ns.command, getattr(ns, "family", None), params, ns.out, max(1, ns.workers))


def main(argv=None):
    ns = build_parser().parse_args(argv)
    try:
        if ns.command == "run":
            doc = load_yaml(ns.spec)
            spec = ExperimentSpec.from_dict(doc)
            if ns.out:
                spec.out = ns.out
        else:
            spec = spec_from_args(ns)
    except ConfigError as exc:
        print(f"opasym: config error at {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OperationalError as exc:
        print(f"opasym: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return run(spec)


if __name__ == "__main__":
    sys.exit(main())
