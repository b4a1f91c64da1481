"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 vertex budget exceeded, 4 every row
of a sweep failed, 5 solver did not converge (a partial report is still written).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .graphs import VERTEX_BUDGET, BudgetExceeded, GraphError, build_graph, build_point_graph
from .solver import SolverOptions

EXIT_USAGE = 2
EXIT_BUDGET = 3
EXIT_ALL_FAILED = 4
EXIT_NONCONVERGED = 5

DEFAULT_CACHE = ".carpet-cache"


class UsageError(Exception):
    pass


class NotConverged(Exception):
    def __init__(self, result):
        super().__init__("solver did not converge")
        self.result = result


def versions() -> str:
    import scipy

    return f"pcarpet {__version__}; numpy {np.__version__}; scipy {scipy.__version__}"


def _canon(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


# ----------------------------------------------------------------- cache

@dataclass
class RunRecord:
    command: str
    instance_hash: str
    result: dict
    versions: str
    seed: int
    wall_ms: int

    def to_json(self) -> dict:
        return {"command": self.command, "instance_hash": self.instance_hash,
                "result": self.result, "versions": self.versions, "seed": self.seed,
                "wall_ms": self.wall_ms}


class Cache:
    """Write-once JSON store keyed by the content hash of an instance encoding."""

    def __init__(self, root: str | os.PathLike | None, enabled: bool = True):
        self.root = Path(root or os.environ.get("CARPET_CACHE_DIR") or DEFAULT_CACHE)
        self.enabled = enabled

    @staticmethod
    def key(instance: dict) -> str:
        enc = _canon({"instance": instance, "version": __version__})
        return hashlib.sha256(enc.encode("utf-8")).hexdigest()

    def path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> dict | None:
        if not self.enabled:
            return None
        p = self.path(key)
        if not p.exists():
            return None
        try:
            rec = json.loads(p.read_text(encoding="utf-8"))
            if rec.get("instance_hash") != key or "result" not in rec:
                raise ValueError("hash mismatch")
            return rec
        except (ValueError, OSError) as exc:
            warnings.warn(f"corrupt cache entry {p.name} ({exc}); recomputing")
            return None

    def put(self, key: str, record: dict) -> None:
        if not self.enabled:
            return
        p = self.path(key)
        p.parent.mkdir(parents=True, exist_ok=True)
        data = json.dumps(record, sort_keys=True, indent=1, allow_nan=True)
        if p.exists():
            try:
                old = json.loads(p.read_text(encoding="utf-8"))
                if old.get("instance_hash") == key and _canon(old["result"]) != _canon(record["result"]):
                    warnings.warn(f"cache entry {p.name} differs from the recomputed result; replacing")
                elif old.get("instance_hash") == key:
                    return
            except (ValueError, OSError):
                pass
        tmp = p.with_suffix(f".{os.getpid()}.tmp")
        tmp.write_text(data, encoding="utf-8")
        os.replace(tmp, p)

    def gc(self) -> tuple[int, int]:
        """Drop corrupt entries, entries of other versions and stray temp files."""
        kept = removed = 0
        if not self.root.exists():
            return 0, 0
        for p in sorted(self.root.rglob("*")):
            if p.is_dir():
                continue
            ok = False
            if p.suffix == ".json":
                try:
                    rec = json.loads(p.read_text(encoding="utf-8"))
                    ok = rec.get("instance_hash") == p.stem and \
                        str(rec.get("versions", "")).startswith(f"pcarpet {__version__};")
                except (ValueError, OSError):
                    ok = False
            if ok:
                kept += 1
            else:
                p.unlink()
                removed += 1
        return kept, removed


def run_cached(cache: Cache, command: str, instance: dict, seed: int, compute) -> RunRecord:
    key = Cache.key(instance)
    rec = cache.get(key)
    if rec is not None:
        return RunRecord(rec["command"], key, rec["result"], rec["versions"], rec["seed"],
                         rec["wall_ms"])
    t0 = time.perf_counter()
    try:
        result = _jsonable(compute())
    except NotConverged as exc:
        result = _jsonable(exc.result)
        rec = RunRecord(command, key, result, versions(), seed,
                        int(1000 * (time.perf_counter() - t0)))
        raise NotConverged(rec) from None
    rec = RunRecord(command, key, result, versions(), seed, int(1000 * (time.perf_counter() - t0)))
    cache.put(key, rec.to_json())
    return rec


# ------------------------------------------------------------- functions

FUNCTION_SPECS = ("harmonic-lr", "coordinate-x", "coordinate-y", "h0", "h2", "random:SEED")


def make_function(spec: str, g, p: float, opts: SolverOptions) -> np.ndarray:
    """Built-in test functions on a point graph."""
    from .energy import coordinates
    from .scaling import build_hn, symmetrize_th
    from .solver import conductance_report

    if spec == "harmonic-lr":
        rep = conductance_report(g, g.subset("left"), g.subset("right"), p, opts)
        return rep.values
    if spec == "coordinate-x":
        return coordinates(g)[:, 0].copy()
    if spec == "coordinate-y":
        return coordinates(g)[:, 1].copy()
    if spec.startswith("random:"):
        try:
            seed = int(spec.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad function spec {spec!r}") from None
        return np.random.default_rng(seed).uniform(0.0, 1.0, g.n_vertices)
    if spec in ("h0", "h2"):
        if getattr(g, "kind", None) != "modified":
            raise UsageError(f"{spec} lives on the modified point graphs")
        if spec == "h0":
            rep = conductance_report(g, g.subset("left"), g.subset("right"), p, opts)
            return symmetrize_th(g, rep.values)
        if g.level < 3:
            raise UsageError("h2 needs a point graph of level >= 3")
        return build_hn(g.level, 2, p, opts).function.values
    raise UsageError(f"unknown function spec {spec!r}; choose from {', '.join(FUNCTION_SPECS)}")


# --------------------------------------------------------------- commands

def _opts(args) -> SolverOptions:
    kw = {"seed": args.seed}
    if args.tol is not None:
        kw["tol_kkt"] = args.tol
    return SolverOptions(**kw)


def _need(args, *names):
    for name in names:
        if getattr(args, name, None) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _p_list(text) -> list[float]:
    out = []
    for item in text:
        for part in str(item).split(","):
            if part.strip():
                out.append(float(part))
    return out


def cmd_graph_build(args, cache):
    _need(args, "kind", "n")
    g = build_graph(args.kind, args.n, args.M, args.budget)
    from .graphs import graph_to_json

    if args.out:
        Path(args.out).write_text(json.dumps(graph_to_json(g)), encoding="utf-8")
    print(f"{g.n_vertices} vertices, {g.n_edges} edges")
    return 0


def _check_converged(res: dict):
    bad = [k for k, v in _walk(res) if k == "converged" and v is False]
    if bad:
        raise NotConverged(res)


def _walk(obj):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield k, v
            yield from _walk(v)
    elif isinstance(obj, list):
        for v in obj:
            yield from _walk(v)


def _graph_for(args):
    kind = args.kind or "cell"
    return build_graph(kind, args.n, args.M, args.budget)


def cmd_solve_dirichlet(args, cache):
    _need(args, "n", "p")
    from .solver import conductance_report

    opts = _opts(args)
    inst = {"cmd": "solve dirichlet", "kind": args.kind or "cell", "n": args.n, "M": args.M,
            "p": args.p, "opts": opts.to_json()}

    def compute():
        g = _graph_for(args)
        rep = conductance_report(g, g.subset("left"), g.subset("right"), args.p, opts)
        res = rep.to_json()
        res["minimizer"]["values"] = [float(v) for v in rep.values]
        res.pop("wall_ms", None)
        _check_converged(res)
        return res

    return _emit(args, cache, "solve dirichlet", inst, compute)


def cmd_conductance(args, cache):
    _need(args, "n", "p")
    from . import scaling

    fam = args.family or "lr"
    opts = _opts(args)
    inst = {"cmd": "conductance", "family": fam, "n": args.n, "M": args.M, "m": args.m,
            "p": args.p, "opts": opts.to_json()}

    def compute():
        if fam == "lr":
            _, rep = scaling.lr_solve(args.n, args.p, "cell", opts)
            res = {"value": rep.energy, "converged": rep.converged}
        elif fam == "point":
            _, rep = scaling.lr_solve(args.n, args.p, "point", opts)
            res = {"value": rep.energy, "converged": rep.converged}
        elif fam == "chain":
            _need(args, "M")
            _, rep = scaling.chain_solve(args.n, args.M, args.p, opts)
            res = {"value": rep.energy, "converged": rep.converged}
        elif fam == "neighborhood":
            res = scaling.conductance_neighborhood(args.n, args.p, args.m or 1, opts).to_json()
        else:
            raise UsageError(f"unknown family {fam!r}")
        res.update({"family": fam, "n": args.n, "p": args.p})
        _check_converged(res)
        return res

    return _emit(args, cache, "conductance", inst, compute)


def cmd_scaling_rho(args, cache):
    if not args.p:
        raise UsageError("--p is required")
    _need(args, "n_min", "n_max")
    from .scaling import FAMILIES, ScalingRow, ScalingTable, estimate_rho

    fam = args.family or "lr"
    if fam not in FAMILIES:
        raise UsageError(f"unknown family {fam!r}; choose from {FAMILIES}")
    if args.n_max < args.n_min + 2:
        raise UsageError("need --n-max >= --n-min + 2")
    opts = _opts(args)
    tables = []
    for p in _p_list(args.p):
        inst = {"cmd": "scaling rho", "family": fam, "p": p, "n_min": args.n_min,
                "n_max": args.n_max, "opts": opts.to_json()}
        rec = run_cached(cache, "scaling rho", inst, args.seed,
                         lambda p=p: estimate_rho(p, fam, args.n_min, args.n_max, opts,
                                                  workers=args.workers).to_json())
        t = rec.result
        rows = [ScalingRow(**r) for r in t["rows"]]
        tables.append(ScalingTable(t["p"], t["family"], rows, t["options"]))
    csv_text = "".join(t.to_csv() if i == 0 else t.to_csv().split("\n", 1)[1]
                       for i, t in enumerate(tables))
    payload = {"tables": [_jsonable(t.to_json()) for t in tables]}
    text = json.dumps(payload, sort_keys=True, indent=1, allow_nan=True)
    if args.out:
        base = Path(args.out)
        base.with_suffix(".csv").write_text(csv_text, encoding="utf-8")
        base.with_suffix(".json").write_text(text + "\n", encoding="utf-8")
    sys.stdout.write(csv_text)
    if all(not any(r.ok for r in t.rows) for t in tables):
        return EXIT_ALL_FAILED
    return 0


def cmd_poincare(args, cache):
    _need(args, "kind", "n", "p")
    from . import poincare

    fns = {"sigma": poincare.sigma, "lambda": poincare.lambda_,
           "lambda_star": poincare.lambda_star, "lambda-star": poincare.lambda_star}
    if args.kind not in fns:
        raise UsageError("--kind must be sigma, lambda or lambda_star")
    opts = _opts(args)
    inst = {"cmd": "poincare", "kind": args.kind.replace("-", "_"), "n": args.n, "p": args.p,
            "opts": opts.to_json()}

    def compute():
        res = fns[args.kind](args.n, args.p, opts).to_json()
        _check_converged(res)
        return res

    return _emit(args, cache, "poincare", inst, compute)


def cmd_measure(args, cache):
    _need(args, "n", "p")
    from . import measures

    what = args.what
    spec = args.f or "harmonic-lr"
    opts = _opts(args)
    if what == "besov" and args.beta is None and args.m is not None and args.m < max(1, args.n) + 3:
        raise UsageError("an exponent fit needs --m >= --n + 3")
    inst = {"cmd": f"measure {what}", "f": spec, "n": args.n, "m": args.m, "p": args.p,
            "rho": args.rho, "beta": args.beta, "opts": opts.to_json()}

    def compute():
        if what == "energy":
            _need(args, "m")
            g = build_point_graph(args.n + args.m, "modified", args.budget)
            f = make_function(spec, g, args.p, opts)
            from .energy import energy

            cm = measures.energy_measure(g, f, args.n, args.p, args.rho)
            raw = energy(g, f, args.p)
            res = cm.to_json()
            res.update({"function": spec, "graph_level": g.level, "raw_energy": raw,
                        "rescaled_energy": args.rho ** g.level * raw})
            return res
        if what == "besov":
            _need(args, "m")
            g = build_point_graph(args.m, "simple", args.budget)
            f = make_function(spec, g, args.p, opts)
            if args.beta is not None:
                return measures.besov_seminorm(g, f, args.p, args.beta, args.n).to_json()
            levels = list(range(max(1, args.n), args.m - 1))
            return measures.critical_exponent(g, f, args.p, levels).to_json()
        if what == "chainrule":
            _need(args, "m")
            g = build_point_graph(args.n + args.m, "modified", args.budget)
            f = make_function(spec, g, args.p, opts)
            rep = measures.chain_rule_check(g, f, lambda t: t * t, lambda t: 2 * t, args.p,
                                            range(1, args.n + 1), args.rho)
            res = rep.to_json()
            res.update({"function": spec, "phi": "t^2", "graph_level": g.level})
            return res
        raise UsageError(f"unknown measure {what!r}")

    return _emit(args, cache, f"measure {what}", inst, compute)


def cmd_experiment(args, cache):
    _need(args, "n", "p")
    from .scaling import build_hn, strictness_gap

    what = args.what
    opts = _opts(args)
    inst = {"cmd": f"experiment {what}", "n": args.n, "p": args.p, "k": args.k,
            "opts": opts.to_json()}

    def compute():
        if what == "strictness":
            res = strictness_gap(args.n, args.p, opts).to_json()
            res["positive"] = res["gap"] > 0
            return res
        if what == "hn":
            k = 1 if args.k is None else args.k
            h = build_hn(args.n, k, args.p, opts)
            v = h.function.values
            g = h.graph
            return {"n": args.n, "k": k, "p": args.p, "energy": h.energy,
                    "base_energy": h.base_energy, "expected_energy": h.expected_energy,
                    "identity_rel_error": h.identity_error, "min": float(v.min()),
                    "max": float(v.max()),
                    "left_trace": sorted(set(np.round(v[g.subset('left')], 14).tolist())),
                    "right_trace": sorted(set(np.round(v[g.subset('right')], 14).tolist()))}
        raise UsageError(f"unknown experiment {what!r}")

    return _emit(args, cache, f"experiment {what}", inst, compute)


def cmd_cache_gc(args, cache):
    kept, removed = cache.gc()
    print(f"kept {kept}, removed {removed}")
    return 0


def _emit(args, cache, command, inst, compute) -> int:
    code = 0
    try:
        rec = run_cached(cache, command, inst, args.seed, compute)
    except NotConverged as exc:
        rec = exc.result
        code = EXIT_NONCONVERGED
    text = json.dumps(rec.result, sort_keys=True, indent=1, allow_nan=True) + "\n"
    if args.out:
        Path(args.out).write_text(json.dumps(rec.to_json(), sort_keys=True, indent=1,
                                             allow_nan=True) + "\n", encoding="utf-8")
    sys.stdout.write(text)
    return code


# ----------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser):
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--family")
    p.add_argument("--kind")
    p.add_argument("--f")
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--cache-dir")
    p.add_argument("--no-cache", action="store_true")
    p.add_argument("--budget", type=int, default=VERTEX_BUDGET)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--beta", type=float)
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="carpet", description="Discrete p-energies on the planar Sierpinski carpet.")
    sub = ap.add_subparsers(dest="group", required=True)

    g = sub.add_parser("graph").add_subparsers(dest="action", required=True)
    b = g.add_parser("build")
    _common(b)
    b.set_defaults(func=cmd_graph_build)

    s = sub.add_parser("solve").add_subparsers(dest="action", required=True)
    d = s.add_parser("dirichlet")
    _common(d)
    d.add_argument("--p", type=float)
    d.set_defaults(func=cmd_solve_dirichlet)

    c = sub.add_parser("conductance")
    _common(c)
    c.add_argument("--p", type=float)
    c.set_defaults(func=cmd_conductance)

    sc = sub.add_parser("scaling").add_subparsers(dest="action", required=True)
    r = sc.add_parser("rho")
    _common(r)
    r.add_argument("--p", nargs="+")
    r.add_argument("--n-min", type=int)
    r.add_argument("--n-max", type=int)
    r.set_defaults(func=cmd_scaling_rho)

    po = sub.add_parser("poincare")
    _common(po)
    po.add_argument("--p", type=float)
    po.set_defaults(func=cmd_poincare)

    me = sub.add_parser("measure")
    me.add_argument("what", choices=["energy", "besov", "chainrule"])
    _common(me)
    me.add_argument("--p", type=float)
    me.set_defaults(func=cmd_measure)

    ex = sub.add_parser("experiment")
    ex.add_argument("what", choices=["strictness", "hn"])
    _common(ex)
    ex.add_argument("--p", type=float)
    ex.set_defaults(func=cmd_experiment)

    ca = sub.add_parser("cache").add_subparsers(dest="action", required=True)
    gc = ca.add_parser("gc")
    _common(gc)
    gc.set_defaults(func=cmd_cache_gc)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    cache = Cache(args.cache_dir, enabled=not args.no_cache)
    try:
        return args.func(args, cache)
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"carpet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BudgetExceeded as exc:
        print(f"carpet: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (GraphError, ValueError) as exc:
        print(f"carpet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
