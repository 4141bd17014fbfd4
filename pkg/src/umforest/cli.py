"""``umforest`` command line.

Exit codes: 0 success, 2 invalid input, 3 experiment failure, 64 usage error.
Documents are read from files or ``-`` (stdin) and written as JSON Lines.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import experiments as ex
from .dendrogram import Dendrogram, as_mass, canonicalize, singleton, validate
from .errors import UmforestError
from .io import emit_path_csv, from_document, parse_documents, raw_from_document, tree_from_json, write_documents
from .marked import MarkedDendrogram, marked_concat, marked_decompose, marked_truncate
from .polynomials import (
    BUILTINS,
    Below,
    Bump,
    Constant,
    Coordinate,
    CountAbove,
    DistanceSum,
    ExpSum,
    MonomialSpec,
    PolyDist,
    PolynomialSpec,
    eval_monomial,
    laplace_estimate,
    test_function,
)
from .random_forests import CpfSampler, RealLevySpec, gw_evolve
from .rng import stream
from .semigroup import concat, count_balls, decompose, tops_path, trunk, truncate

EXIT_OK, EXIT_INVALID, EXIT_FAIL, EXIT_USAGE = 0, 2, 3, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- test functions from the command line ------------------------------------


@dataclass(frozen=True)
class ExprPhi:
    """Test function given as a numpy expression in ``r`` (shape ``(C, m, m)``)."""

    expr: str

    def __call__(self, R):
        env = {"np": np, "r": R, "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "where": np.where, "abs": np.abs}
        return eval(self.expr, {"__builtins__": {}}, env)


_PARAMETRIC = {
    "const": lambda c=1.0: Constant(c),
    "coord": lambda i=1, j=2, p=1: Coordinate(int(i), int(j), int(p)),
    "sum": lambda: DistanceSum(),
    "exp-sum": lambda rate=1.0: ExpSum(rate),
    "bump": lambda c=1.0, w=1.0: Bump(c, w),
    "below": lambda c: Below(c),
    "count-above": lambda c: CountAbove(c),
    "pow-sum": lambda p=2: PolyDist(int(p)),
}


def parse_phi(text: str):
    """``name``, ``name:arg,arg`` or a numpy expression in ``r``."""
    if text in BUILTINS:
        return test_function(BUILTINS[text](), name=text)
    name, _, args = text.partition(":")
    if name in _PARAMETRIC:
        vals = [float(a) for a in args.split(",") if a]
        try:
            return test_function(_PARAMETRIC[name](*vals), name=text)
        except TypeError as e:
            raise UsageError(f"bad arguments for {name}: {e}") from e
    return test_function(ExprPhi(text), name=text)


# -- I/O helpers --------------------------------------------------------------


def _read_text(path):
    if path == "-":
        return sys.stdin.read()
    with open(path) as fh:
        return fh.read()


def _load(paths):
    out = []
    for p in paths:
        out.extend(from_document(o) for o in parse_documents(_read_text(p)))
    return out


def _load_weighted(path):
    """Atoms for a Lévy model: plain documents (equal weights) or ``{"weight", "tree"}`` records."""
    items = []
    for o in parse_documents(_read_text(path)):
        if isinstance(o, dict) and "weight" in o:
            items.append((as_mass(o["weight"]), Dendrogram(tree_from_json(o["tree"]))))
        else:
            items.append((None, from_document(o)))
    if any(w is None for w, _ in items):
        if not all(w is None for w, _ in items):
            raise UsageError("either all or none of the atoms carry weights")
        items = [(Fraction(1, len(items)), d) for _, d in items]
    return tuple(items)


def _emit_docs(docs, out):
    write_documents(docs, out)


def _num(text):
    return Fraction(text)


class _Output:
    def __init__(self, path):
        self.path = path
        self.fh = open(path, "w") if path else sys.stdout

    def __enter__(self):
        return self.fh

    def __exit__(self, *exc):
        if self.path:
            self.fh.close()


# -- commands -----------------------------------------------------------------


def cmd_validate(args, out):
    status = EXIT_OK
    for path in args.files:
        for i, o in enumerate(parse_documents(_read_text(path))):
            try:
                d, space = raw_from_document(o)
            except UmforestError as e:
                out.write(f"{path}[{i}]: error: {e}\n")
                status = EXIT_INVALID
                continue
            rep = validate(d)
            if space is not None:
                bad = [a.mark for a in d.atoms if not space.contains(a.mark)]
                if bad:
                    out.write(f"{path}[{i}]: error: marks outside the mark space: {bad[:3]}\n")
                    status = EXIT_INVALID
            for issue in rep.issues:
                out.write(f"{path}[{i}]: {issue.severity}: {issue.kind} at {list(issue.path)}: {issue.message}\n")
            if not rep.ok:
                status = EXIT_INVALID
            elif rep.clean:
                out.write(f"{path}[{i}]: clean\n")
    return status


def _space_map(docs, fn_plain, fn_marked):
    return [fn_marked(d) if isinstance(d, MarkedDendrogram) else fn_plain(d) for d in docs]


def cmd_canon(args, out):
    _emit_docs(_space_map(_load(args.files), canonicalize, lambda d: d), out)
    return EXIT_OK


def cmd_concat(args, out):
    docs = _load(args.files)
    if any(isinstance(d, MarkedDendrogram) for d in docs):
        res = marked_concat(args.h, docs)
    else:
        res = concat(args.h, docs)
    _emit_docs([res], out)
    return EXIT_OK


def cmd_truncate(args, out):
    _emit_docs(_space_map(_load(args.files), lambda d: truncate(args.h, d), lambda d: marked_truncate(args.h, d)), out)
    return EXIT_OK


def cmd_decompose(args, out):
    for d in _load(args.files):
        primes = marked_decompose(args.h, d) if isinstance(d, MarkedDendrogram) else decompose(args.h, d).primes
        _emit_docs(primes, out)
    return EXIT_OK


def cmd_trunk(args, out):
    docs = [d.tree if isinstance(d, MarkedDendrogram) else d for d in _load(args.files)]
    _emit_docs([trunk(args.h, d) for d in docs], out)
    return EXIT_OK


def _plain(d):
    return d.tree if isinstance(d, MarkedDendrogram) else d


def cmd_count(args, out):
    for d in _load(args.files):
        out.write(f"{count_balls(args.h, _plain(d))}\n")
    return EXIT_OK


def cmd_fragmentation_path(args, out):
    for d in _load(args.files):
        path = tops_path(_plain(d))
        if args.format == "doc":
            rows = [
                {"h_low": str(iv.h_low), "h_high": str(iv.h_high), "count": iv.count, "masses": [str(m) for m in iv.masses]}
                for iv in path.intervals
            ]
            out.write(json.dumps(rows) + "\n")
        else:
            emit_path_csv(path, out)
    return EXIT_OK


def _spec(args):
    return MonomialSpec(args.m, parse_phi(args.phi), args.h)


def cmd_eval(args, out):
    spec = _spec(args)
    if args.format == "csv":
        out.write("value,stderr\n")
    for d in _load(args.files):
        d = _plain(d)
        if args.mode == "mc":
            e = eval_monomial(spec, d, mode="mc", samples=args.samples, seed=args.seed)
            val, se = e.mean, e.stderr
        else:
            val, se = eval_monomial(spec, d), 0.0
        out.write(f"{val!r},{se!r}\n" if args.format == "csv" else json.dumps({"value": repr(val), "stderr": repr(se)}) + "\n")
    return EXIT_OK


@dataclass(frozen=True)
class EmpiricalSampler:
    """Uniform draw from a fixed batch of spaces."""

    docs: tuple

    def __call__(self, rng):
        return self.docs[int(rng.integers(len(self.docs)))]


def _model(args):
    atoms = _load_weighted(args.atoms) if args.atoms else None
    depth = args.depth if args.depth is not None else 1
    return ex.cpf_model(float(args.theta), atoms, depth)


def cmd_laplace(args, out):
    spec = PolynomialSpec.of(_spec(args))
    if args.theta is not None:
        sampler = CpfSampler(_model(args))
    else:
        docs = tuple(_plain(d) for d in _load(args.files))
        if not docs:
            raise UsageError("laplace needs --theta or input documents")
        sampler = EmpiricalSampler(docs)
    e = laplace_estimate(sampler, spec, args.samples, args.seed, args.workers)
    out.write("estimate,stderr\n")
    out.write(f"{e.mean!r},{e.stderr!r}\n")
    return EXIT_OK


def cmd_sample_cpf(args, out):
    model = _model(args)
    rng = stream(args.seed, "sample-cpf-batch")
    _emit_docs([model.sample(rng) for _ in range(args.n)], out)
    return EXIT_OK


def cmd_gw(args, out):
    a = as_mass(args.mass)
    if args.files:
        starts = [_plain(d) for d in _load(args.files)]
    else:
        starts = [singleton(args.init * a) if args.init else Dendrogram()]
    docs = []
    for j, start in enumerate(starts):
        for i in range(args.n):
            docs.append(gw_evolve(start, args.rate, args.t, a, args.seed, f"gw-cli-{j}-{i}"))
    _emit_docs(docs, out)
    return EXIT_OK


def _report_out(args, reports, out):
    """Write reports to --out or stdout; summary lines go to stderr."""
    if args.out:
        with open(args.out, "w") as fh:
            ex.dump_reports(reports, fh, "json" if args.format == "doc" else "csv")
    else:
        ex.dump_reports(reports, out, "json" if args.format == "doc" else "csv")
    for r in reports:
        print(r.summary_line(), file=sys.stderr)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def _combine(name, title, reports, config):
    rep = ex.ExperimentReport(name, title, config, reports[0].seed, reports[0].workers, reports[0].sigma)
    for r in reports:
        rep.rows.extend(r.rows)
    rep.elapsed_s = sum(r.elapsed_s or 0.0 for r in reports)
    return rep


def _common(args):
    return {"seed": args.seed, "workers": args.workers, "sigma": args.sigma}


def _cpf_kw(args):
    kw = {}
    if args.atoms:
        kw["atoms"] = _load_weighted(args.atoms)
    if args.depth is not None:
        kw["t"] = args.depth
    return kw


def cmd_verify_lk(args, out):
    theta = float(args.theta) if args.theta is not None else 2.0
    lk = ex.criterion_07(**_common(args), samples=args.samples, thetas=(theta,), **_cpf_kw(args))
    exc = ex.criterion_09(**_common(args), samples=args.samples, n=args.n_roots, theta=theta, **_cpf_kw(args))
    rep = _combine("verify-lk", "Levy-Khintchine for compound Poisson forests", [lk, exc], {"theta": theta, "samples": args.samples, "n_roots": args.n_roots})
    return _report_out(args, [rep], out)


def cmd_verify_root(args, out):
    theta = float(args.theta) if args.theta is not None else 2.0
    rep = ex.criterion_08(**_common(args), samples=args.samples, n=args.n_roots, theta=theta, **_cpf_kw(args))
    rep.name = "verify-root"
    return _report_out(args, [rep], out)


def cmd_verify_branching(args, out):
    rep = ex.criterion_13(**_common(args), samples=args.samples)
    rep.name = "verify-branching"
    return _report_out(args, [rep], out)


def _parse_levy(text):
    atoms = []
    for part in text.split(","):
        x, _, rate = part.partition(":")
        atoms.append((float(x), float(rate)))
    return RealLevySpec(tuple(atoms))


def cmd_verify_star_mass(args, out):
    nu = _parse_levy(args.levy) if args.levy else ex.STAR_LEVY
    rep = ex.criterion_10(**_common(args), samples=args.samples, nu=nu)
    rep.name = "verify-star-mass"
    return _report_out(args, [rep], out)


def cmd_suite(args, out):
    only = set(args.only) if args.only else None
    reports = ex.run_suite(args.seed, args.workers, args.sigma, only)
    status = _report_out(args, reports, out)
    passed = sum(r.passed for r in reports)
    print(f"suite: {passed}/{len(reports)} criteria passed", file=sys.stderr)
    return status


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="umforest", description="Ultrametric measure spaces: semigroup calculus, polynomials and random forests.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, fn, help, files=True, h=False):
        sp = sub.add_parser(name, help=help)
        if files:
            sp.add_argument("files", nargs="*", default=["-"], help="document files (default or '-': stdin)")
        if h:
            sp.add_argument("--h", type=_num, required=True, help="depth")
        sp.add_argument("--out", help="write output to this file")
        sp.add_argument("--format", choices=("doc", "csv"), default=None)
        sp.set_defaults(fn=fn)
        return sp

    cmd("validate", cmd_validate, "report structural problems in documents")
    cmd("canon", cmd_canon, "canonicalise documents")
    cmd("concat", cmd_concat, "concatenate all input spaces at depth h", h=True)
    cmd("truncate", cmd_truncate, "cap distances at 2h", h=True)
    cmd("decompose", cmd_decompose, "split into primes (open 2h-balls)", h=True)
    cmd("trunk", cmd_trunk, "one atom per 2h-ball, distances shifted by -2h", h=True)
    cmd("count", cmd_count, "number of open 2h-balls", h=True)
    cmd("fragmentation-path", cmd_fragmentation_path, "ball masses as a function of depth")

    for name, fn, help in (("eval", cmd_eval, "evaluate a (truncated) monomial"), ("laplace", cmd_laplace, "estimate E[exp(-Phi)]")):
        sp = cmd(name, fn, help)
        sp.add_argument("--phi", required=True, help="built-in name, name:args, or numpy expression in r")
        sp.add_argument("--m", type=int, required=True, help="monomial order")
        sp.add_argument("--h", type=_num, default=None, help="truncation depth")
        sp.add_argument("--samples", type=int, default=10_000)
        sp.add_argument("--seed", type=int, default=0)
        if name == "eval":
            sp.add_argument("--mode", choices=("exact", "mc"), default="exact")
        else:
            sp.add_argument("--workers", type=int, default=1)
            sp.add_argument("--theta", type=_num, default=None, help="sample a CPF with this intensity instead of the inputs")
            sp.add_argument("--atoms", help="CPF atom documents")
            sp.add_argument("--depth", type=_num, default=None)

    sp = cmd("sample-cpf", cmd_sample_cpf, "draw compound Poisson forests", files=False)
    sp.add_argument("--theta", type=_num, required=True)
    sp.add_argument("--depth", type=_num, default=None)
    sp.add_argument("--atoms", help="atom documents (optionally {\"weight\", \"tree\"} records)")
    sp.add_argument("--n", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)

    sp = cmd("gw", cmd_gw, "branching genealogies", files=False)
    sp.add_argument("files", nargs="*", help="initial-state documents (default: --init individuals)")
    sp.add_argument("--init", type=int, default=1)
    sp.add_argument("--rate", type=float, required=True)
    sp.add_argument("--t", type=_num, required=True)
    sp.add_argument("--mass", default="1")
    sp.add_argument("--n", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)

    for name, fn, help, default_n in (
        ("verify-lk", cmd_verify_lk, "CPF Laplace functional against the exact formula", 100_000),
        ("verify-root", cmd_verify_root, "n-th roots of a CPF", 100_000),
        ("verify-branching", cmd_verify_branching, "branching property of GW genealogies", 50_000),
        ("verify-star-mass", cmd_verify_star_mass, "star-forest total mass against its Levy measure", 100_000),
        ("suite", cmd_suite, "run the full acceptance battery", None),
    ):
        sp = cmd(name, fn, help, files=False)
        sp.add_argument("--seed", type=int, default=ex.DEFAULT_SEED)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--sigma", type=float, default=ex.DEFAULT_SIGMA)
        if default_n is not None:
            sp.add_argument("--samples", type=int, default=default_n)
        if name in ("verify-lk", "verify-root"):
            sp.add_argument("--theta", type=_num, default=None)
            sp.add_argument("--atoms")
            sp.add_argument("--depth", type=_num, default=None)
            sp.add_argument("--n-roots", type=int, default=64 if name == "verify-lk" else 4)
        if name == "verify-star-mass":
            sp.add_argument("--levy", help="atoms as x:rate,x:rate")
        if name == "suite":
            sp.add_argument("--only", nargs="*", help="criterion names")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.format is None:
        args.format = "csv" if args.command in ("fragmentation-path", "eval") or args.command.startswith("verify") or args.command == "suite" else "doc"
    t0 = time.perf_counter()
    try:
        if args.command.startswith("verify") or args.command == "suite":
            status = args.fn(args, sys.stdout)
        else:
            with _Output(args.out) as out:
                status = args.fn(args, out)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"umforest: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (UmforestError, ValueError, json.JSONDecodeError) as e:
        print(f"umforest: invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"umforest: {e}", file=sys.stderr)
        return EXIT_INVALID
    print(f"umforest: {args.command} finished in {time.perf_counter() - t0:.2f}s", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
