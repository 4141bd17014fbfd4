"""Distance-matrix measures, (truncated) polynomials and their functionals.

A test function receives a batch of symmetric distance matrices of shape
``(C, m, m)`` (zero diagonal, float user units) and returns ``C`` values.
Gradients, when present, return ``(C, m, m)`` arrays whose upper triangle
holds ``d phi / d r_ij``.
"""

from __future__ import annotations

import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable

import numpy as np

from .dendrogram import SCALE, Dendrogram, canonicalize, to_ticks
from .errors import BudgetExceeded, DomainError
from .rng import stream
from .semigroup import _truncate_ticks, decompose

ENUMERATION_BUDGET = 10**7
_CHUNK = 1 << 16


# -- test functions -----------------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """A vectorised test function with an optional gradient and sup-norm bound."""

    fn: Callable
    grad: Callable | None = None
    bound: float | None = None
    name: str = "phi"

    def __call__(self, R):
        out = np.asarray(self.fn(R), dtype=np.float64)
        return np.broadcast_to(out, (R.shape[0],))


def _upper(m):
    return np.triu_indices(m, 1)


@dataclass(frozen=True)
class Constant:
    c: float = 1.0

    def __call__(self, R):
        return np.full(R.shape[0], self.c)

    def grad(self, R):
        return np.zeros_like(R)


@dataclass(frozen=True)
class Coordinate:
    """``r_ij ** power`` with 1-based indices."""

    i: int = 1
    j: int = 2
    power: int = 1

    def __call__(self, R):
        return R[:, self.i - 1, self.j - 1] ** self.power

    def grad(self, R):
        g = np.zeros_like(R)
        a, b = sorted((self.i - 1, self.j - 1))
        g[:, a, b] = self.power * R[:, a, b] ** (self.power - 1) if self.power else 0.0
        return g


@dataclass(frozen=True)
class DistanceSum:
    """Sum of all pairwise distances of the sample."""

    def __call__(self, R):
        iu = _upper(R.shape[1])
        return R[:, iu[0], iu[1]].sum(axis=1)

    def grad(self, R):
        g = np.zeros_like(R)
        iu = _upper(R.shape[1])
        g[:, iu[0], iu[1]] = 1.0
        return g


@dataclass(frozen=True)
class ExpSum:
    """``exp(-rate * sum_{i<j} r_ij)``."""

    rate: float = 1.0

    def __call__(self, R):
        return np.exp(-self.rate * DistanceSum()(R))

    def grad(self, R):
        return -self.rate * self(R)[:, None, None] * DistanceSum().grad(R)


@dataclass(frozen=True)
class Bump:
    """Product over pairs of the C^1 bump ``(1 - x^2)^2`` with ``x = (r - center) / width``."""

    center: float = 1.0
    width: float = 1.0

    def _parts(self, R):
        iu = _upper(R.shape[1])
        x = (R[:, iu[0], iu[1]] - self.center) / self.width
        inside = np.abs(x) < 1
        b = np.where(inside, (1 - x * x) ** 2, 0.0)
        db = np.where(inside, -4 * x * (1 - x * x) / self.width, 0.0)
        return iu, b, db

    def __call__(self, R):
        _, b, _ = self._parts(R)
        return b.prod(axis=1)

    def grad(self, R):
        iu, b, db = self._parts(R)
        g = np.zeros_like(R)
        k = b.shape[1]
        for p in range(k):
            others = np.prod(np.delete(b, p, axis=1), axis=1) if k > 1 else 1.0
            g[:, iu[0][p], iu[1][p]] = db[:, p] * others
        return g


@dataclass(frozen=True)
class Below:
    """Indicator that every pairwise distance is strictly below ``c``."""

    c: float

    def __call__(self, R):
        iu = _upper(R.shape[1])
        if len(iu[0]) == 0:
            return np.ones(R.shape[0])
        return np.all(R[:, iu[0], iu[1]] < self.c, axis=1).astype(np.float64)


@dataclass(frozen=True)
class CountAbove:
    """Number of pairs with distance strictly above ``c`` (locally constant away from ``c``)."""

    c: float

    def __call__(self, R):
        iu = _upper(R.shape[1])
        return (R[:, iu[0], iu[1]] > self.c).sum(axis=1).astype(np.float64)


@dataclass(frozen=True)
class PolyDist:
    """``sum_{i<j} r_ij ** power``: piecewise polynomial probe."""

    power: int = 2

    def __call__(self, R):
        iu = _upper(R.shape[1])
        return (R[:, iu[0], iu[1]] ** self.power).sum(axis=1)

    def grad(self, R):
        g = np.zeros_like(R)
        iu = _upper(R.shape[1])
        g[:, iu[0], iu[1]] = self.power * R[:, iu[0], iu[1]] ** (self.power - 1)
        return g


def test_function(obj, name=None, bound=None) -> TestFunction:
    """Wrap a built-in or a plain callable as a :class:`TestFunction`."""
    if isinstance(obj, TestFunction):
        return obj
    grad = getattr(obj, "grad", None)
    return TestFunction(obj, grad, bound, name or type(obj).__name__)


BUILTINS = {
    "one": lambda: Constant(1.0),
    "r12": lambda: Coordinate(1, 2),
    "sum": DistanceSum,
    "exp-sum": lambda: ExpSum(1.0),
    "bump": lambda: Bump(1.0, 1.0),
    "sq-sum": lambda: PolyDist(2),
}


def probe_basis() -> tuple:
    """Twelve untruncated monomials of order at most 3 used as a probe family."""
    fns = [
        (1, Constant(1.0)),
        (2, Constant(1.0)),
        (3, Constant(1.0)),
        (2, Coordinate(1, 2, 1)),
        (2, Coordinate(1, 2, 2)),
        (2, Coordinate(1, 2, 3)),
        (2, Below(1.25)),
        (2, ExpSum(1.0)),
        (2, Bump(2.0, 1.5)),
        (3, DistanceSum()),
        (3, PolyDist(2)),
        (3, CountAbove(1.25)),
    ]
    return tuple(MonomialSpec(m, test_function(f)) for m, f in fns)


# -- specs --------------------------------------------------------------------


@dataclass(frozen=True)
class MonomialSpec:
    """``Phi^{m, phi}`` with optional upper truncation depth ``h``."""

    order: int
    phi: TestFunction
    h: object = None

    def __post_init__(self):
        if self.order < 1:
            raise DomainError("monomial order must be at least 1")
        object.__setattr__(self, "phi", test_function(self.phi))

    @property
    def two_h_ticks(self):
        return None if self.h is None else 2 * to_ticks(self.h)

    def truncated(self, h) -> "MonomialSpec":
        return replace(self, h=h)


@dataclass(frozen=True)
class PolynomialSpec:
    """``constant + sum_k coef_k * Phi_k``."""

    terms: tuple = ()
    constant: float = 0.0

    @classmethod
    def of(cls, *monomials, constant=0.0):
        return cls(tuple((1.0, m) for m in monomials), constant)

    def truncated(self, h) -> "PolynomialSpec":
        return PolynomialSpec(tuple((c, m.truncated(h)) for c, m in self.terms), self.constant)


# -- enumeration --------------------------------------------------------------


def _check_budget(n, m, budget):
    if n**m > budget:
        raise BudgetExceeded(
            f"exact enumeration needs {n}^{m} = {n ** m} tuples > budget {budget}; use mode='mc' instead"
        )


def _tuples(n, m):
    """Yield ``(C, m)`` index blocks covering all ordered m-tuples (with repetition)."""
    total = n**m
    shape = (n,) * m
    for start in range(0, total, _CHUNK):
        flat = np.arange(start, min(total, start + _CHUNK))
        yield np.stack(np.unravel_index(flat, shape), axis=1) if m > 1 else flat[:, None]


def _gather(T, idx):
    return T[idx[:, :, None], idx[:, None, :]]


@dataclass(frozen=True)
class DistanceMatrixMeasure:
    """Finite measure on ultrametric ``m x m`` matrices.

    ``weights`` maps the upper triangle (row-major, in ticks) to an exact
    weight. For ``m = 1`` the single key is ``()`` with weight ``ū``.
    """

    order: int
    weights: dict = field(default_factory=dict)

    @property
    def total_weight(self) -> Fraction:
        return sum(self.weights.values(), Fraction(0))

    def matrices(self):
        """``(matrix, weight)`` pairs with float matrices in user units."""
        m = self.order
        iu = _upper(m)
        for key, w in sorted(self.weights.items()):
            M = np.zeros((m, m))
            M[iu] = np.array(key, dtype=np.float64) / SCALE
            yield M + M.T, w

    def __add__(self, other):
        if self.order != other.order:
            raise ValueError("orders differ")
        out = defaultdict(Fraction, self.weights)
        for k, w in other.weights.items():
            out[k] += w
        return DistanceMatrixMeasure(self.order, dict(out))


def distance_matrix_measure(m: int, d: Dendrogram, budget: int = ENUMERATION_BUDGET) -> DistanceMatrixMeasure:
    """Exact push-forward of ``mu^{⊗m}`` under the distance-matrix map."""
    if m < 1:
        raise DomainError("order must be at least 1")
    d = canonicalize(d)
    if m == 1:
        return DistanceMatrixMeasure(1, {(): d.total_mass} if d.total_mass else {})
    n = d.n_atoms
    _check_budget(n, m, budget)
    if n == 0:
        return DistanceMatrixMeasure(m, {})
    T = d.lca_ticks
    mass = [a.mass for a in d.atoms]
    iu = _upper(m)
    out: dict = defaultdict(Fraction)
    for idx in _tuples(n, m):
        keys = _gather(T, idx)[:, iu[0], iu[1]]
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        rows = idx.tolist()
        acc = [Fraction(0)] * len(uniq)
        for r, g in zip(rows, inv.tolist()):
            w = mass[r[0]]
            for i in r[1:]:
                w = w * mass[i]
            acc[g] += w
        for key, w in zip(map(tuple, uniq.tolist()), acc):
            out[key] += w
    return DistanceMatrixMeasure(m, dict(out))


# -- evaluation ---------------------------------------------------------------


@dataclass(frozen=True)
class Estimate:
    """Monte-Carlo mean with its CLT standard error."""

    mean: float
    stderr: float
    n: int

    def z(self, oracle) -> float:
        if self.stderr == 0:
            return 0.0 if self.mean == oracle else math.copysign(math.inf, self.mean - oracle)
        return (self.mean - oracle) / self.stderr


def _truncation_mask(M, two_h):
    C = M.shape[0]
    return M.reshape(C, -1).max(axis=1) < two_h


def _exact_sum(phi, m, d: Dendrogram, two_h, budget):
    n = d.n_atoms
    if n == 0:
        return 0.0
    _check_budget(n, m, budget)
    T = d.lca_ticks
    w_atoms = d.masses
    partial = []
    for idx in _tuples(n, m):
        M = _gather(T, idx)
        w = w_atoms[idx].prod(axis=1)
        if two_h is not None:
            keep = _truncation_mask(M, two_h)
            if not keep.any():
                continue
            M, w = M[keep], w[keep]
        vals = phi(M / SCALE)
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"test function {getattr(phi, 'name', phi)!r} returned a non-finite value")
        # fsum keeps sums over unions of tuple sets exactly additive up to rounding of the total
        partial.append(math.fsum(w * vals))
    return math.fsum(partial)


def eval_monomial(
    spec: MonomialSpec,
    d: Dendrogram,
    mode: str = "exact",
    samples: int = 10_000,
    seed: int = 0,
    budget: int = ENUMERATION_BUDGET,
):
    """``<phi_h, nu^{m, d}>``.

    ``mode="exact"`` enumerates all ordered m-tuples of atoms and returns a
    float. ``mode="mc"`` draws ``samples`` i.i.d. tuples proportional to
    mass and returns an :class:`Estimate`.
    """
    d = canonicalize(d)
    if mode == "exact":
        return _exact_sum(spec.phi, spec.order, d, spec.two_h_ticks, budget)
    if mode != "mc":
        raise ValueError(f"unknown mode {mode!r}")
    if samples < 2:
        raise ValueError("need at least two samples")
    if d.n_atoms == 0:
        return Estimate(0.0, 0.0, samples)
    ubar = float(d.total_mass)
    rng = stream(seed, "eval-monomial")
    idx = rng.choice(d.n_atoms, size=(samples, spec.order), p=d.masses / d.masses.sum())
    M = _gather(d.lca_ticks, idx)
    vals = spec.phi(M / SCALE) * ubar**spec.order
    if spec.two_h_ticks is not None:
        vals = np.where(_truncation_mask(M, spec.two_h_ticks), vals, 0.0)
    return Estimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples)), samples)


def eval_polynomial(poly: PolynomialSpec, d: Dendrogram, budget: int = ENUMERATION_BUDGET) -> float:
    d = canonicalize(d)
    return poly.constant + sum(c * eval_monomial(m, d, budget=budget) for c, m in poly.terms)


# -- power sums ---------------------------------------------------------------


@dataclass(frozen=True)
class LiftedPower:
    """Order ``m*n`` test function chaining ``n`` blocks of a truncated ``phi``."""

    phi: TestFunction
    m: int
    n: int
    two_h: float

    def __call__(self, R):
        m, n = self.m, self.n
        out = np.ones(R.shape[0])
        for p in range(n):
            block = R[:, p * m : (p + 1) * m, p * m : (p + 1) * m]
            iu = _upper(m)
            if len(iu[0]):
                out = out * np.all(block[:, iu[0], iu[1]] < self.two_h, axis=1)
            out = out * self.phi(block)
            if p < n - 1:
                out = out * (R[:, (p + 1) * m - 1, (p + 1) * m] < self.two_h)
        return out


def lifted_power_spec(spec: MonomialSpec, n: int) -> MonomialSpec:
    """Monomial of order ``m n`` whose value is the n-th power sum over primes."""
    if spec.h is None:
        raise DomainError("power sums need a truncated spec")
    # the chaining indicators compare user-unit floats exactly at 2h
    two_h = 2 * to_ticks(spec.h) / SCALE
    return MonomialSpec(spec.order * n, TestFunction(LiftedPower(spec.phi, spec.order, n, two_h), name="lifted"))


def power_sum_monomial(spec: MonomialSpec, n: int, d: Dendrogram, path: str = "decomposition", budget=ENUMERATION_BUDGET):
    """``sum_i Phi_h(u_i) ** n`` over the h-primes ``u_i`` of ``d``.

    ``path="lifted"`` evaluates the order ``m n`` lifted monomial on the
    h-top instead; both paths agree exactly in exact arithmetic.
    """
    if spec.h is None:
        raise DomainError("power sums need a truncated spec")
    if n < 1:
        raise DomainError("power must be at least 1")
    if path == "decomposition":
        primes = decompose(spec.h, d).primes
        return float(sum(eval_monomial(spec, p, budget=budget) ** n for p in primes))
    if path == "lifted":
        top = _truncate_ticks(spec.two_h_ticks, d)
        return eval_monomial(lifted_power_spec(spec, n), top, budget=budget)
    raise ValueError(f"unknown path {path!r}")


# -- Laplace functionals ------------------------------------------------------


@dataclass(frozen=True)
class _LaplaceRun:
    sampler: Callable
    polys: tuple

    def __call__(self, rng, count):
        cache: dict = {}
        vals = np.empty((count, len(self.polys)))
        for i in range(count):
            u = canonicalize(self.sampler(rng))
            key = u.encoding.data
            v = cache.get(key)
            if v is None:
                v = cache[key] = [math.exp(-eval_polynomial(p, u)) for p in self.polys]
            vals[i] = v
        return vals


def _split(N, workers):
    base, extra = divmod(N, workers)
    return [base + (1 if w < extra else 0) for w in range(workers)]


def sample_values(fn, N: int, seed: int, label: str, workers: int = 1):
    """Evaluate ``fn(rng, count)`` on per-worker streams and stack the results.

    Worker ``w`` uses the stream ``(seed, label, w)``. Results depend on
    ``workers`` but are reproducible for a fixed ``(seed, workers)`` pair.
    """
    if N < 2:
        raise ValueError("need N >= 2")
    counts = _split(N, workers)
    if workers == 1:
        return fn(stream(seed, label, 0), counts[0])
    with ProcessPoolExecutor(workers) as ex:
        futs = [ex.submit(fn, stream(seed, label, w), c) for w, c in enumerate(counts)]
        return np.concatenate([f.result() for f in futs])


def mean_estimates(vals) -> list:
    """Column-wise :class:`Estimate` of a ``(N, k)`` sample array."""
    N = vals.shape[0]
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(N)
    return [Estimate(float(a), float(b), N) for a, b in zip(mean, se)]


def laplace_estimates(sampler, polys, N: int, seed: int, workers: int = 1, label: str = "laplace") -> list:
    """Empirical ``E[exp(-Phi(U))]`` for each polynomial, on common draws of ``sampler(rng)``."""
    return mean_estimates(sample_values(_LaplaceRun(sampler, tuple(polys)), N, seed, label, workers))


def laplace_estimate(sampler, poly: PolynomialSpec, N: int, seed: int, workers: int = 1) -> Estimate:
    """Empirical ``E[exp(-Phi(U))]`` over ``N`` draws with its CLT standard error."""
    return laplace_estimates(sampler, [poly], N, seed, workers)[0]


def neg_log(est: Estimate) -> Estimate:
    """``-log`` of a positive estimate with a delta-method standard error."""
    if est.mean <= 0:
        raise ValueError("Laplace estimate must be positive")
    return Estimate(-math.log(est.mean), est.stderr / est.mean, est.n)


# -- generator ----------------------------------------------------------------


@dataclass(frozen=True)
class _Growth:
    grad: Callable

    def __call__(self, R):
        m = R.shape[1]
        iu = _upper(m)
        if len(iu[0]) == 0:
            return np.zeros(R.shape[0])
        return 2.0 * self.grad(R)[:, iu[0], iu[1]].sum(axis=1)


def theta_map(R, k: int, l: int):
    """Resampling map: sample ``l`` is replaced by a copy of sample ``k`` (0-based)."""
    idx = np.arange(R.shape[-1])
    idx[l] = k
    return R[..., idx[:, None], idx[None, :]]


@dataclass(frozen=True)
class _Resampled:
    phi: Callable
    k: int
    l: int

    def __call__(self, R):
        return self.phi(theta_map(R, self.k, self.l))


def generator_terms(spec: MonomialSpec, d: Dendrogram, a: float, b: float, budget=ENUMERATION_BUDGET) -> dict:
    """The growth, drift (``a n Phi``) and resampling parts of the generator."""
    if spec.phi.grad is None:
        raise DomainError("generator needs a test function with a gradient")
    if spec.h is not None:
        raise DomainError("generator acts on untruncated monomials")
    if b < 0:
        raise DomainError("branching rate b must be nonnegative")
    d = canonicalize(d)
    ubar = float(d.total_mass)
    if ubar == 0:
        return {"growth": 0.0, "drift": 0.0, "resampling": 0.0}
    n = spec.order
    growth = _exact_sum(TestFunction(_Growth(spec.phi.grad)), n, d, None, budget)
    drift = a * n * _exact_sum(spec.phi, n, d, None, budget)
    resampling = 0.0
    for k in range(n):
        for l in range(k + 1, n):
            resampling += _exact_sum(TestFunction(_Resampled(spec.phi, k, l)), n, d, None, budget)
    return {"growth": growth, "drift": drift, "resampling": b / ubar * resampling}


def generator_apply(spec: MonomialSpec, d: Dendrogram, a: float = 0.0, b: float = 1.0, budget=ENUMERATION_BUDGET) -> float:
    """Generator of the tree-valued Feller diffusion applied to ``Phi^{n, phi}`` at ``d``."""
    return sum(generator_terms(spec, d, a, b, budget).values())


def check_gradient(phi: TestFunction, probes, step: float = 1e-5, rtol: float = 1e-6, atol: float = 1e-9) -> bool:
    """Compare ``phi.grad`` with central differences on each probe matrix."""
    if phi.grad is None:
        raise DomainError("no gradient supplied")
    R = np.asarray(probes, dtype=np.float64)
    m = R.shape[1]
    g = phi.grad(R)
    for i, j in zip(*_upper(m)):
        E = np.zeros((m, m))
        E[i, j] = E[j, i] = step
        fd = (phi(R + E) - phi(R - E)) / (2 * step)
        if not np.allclose(g[:, i, j], fd, rtol=rtol, atol=atol):
            return False
    return True
