"""Seeded samplers for infinitely divisible random forests.

Samplers are picklable callables ``sampler(rng) -> Dendrogram`` so batch
estimators can fan out across processes. Every public ``sample_*`` entry
point takes an integer seed and derives its stream from a fixed label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import cached_property
from typing import Callable

import numpy as np

from . import _kernels
from .dendrogram import NULL, SCALE, Dendrogram, Leaf, Node, as_mass, canonicalize, fold, make, star, to_ticks
from .errors import DomainError
from .polynomials import Estimate, PolynomialSpec, eval_polynomial, mean_estimates, sample_values
from .rng import stream, stream_key
from .semigroup import _concat_ticks, _truncate_ticks, concat

# -- Lévy models --------------------------------------------------------------


@dataclass(frozen=True)
class LevyModel:
    """Compound Poisson forest law: ``Poisson(theta)`` i.i.d. draws from ``atoms`` glued at depth ``t``.

    ``atoms`` is a tuple of ``(weight, Dendrogram)`` with positive weights
    summing to one. Weights are stored as exact fractions.
    """

    theta: float
    atoms: tuple
    t: object

    def __post_init__(self):
        if self.theta < 0:
            raise DomainError("intensity must be nonnegative")
        two_t = 2 * to_ticks(self.t)
        if two_t <= 0:
            raise DomainError("depth must be positive")
        clean = []
        for w, d in self.atoms:
            w = as_mass(w)
            d = canonicalize(d)
            if w <= 0:
                raise DomainError("atom weights must be positive")
            if d.is_null:
                raise DomainError("atoms must be nonzero forests")
            if d.diameter_ticks > two_t:
                raise DomainError(f"atom of diameter {d.diameter} exceeds 2t")
            clean.append((w, d))
        if not clean:
            raise DomainError("need at least one atom")
        if abs(float(sum(w for w, _ in clean)) - 1.0) > 1e-12:
            raise DomainError("atom weights must sum to 1")
        object.__setattr__(self, "atoms", tuple(clean))

    @cached_property
    def _probs(self):
        p = np.array([float(w) for w, _ in self.atoms])
        return p / p.sum()

    def sample(self, rng) -> Dendrogram:
        M = int(rng.poisson(self.theta))
        if M == 0:
            return NULL
        idx = rng.choice(len(self.atoms), size=M, p=self._probs)
        return _concat_ticks(2 * to_ticks(self.t), [self.atoms[i][1] for i in idx])


@dataclass(frozen=True)
class CpfSampler:
    model: LevyModel

    def __call__(self, rng):
        return self.model.sample(rng)


def sample_cpf(model: LevyModel, seed: int) -> Dendrogram:
    return model.sample(stream(seed, "sample-cpf"))


def sample_poisson_cluster(levy: LevyModel, seed: int) -> Dendrogram:
    """Concatenation of a Poisson point process of forests with intensity ``theta * atoms``."""
    return levy.sample(stream(seed, "poisson-cluster"))


def _check_depth(model, h):
    h = model.t if h is None else h
    if to_ticks(h) <= 0 or to_ticks(h) > to_ticks(model.t):
        raise DomainError(f"depth must lie in (0, {model.t}]")
    return h


def cpf_log_laplace_exact(model: LevyModel, spec: PolynomialSpec, h=None) -> float:
    """``-log E[exp(-Phi_h(P))] = theta * sum_k w_k (1 - exp(-Phi_h(atom_k)))``.

    ``spec`` is truncated at ``h`` (default: the model depth); a constant
    term passes through unchanged.
    """
    h = _check_depth(model, h)
    trunc = PolynomialSpec(spec.truncated(h).terms, 0.0)
    acc = sum(float(w) * -math.expm1(-eval_polynomial(trunc, d)) for w, d in model.atoms)
    return spec.constant + model.theta * acc


def cpf_levy_at_depth(model: LevyModel, h) -> LevyModel:
    """Push the atom law forward under truncation at ``h`` and merge isomorphic images."""
    h = _check_depth(model, h)
    two_h = 2 * to_ticks(h)
    merged: dict = {}
    for w, d in model.atoms:
        top = _truncate_ticks(two_h, d)
        key = top.encoding.data
        if key in merged:
            merged[key] = (merged[key][0] + w, top)
        else:
            merged[key] = (w, top)
    atoms = tuple(merged[k] for k in sorted(merged))
    return LevyModel(model.theta, atoms, h)


def nth_root_cpf(model: LevyModel, n: int) -> LevyModel:
    if n < 1:
        raise DomainError("n must be a positive integer")
    return replace(model, theta=model.theta / n)


@dataclass(frozen=True)
class RootConcatSampler:
    """Concatenation at depth ``h`` of ``n`` independent draws from ``root``."""

    root: Callable
    n: int
    h: object

    def __call__(self, rng):
        return concat(self.h, [self.root(rng) for _ in range(self.n)])


@dataclass(frozen=True)
class _ExcursionRun:
    sampler: Callable
    polys: tuple
    n: int

    def __call__(self, rng, count):
        cache: dict = {}
        out = np.empty((count, len(self.polys)))
        for i in range(count):
            u = self.sampler(rng)
            key = u.encoding.data
            v = cache.get(key)
            if v is None:
                v = cache[key] = [-math.expm1(-eval_polynomial(p, u)) for p in self.polys]
            out[i] = v
        return self.n * out


def estimate_levy_functionals(model: LevyModel, n: int, specs, N: int, seed: int, workers: int = 1, h=None) -> list:
    """``n * mean(1 - exp(-Phi_h(U)))`` over ``N`` draws of the n-th root, per spec, on common draws."""
    h = _check_depth(model, h)
    root = CpfSampler(nth_root_cpf(model, n))
    run = _ExcursionRun(root, tuple(s.truncated(h) for s in specs), n)
    return mean_estimates(sample_values(run, N, seed, "levy-functional", workers))


def estimate_levy_functional(model: LevyModel, n: int, spec: PolynomialSpec, N: int, seed: int, workers: int = 1, h=None) -> Estimate:
    """Excursion approximant of ``int (1 - exp(-Phi_h)) d lambda_h``; tends to it as ``n`` grows."""
    return estimate_levy_functionals(model, n, [spec], N, seed, workers, h)[0]


# -- real Lévy measures and star forests -------------------------------------


@dataclass(frozen=True)
class RealLevySpec:
    """Lévy measure on ``(0, inf)``: point atoms ``(location, rate)`` plus an optional density.

    A density is restricted to ``[lower, upper]`` with ``lower > 0``
    (small jumps removed) and sampled from a tabulated inverse CDF on a
    geometric grid. The piecewise-uniform law on that grid is what the
    sampler actually draws, and :meth:`log_laplace` integrates against it.
    """

    atoms: tuple = ()
    density: Callable | None = None
    lower: float = 0.0
    upper: float = math.inf
    grid: int = 4097

    def __post_init__(self):
        for x, rate in self.atoms:
            if x <= 0 or rate < 0:
                raise DomainError("atoms need positive location and nonnegative rate")
        if self.density is not None:
            if not self.lower > 0:
                raise DomainError("infinite-activity density needs a small-jump threshold lower > 0")
            if not math.isfinite(self.upper) or self.upper <= self.lower:
                raise DomainError("density needs a finite upper cutoff above lower")

    @cached_property
    def _table(self):
        x = np.geomspace(self.lower, self.upper, self.grid)
        f = np.asarray(self.density(x), dtype=np.float64)
        if np.any(f < 0) or not np.all(np.isfinite(f)):
            raise DomainError("density must be finite and nonnegative")
        cell = 0.5 * (f[1:] + f[:-1]) * np.diff(x)
        return x, np.concatenate([[0.0], np.cumsum(cell)])

    @property
    def density_rate(self) -> float:
        return 0.0 if self.density is None else float(self._table[1][-1])

    def log_laplace(self, s: float) -> float:
        """``int (1 - exp(-s x)) nu(dx)`` for the law the sampler draws."""
        out = sum(rate * -math.expm1(-s * x) for x, rate in self.atoms)
        if self.density is not None and s != 0:
            x, cdf = self._table
            mass = np.diff(cdf)
            avg_exp = (np.exp(-s * x[:-1]) - np.exp(-s * x[1:])) / (s * np.diff(x))
            out += float(np.dot(mass, 1.0 - avg_exp))
        return out

    def sample_masses(self, rng) -> list:
        masses = []
        for x, rate in self.atoms:
            masses.extend([x] * int(rng.poisson(rate)))
        if self.density is not None:
            x, cdf = self._table
            k = int(rng.poisson(cdf[-1]))
            if k:
                masses.extend(np.interp(rng.random(k) * cdf[-1], cdf, x).tolist())
        return masses


@dataclass(frozen=True)
class StarSampler:
    h: object
    nu: RealLevySpec

    def __call__(self, rng):
        masses = self.nu.sample_masses(rng)
        return star(self.h, masses) if masses else NULL


def star_forest_from_levy(h, nu: RealLevySpec, seed: int) -> Dendrogram:
    """Singletons with Poisson-process masses at mutual distance ``2h``."""
    return StarSampler(h, nu)(stream(seed, "star-forest"))


# -- Galton-Watson genealogies ------------------------------------------------


@dataclass(frozen=True)
class GwConfig:
    """Critical binary branching from ``initial`` individuals at one point.

    ``p_split`` other than 1/2 gives sub- or supercritical branching; it is
    an extension and no acceptance check depends on it.
    """

    initial: int
    rate: float
    t: float
    mass: object = 1
    p_split: float = 0.5

    def __post_init__(self):
        if self.initial < 0 or self.rate < 0 or self.t < 0:
            raise DomainError("initial count, rate and t must be nonnegative")
        if as_mass(self.mass) <= 0:
            raise DomainError("mass per individual must be positive")


def _individuals(initial: Dendrogram, a: Fraction) -> list:
    counts = []
    for atom in initial.atoms:
        k = atom.mass / a
        if k.denominator != 1:
            raise DomainError(f"atom mass {atom.mass} is not a multiple of {a}")
        counts.append(int(k))
    return counts


def _label_id(label) -> int:
    return stream_key(0, "leaf-label", label)


def gw_root_keys(initial: Dendrogram, a, base_key: int, key_by: str = "position"):
    """Per-individual root keys and per-atom individual counts.

    ``key_by="label"`` derives each atom's keys from its leaf label, so two
    initial states that share labelled atoms share their lineages.
    """
    initial = canonicalize(initial)
    counts = _individuals(initial, as_mass(a))
    if key_by == "position":
        return _kernels.child_keys(base_key, 0, sum(counts)), counts
    if key_by != "label":
        raise ValueError(f"unknown key_by {key_by!r}")
    parts = []
    seen = set()
    for atom, k in zip(initial.atoms, counts):
        if atom.label is None or atom.label in seen:
            raise DomainError("label keying needs unique leaf labels on every atom")
        seen.add(atom.label)
        parts.append(_kernels.child_keys(_kernels.child_key(base_key, _label_id(atom.label)), 0, k))
    keys = np.concatenate(parts) if parts else np.zeros(0, dtype=np.uint64)
    return keys, counts


def _lineage_trees(parents, times, n_roots, two_t, a):
    """Subtree (or None) per root individual from kernel records."""
    n = len(parents)
    kids = [[] for _ in range(n)]
    out = [None] * n_roots
    leaf = Leaf(a)
    # records are in pre-order, so children always follow their parent
    for i in range(n - 1, -1, -1):
        t = times[i]
        if t != t:
            tree = leaf
        else:
            ch = kids[i]
            if not ch:
                continue
            tree = ch[0] if len(ch) == 1 else Node(max(0, two_t - round(2 * t * SCALE)), tuple(ch))
        p = parents[i]
        if p >= 0:
            kids[p].append(tree)
        else:
            out[-p - 1] = tree
    return out


def gw_evolve(
    initial: Dendrogram,
    rate: float,
    t,
    mass,
    seed: int | None = None,
    label: str = "gw",
    key_by: str = "position",
    p_split: float = 0.5,
    base_key: int | None = None,
) -> Dendrogram:
    """Genealogy at time ``t`` of branching started from ``initial``.

    Each atom of mass ``k * mass`` holds ``k`` individuals at distance 0.
    Existing distances grow by ``2t``; two survivors with a common ancestor
    born at time ``s`` sit at distance ``2 (t - s)``. The same key gives the
    same lineages for every horizon ``t``.
    """
    a = as_mass(mass)
    if base_key is None:
        base_key = stream_key(seed, label)
    initial = canonicalize(initial)
    if initial.is_null:
        return NULL
    keys, counts = gw_root_keys(initial, a, base_key, key_by)
    two_t = 2 * to_ticks(t)
    parents, times = _kernels.gw_forest(keys, rate, float(t), p_split)
    subtrees = _lineage_trees(parents.tolist(), times.tolist(), len(keys), two_t, a)
    offsets = np.concatenate([[0], np.cumsum(counts)]).tolist()
    # fold visits leaves in the same left-to-right order as ``initial.atoms``
    order = iter(range(len(counts)))

    def on_leaf(lf):
        i = next(order)
        subs = tuple(s for s in subtrees[offsets[i] : offsets[i + 1]] if s is not None)
        return Node(two_t, subs) if subs else None

    def on_node(nd, ch):
        ch = tuple(c for c in ch if c is not None)
        return Node(nd.ticks + two_t, ch) if ch else None

    root = fold(initial.root, on_leaf, on_node)
    return make(root) if root is not None else NULL


def gw_total_mass(initial: Dendrogram, rate: float, t, mass, base_key: int, key_by: str = "position", p_split: float = 0.5) -> Fraction:
    """Total mass of ``gw_evolve`` with the same key, without building the tree."""
    a = as_mass(mass)
    keys, _ = gw_root_keys(initial, a, base_key, key_by)
    return a * _kernels.gw_survivors(keys, rate, float(t), p_split)


def gw_genealogy(config: GwConfig, seed: int) -> Dendrogram:
    """Population at time ``t`` from ``config.initial`` individuals, each of mass ``config.mass``."""
    a = as_mass(config.mass)
    if config.initial == 0:
        return NULL
    start = Dendrogram(Leaf(config.initial * a))
    return gw_evolve(start, config.rate, config.t, a, seed, "gw-genealogy", p_split=config.p_split)


@dataclass(frozen=True)
class GwSampler:
    """Draws ``gw_evolve(initial, ...)`` with a base key taken from ``rng``."""

    initial: Dendrogram
    rate: float
    t: object
    mass: object
    key_by: str = "position"
    p_split: float = 0.5

    def __call__(self, rng):
        key = int(rng.integers(0, 2**64, dtype=np.uint64))
        return gw_evolve(self.initial, self.rate, self.t, self.mass, key_by=self.key_by, p_split=self.p_split, base_key=key)


# -- convolution ---------------------------------------------------------------


@dataclass(frozen=True)
class ConstantSampler:
    d: Dendrogram

    def __call__(self, rng):
        return self.d


@dataclass(frozen=True)
class ConvolutionSampler:
    """Independent draws from both samplers concatenated at depth ``h``."""

    first: Callable
    second: Callable
    h: object

    def __call__(self, rng):
        return concat(self.h, [self.first(rng), self.second(rng)])


def branching_convolution_sample(sampler1, sampler2, h, seed: int) -> Dendrogram:
    return ConvolutionSampler(sampler1, sampler2, h)(stream(seed, "convolution"))
