import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from umforest import (
    NULL,
    MonomialSpec,
    PolynomialSpec,
    concat,
    count_balls,
    decompose,
    is_isomorphic,
    is_subforest,
    leaf,
    make,
    node,
    singleton,
    star,
    truncate,
)
from umforest.dendrogram import relabel, to_distance_matrix, to_ticks
from umforest.errors import DomainError
from umforest.polynomials import Constant, DistanceSum, laplace_estimate
from umforest.random_forests import (
    ConstantSampler,
    ConvolutionSampler,
    CpfSampler,
    GwConfig,
    GwSampler,
    LevyModel,
    RealLevySpec,
    StarSampler,
    branching_convolution_sample,
    cpf_levy_at_depth,
    cpf_log_laplace_exact,
    estimate_levy_functional,
    gw_evolve,
    gw_genealogy,
    gw_total_mass,
    nth_root_cpf,
    sample_cpf,
    sample_poisson_cluster,
    star_forest_from_levy,
)
from umforest.rng import stream, stream_key

MASS = PolynomialSpec.of(MonomialSpec(1, Constant(1.0)))


def unit_model(theta, t=1):
    return LevyModel(theta, ((1, singleton(1)),), t)


def mixed_model(theta=2.0):
    return LevyModel(theta, ((Fraction(1, 3), make(node(1, leaf(1), leaf(2)))), (Fraction(2, 3), make(node(1.5, node(0.5, leaf(1), leaf(1)), leaf(1))))), 1)


def draws(sampler, n, seed, label="test"):
    rng = stream(seed, label)
    return [sampler(rng) for _ in range(n)]


# -- Lévy models ----------------------------------------------------------------


def test_model_validation():
    with pytest.raises(DomainError):
        LevyModel(1, ((Fraction(1, 2), singleton(1)),), 1)
    with pytest.raises(DomainError):
        LevyModel(1, ((1, make(node(5, leaf(1), leaf(1)))),), 1)
    with pytest.raises(DomainError):
        LevyModel(1, ((1, NULL),), 1)
    with pytest.raises(DomainError):
        LevyModel(-1, ((1, singleton(1)),), 1)


def test_zero_intensity_gives_null():
    assert all(sample_cpf(unit_model(0.0), s).is_null for s in range(20))


def test_sampling_is_seeded():
    m = mixed_model()
    assert sample_cpf(m, 5).encoding == sample_cpf(m, 5).encoding
    assert sample_poisson_cluster(m, 5).encoding == sample_poisson_cluster(m, 5).encoding


def test_unit_atoms_give_poisson_mass():
    theta = 3.0
    masses = np.array([float(d.total_mass) for d in draws(CpfSampler(unit_model(theta)), 20_000, 1)])
    se = math.sqrt(theta / len(masses))
    assert abs(masses.mean() - theta) <= 3 * se


def test_ball_count_is_poisson_by_chi_square():
    theta = 2.0
    model = mixed_model(theta)
    counts = np.array([count_balls(1, d) for d in draws(CpfSampler(model), 20_000, 2)])
    k = np.arange(0, 8)
    observed = np.array([(counts == i).sum() for i in k[:-1]] + [(counts >= k[-1]).sum()])
    pmf = stats.poisson.pmf(k[:-1], theta)
    expected = len(counts) * np.append(pmf, 1 - pmf.sum())
    assert stats.chisquare(observed, expected).pvalue > 1e-3


def test_compound_poisson_mass_moments():
    theta = 2.0
    model = mixed_model(theta)
    m = np.array([float(d.total_mass) for d in draws(CpfSampler(model), 20_000, 3)])
    ws = [(float(w), float(d.total_mass)) for w, d in model.atoms]
    mean = theta * sum(w * x for w, x in ws)
    var = theta * sum(w * x * x for w, x in ws)
    assert abs(m.mean() - mean) <= 3 * math.sqrt(var / len(m))
    # variance of the sample variance from the fourth cumulant of a compound Poisson law
    k4 = theta * sum(w * x**4 for w, x in ws)
    se_var = math.sqrt((k4 + 2 * var**2) / len(m))
    assert abs(m.var(ddof=1) - var) <= 3 * se_var


def test_samples_are_t_forests_with_one_ball_per_atom():
    model = unit_model(4.0, t=2)
    for d in draws(CpfSampler(model), 200, 4):
        assert d.diameter_ticks <= 2 * to_ticks(2)
        assert count_balls(2, d) == d.total_mass


def test_null_probability_gives_intensity():
    theta = 1.5
    sample = draws(CpfSampler(mixed_model(theta)), 40_000, 5)
    p = np.mean([d.is_null for d in sample])
    se = math.sqrt(p * (1 - p) / len(sample)) / p
    assert abs(-math.log(p) - theta) <= 3 * se


def test_log_laplace_closed_form():
    assert cpf_log_laplace_exact(unit_model(2.0), PolynomialSpec()) == 0.0
    spec = PolynomialSpec(((math.log(2), MonomialSpec(1, Constant(1.0))),))
    assert cpf_log_laplace_exact(unit_model(2.0), spec) == pytest.approx(1.0, rel=1e-15)


def test_log_laplace_matches_simulation():
    model = mixed_model(2.0)
    spec = PolynomialSpec(((0.2, MonomialSpec(2, DistanceSum())),))
    est = laplace_estimate(CpfSampler(model), spec.truncated(1), 20_000, seed=6)
    assert abs(est.mean - math.exp(-cpf_log_laplace_exact(model, spec))) <= 3 * est.stderr


def test_levy_at_depth():
    m = mixed_model()
    assert cpf_levy_at_depth(m, 1).atoms == m.atoms
    far = LevyModel(1.0, ((1, make(node(5, leaf(1), leaf(1)))),), 3)
    assert cpf_levy_at_depth(far, 1).atoms == ((1, make(node(2, leaf(1), leaf(1)))),)
    with pytest.raises(DomainError):
        cpf_levy_at_depth(far, 4)


def test_levy_at_depth_merges_isomorphic_images():
    a, b = make(node(3, leaf(1), leaf(1))), make(node(2.5, leaf(1), leaf(1)))
    m = LevyModel(1.0, ((Fraction(1, 4), a), (Fraction(3, 4), b)), 2)
    assert cpf_levy_at_depth(m, 1).atoms == ((1, make(node(2, leaf(1), leaf(1)))),)


def test_levy_at_depth_is_a_pushforward():
    m = mixed_model()
    spec = PolynomialSpec.of(MonomialSpec(2, DistanceSum()))
    for h in (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4)):
        assert cpf_log_laplace_exact(cpf_levy_at_depth(m, h), spec) == pytest.approx(cpf_log_laplace_exact(m, spec, h), rel=1e-14)


def test_nth_root():
    m = mixed_model(2.0)
    assert nth_root_cpf(m, 1) == m
    assert nth_root_cpf(m, 2).theta == 1.0
    with pytest.raises(DomainError):
        nth_root_cpf(m, 0)


def test_levy_functional_edges():
    m = unit_model(2.0)
    assert estimate_levy_functional(m, 4, PolynomialSpec(), 100, seed=1).mean == 0.0
    one = estimate_levy_functional(m, 1, MASS, 4000, seed=2)
    lap = laplace_estimate(CpfSampler(m), MASS, 4000, seed=2)
    # same draw count; both estimate 1 - L(Phi)
    assert abs(one.mean - (1 - math.exp(-cpf_log_laplace_exact(m, MASS)))) <= 3 * one.stderr
    assert abs(lap.mean - math.exp(-cpf_log_laplace_exact(m, MASS))) <= 3 * lap.stderr


def test_levy_functional_for_many_roots():
    m = unit_model(2.0)
    n = 64
    est = estimate_levy_functional(m, n, MASS, 100_000, seed=3)
    exact = 2 * (1 - math.exp(-1))
    bias = 2 * exact / n
    assert abs(est.mean - exact) <= 3 * est.stderr + bias


# -- star forests ------------------------------------------------------------------


def test_star_forest_zero_measure():
    assert star_forest_from_levy(1, RealLevySpec(), seed=1).is_null


def test_star_forest_shape_and_seed():
    nu = RealLevySpec(((1.0, 3.0),))
    d = star_forest_from_levy(1, nu, seed=4)
    assert d == star_forest_from_levy(1, nu, seed=4)
    R, _, _ = to_distance_matrix(d)
    assert set(R[~np.eye(len(R), dtype=bool)].tolist()) <= {2.0}


def test_star_forest_atom_gives_poisson_mass():
    theta = 2.5
    sample = draws(StarSampler(1, RealLevySpec(((1.0, theta),))), 20_000, 7)
    masses = np.array([float(d.total_mass) for d in sample])
    assert abs(masses.mean() - theta) <= 3 * math.sqrt(theta / len(masses))


@pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
def test_star_mass_log_laplace_with_density(s):
    nu = RealLevySpec(((1.0, 0.5),), density=lambda x: 0.8 * np.exp(-x) / x, lower=0.01, upper=20.0)
    spec = PolynomialSpec(((s, MonomialSpec(1, Constant(1.0))),))
    est = laplace_estimate(StarSampler(1, nu), spec, 20_000, seed=8)
    assert abs(est.mean - math.exp(-nu.log_laplace(s))) <= 3 * est.stderr


def test_density_needs_cutoffs():
    with pytest.raises(DomainError):
        RealLevySpec(density=lambda x: 1 / x)


# -- Galton-Watson -----------------------------------------------------------------


def test_no_branching_keeps_initial_individuals():
    d = gw_genealogy(GwConfig(3, 0.0, 1.5, Fraction(1, 2)), seed=1)
    assert d == star(Fraction(3, 2), [Fraction(1, 2)] * 3)


def test_gw_is_seeded():
    cfg = GwConfig(5, 1.0, 1.0)
    assert gw_genealogy(cfg, 3) == gw_genealogy(cfg, 3)


def test_gw_critical_mean_mass():
    K, n = 4, 20_000
    sampler = GwSampler(singleton(K), 1.0, 1.0, 1)
    masses = np.array([float(d.total_mass) for d in draws(sampler, n, 9)])
    assert abs(masses.mean() - K) <= 3 * masses.std(ddof=1) / math.sqrt(n)


def test_gw_distances_split_by_root():
    t = Fraction(3, 2)
    start = relabel(star(1, [1, 1, 1]), ["a", "b", "c"])
    key = stream_key(11, "roots")
    full = gw_evolve(start, 1.3, t, 1, key_by="label", base_key=key)
    assert full.diameter_ticks <= 2 * to_ticks(t)
    # each root evolved alone with the same lineage keys gives exactly the primes at depth t
    alone = []
    for lbl in "abc":
        d = gw_evolve(relabel(singleton(1), [lbl]), 1.3, t, 1, key_by="label", base_key=key)
        if not d.is_null:
            assert d.diameter_ticks < 2 * to_ticks(t)
            alone.append(d)
    assert decompose(t, full).encodings() == decompose(t, concat(t, alone)).encodings()


def test_survivor_count_matches_tree():
    key = stream_key(4, "survivors")
    d = gw_evolve(singleton(6), 1.0, 2, 1, base_key=key)
    assert gw_total_mass(singleton(6), 1.0, 2, 1, base_key=key) == d.total_mass


def test_gw_rejects_fractional_individuals():
    with pytest.raises(DomainError):
        gw_evolve(singleton(Fraction(3, 2)), 1.0, 1, 1, seed=1)


def test_coupled_paths_are_ordered():
    u = relabel(make(node(1, leaf(1), leaf(2))), ["u1", "u2"])
    w = relabel(singleton(2), ["w1"])
    h = Fraction(1, 2)
    for seed in range(20):
        key = stream_key(seed, "coupling")
        for k in range(1, 6):
            t = Fraction(k, 5)
            small = gw_evolve(u, 1.5, t, 1, key_by="label", base_key=key)
            big = gw_evolve(concat(1, [u, w]), 1.5, t, 1, key_by="label", base_key=key)
            assert is_subforest(h + t, small, big)


def test_gw_from_null():
    assert gw_evolve(NULL, 1.0, 1, 1, seed=1).is_null
    assert gw_genealogy(GwConfig(0, 1.0, 1.0), seed=1).is_null


# -- convolution -------------------------------------------------------------------


def test_convolution_of_constants_is_concat():
    a, b = singleton(1), make(node(1, leaf(1), leaf(1)))
    assert branching_convolution_sample(ConstantSampler(a), ConstantSampler(b), 1, seed=1) == concat(1, [a, b])


def test_convolution_with_null_keeps_law():
    model = unit_model(2.0)
    spec = PolynomialSpec.of(MonomialSpec(1, Constant(0.7)))
    est = laplace_estimate(ConvolutionSampler(ConstantSampler(NULL), CpfSampler(model), 1), spec, 20_000, seed=10)
    assert abs(est.mean - math.exp(-cpf_log_laplace_exact(model, spec))) <= 3 * est.stderr


def test_truncated_sample_is_isomorphic_under_relabel():
    d = sample_cpf(mixed_model(), 12)
    assert is_isomorphic(truncate(1, d), relabel(d, range(d.n_atoms)))
