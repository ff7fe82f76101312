import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from cylrad import cylaw, parallel
from cylrad.cylaw import (CompoundPoisson, Convolution, FiniteMixture, Gaussian, GaussianJump,
                          PointMass, Pushforward, SampleMatrix, Stable, analytic_cf, cf_distance,
                          convolution_root_check, default_tau, empirical_cf, pushforward,
                          sample_projection)
from cylrad.errors import MomentError, SpaceMismatchError
from cylrad.spaces import (Operator, SpaceSpec, Vector, diagonal, hilbert, identity, unit,
                           zero_vector)

H3 = hilbert(3)


def stable_on(d, alpha, scale=1.0):
    return Stable(alpha, identity(H3 if d == 3 else hilbert(d)) * scale)


def all_laws():
    g = Vector([1.0, -0.5, 0.25], H3)
    mix = FiniteMixture(np.array([0.2, 0.8]), (Vector([1.0, 0, 0], H3), Vector([0, 2.0, -1], H3)))
    return [Gaussian(H3), stable_on(3, 0.8), stable_on(3, 1.5), stable_on(3, 2.0),
            CompoundPoisson(1.5, PointMass(g)), CompoundPoisson(0.7, GaussianJump(H3)),
            CompoundPoisson(2.0, mix), CompoundPoisson(2.0, mix, compensated=True),
            pushforward(Gaussian(H3), diagonal([1.0, 2.0, 0.5], H3)),
            Convolution((Gaussian(H3), CompoundPoisson(1.0, PointMass(g))))]


def test_analytic_cf_examples():
    H = hilbert(2)
    assert analytic_cf(Gaussian(H), zero_vector(H)) == 1.0
    assert analytic_cf(Gaussian(H), unit(H, 1)) == pytest.approx(math.exp(-0.5))
    g = Vector([math.pi, 0.0], H)
    # exp(c (e^{i pi} - 1)) with c = 1
    assert analytic_cf(CompoundPoisson(1.0, PointMass(g)), unit(H, 0)) == \
        pytest.approx(cmath.exp(cmath.exp(1j * math.pi) - 1.0))
    assert abs(analytic_cf(CompoundPoisson(1.0, PointMass(g)), unit(H, 0)) - math.exp(-2)) < 1e-12
    S = Stable(1.3, diagonal([0.5, 2.0], H))
    h = Vector([2.0, 0.0], H)          # ||F h||_alpha = 1
    assert analytic_cf(S, h) == pytest.approx(math.exp(-1.0))


def test_analytic_cf_space_mismatch():
    with pytest.raises(SpaceMismatchError):
        analytic_cf(Gaussian(hilbert(2)), unit(hilbert(3), 0))


def test_gaussian_jump_and_mixture_closed_forms():
    h = Vector([0.3, -0.4, 1.0], H3)
    n2 = float(h.coords @ h.coords)
    assert analytic_cf(CompoundPoisson(2.0, GaussianJump(H3)), h) == \
        pytest.approx(cmath.exp(2.0 * (math.exp(-0.5 * n2) - 1.0)))
    pts = (Vector([1.0, 0, 0], H3), Vector([0, 1.0, 0], H3))
    mix = FiniteMixture(np.array([0.25, 0.75]), pts)
    inner = 0.25 * cmath.exp(0.3j) + 0.75 * cmath.exp(-0.4j) - 1.0
    assert analytic_cf(CompoundPoisson(1.2, mix), h) == pytest.approx(cmath.exp(1.2 * inner))


def test_mixture_weights_validated():
    with pytest.raises(ValueError):
        FiniteMixture(np.array([0.5, 0.6]), (unit(H3, 0), unit(H3, 1)))
    with pytest.raises(ValueError):
        FiniteMixture(np.array([-0.5, 1.5]), (unit(H3, 0), unit(H3, 1)))


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(float, 3, elements=st.floats(-3, 3)))
def test_cf_symmetry_and_bound(c):
    h = Vector(c, H3)
    for law in all_laws():
        phi = analytic_cf(law, h)
        assert abs(phi) <= 1.0 + 1e-12
        assert analytic_cf(law, -h) == pytest.approx(phi.conjugate(), abs=1e-12)
        assert analytic_cf(law, zero_vector(H3)) == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(float, 3, elements=st.floats(-3, 3)),
       hnp.arrays(float, (3, 3), elements=st.floats(-2, 2)))
def test_pushforward_cf_identity(c, M):
    T = Operator(M, H3, H3)
    v = Vector(c, H3)
    for law in all_laws()[:8]:
        lhs = analytic_cf(pushforward(law, T), v)
        rhs = analytic_cf(law, Vector(M.T @ c, H3))
        assert lhs == rhs


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(float, 3, elements=st.floats(-3, 3)))
def test_stable_two_matches_gaussian(c):
    h = Vector(c, H3)
    S = Stable(2.0, identity(H3) * (1 / math.sqrt(2)))
    assert abs(analytic_cf(S, h) - analytic_cf(Gaussian(H3), h)) <= 1e-12


def test_stable_two_sampler_matches_gaussian():
    S = Stable(2.0, identity(H3) * (1 / math.sqrt(2)))
    funcs = [unit(H3, k) for k in range(3)]
    assert cf_distance(Gaussian(H3), sample_projection(S, funcs, 100_000, 4)).passed
    assert cf_distance(S, sample_projection(Gaussian(H3), funcs, 100_000, 4)).passed


def test_zero_functional_column_is_zero():
    z = zero_vector(H3)
    for law in all_laws():
        if isinstance(law, CompoundPoisson) and law.compensated:
            continue
        s = sample_projection(law, [z, unit(H3, 0)], 200, 1)
        assert not np.any(s.column(0))


def test_gaussian_sample_covariance():
    n = 100_000
    s = sample_projection(Gaussian(H3), [unit(H3, 0), unit(H3, 1)], n, 2)
    C = np.cov(s.values.T)
    assert np.max(np.abs(C - np.eye(2))) <= 5 / math.sqrt(n)


def test_gaussian_second_moment_is_norm_squared():
    n = 100_000
    h = Vector([1.0, -2.0, 0.5], H3)
    col = sample_projection(Gaussian(H3), [h], n, 3).column(0)
    target = float(h.coords @ h.coords)
    assert abs(np.mean(col ** 2) - target) <= 5 * target / math.sqrt(n)


def test_compound_poisson_empirical_cf_at_one():
    H = hilbert(2)
    g = Vector([1.0, 0.0], H)
    s = sample_projection(CompoundPoisson(1.0, PointMass(g)), [unit(H, 0)], 100_000, 5)
    target = cmath.exp(cmath.exp(1j) - 1.0)
    assert abs(empirical_cf(s, [1.0]) - target) <= default_tau(100_000, 1)


def test_compound_poisson_no_jumps_gives_zero():
    s = sample_projection(CompoundPoisson(0.5, GaussianJump(H3)), [unit(H3, 0)], 20_000, 1)
    frac_zero = np.mean(s.column(0) == 0.0)
    assert abs(frac_zero - math.exp(-0.5)) < 0.02


def test_empirical_cf_examples():
    s = sample_projection(Gaussian(H3), [unit(H3, 0)], 50, 0)
    assert empirical_cf(s, [0.0]) == 1.0
    one = SampleMatrix(np.array([[math.pi]]), (unit(H3, 0),), None, 0)
    assert empirical_cf(one, [1.0]) == pytest.approx(-1.0)
    big = sample_projection(Gaussian(H3), [unit(H3, 0)], 1_000_000, 8)
    assert abs(empirical_cf(big, [1.0]) - math.exp(-0.5)) <= 0.005
    with pytest.raises(ValueError):
        empirical_cf(s, [1.0, 2.0])


def test_cf_distance_detects_wrong_law():
    # Gaussian vs Cauchy of unit scale: the CFs coincide at t = 2 but differ
    # by 0.276 at t = 0.5, one of the default test scales
    H = hilbert(1)
    assert abs(math.exp(-0.125) - math.exp(-0.5)) > 0.1
    s = sample_projection(Gaussian(H), [unit(H, 0)], 10_000, 9)
    assert not cf_distance(Stable(1.0, identity(H)), s).passed
    assert not cf_distance(Stable(1.0, identity(H)), s, [[0.5]]).passed


def test_cf_distance_zero_functionals():
    s = SampleMatrix(np.zeros((10, 0)), (), None, 0)
    res = cf_distance(Gaussian(H3), s)
    assert res.max_abs_dev == 0.0 and res.passed


def test_sample_projection_rejects_bad_input():
    with pytest.raises(ValueError):
        sample_projection(Gaussian(H3), [unit(H3, 0)], 0, 1)
    with pytest.raises(SpaceMismatchError):
        sample_projection(Gaussian(H3), [unit(hilbert(2), 0)], 10, 1)


@pytest.mark.parametrize("law", all_laws()[:4], ids=lambda l: cylaw.describe(l))
def test_sample_linearity(law):
    h = Vector([0.4, -1.0, 2.0], H3)
    s = sample_projection(law, [h, h * 3.0], 1000, 12)
    np.testing.assert_allclose(s.column(1), 3.0 * s.column(0), rtol=1e-12, atol=1e-12)


def test_sampling_is_thread_invariant():
    law = CompoundPoisson(2.0, GaussianJump(H3))
    funcs = [unit(H3, k) for k in range(3)]
    a = sample_projection(law, funcs, 3 * parallel.CHUNK_ROWS + 17, 5).values
    parallel.set_threads(8)
    b = sample_projection(law, funcs, 3 * parallel.CHUNK_ROWS + 17, 5).values
    np.testing.assert_array_equal(a, b)


def test_root_examples():
    funcs = [unit(H3, k) for k in range(3)]
    assert convolution_root_check(Gaussian(H3), 4, funcs, 100_000, 1).passed
    g = Vector([1.0, 0.5, 0.0], H3)
    assert convolution_root_check(CompoundPoisson(2.0, PointMass(g)), 2, funcs, 100_000, 2).passed
    S = stable_on(3, 1.5)
    root = cylaw.root_law(S, 3)
    np.testing.assert_allclose(root.F.matrix, np.eye(3) * 3 ** (-2 / 3))
    assert convolution_root_check(S, 3, funcs, 100_000, 3).passed


def test_root_check_detects_wrong_root():
    # the k-th root of a law is not the law itself
    funcs = [unit(H3, 0)]
    law = Gaussian(H3)
    root = cylaw.root_law(law, 2)
    s = sample_projection(law, funcs, 20_000, 1).values + sample_projection(
        law, funcs, 20_000, 2).values
    assert not cf_distance(law, SampleMatrix(s, tuple(funcs), law, 0)).passed
    assert isinstance(root, Pushforward)


def test_moments_and_cotype_flags():
    assert not cylaw.has_weak_moments(stable_on(3, 1.5), 2.0)
    assert cylaw.has_weak_moments(stable_on(3, 1.5), 1.2)
    assert cylaw.has_weak_moments(stable_on(3, 2.0), 4.0)
    assert cylaw.finite_cotype(Gaussian(H3))
    assert cylaw.finite_cotype(CompoundPoisson(1.0, GaussianJump(H3)))
    assert not cylaw.finite_cotype(CompoundPoisson(1.0, PointMass(unit(H3, 0))))
    with pytest.raises(MomentError):
        cylaw.covariance_gram(stable_on(3, 1.5), np.eye(3))


def test_pushforward_validation():
    with pytest.raises(SpaceMismatchError):
        Pushforward(Gaussian(H3), identity(hilbert(2)))
    with pytest.raises(ValueError):
        Pushforward(pushforward(Gaussian(H3), identity(H3)), identity(H3))
    with pytest.raises(ValueError):
        Stable(2.5, identity(H3))
    with pytest.raises(ValueError):
        CompoundPoisson(0.0, GaussianJump(H3))
    with pytest.raises(SpaceMismatchError):
        Gaussian(SpaceSpec(3.0, 2))


def test_samples_csv_round_trip(tmp_path):
    s = sample_projection(Gaussian(H3), [unit(H3, 0), unit(H3, 2)], 25, 6, labels=("a", "b"))
    path = tmp_path / "s.csv"
    cylaw.write_samples_csv(s, path)
    values, labels, meta = cylaw.read_samples_csv(path)
    np.testing.assert_array_equal(values, s.values)
    assert labels == ["a", "b"]
    assert "seed=6" in meta and "n=25" in meta and "gaussian" in meta
