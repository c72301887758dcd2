import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stfreg.basis import (
    BasisError,
    BasisSpec,
    CoefficientVector,
    KernelCoefficients,
    SampledCurve,
    TimeDomain,
    basis_eval,
    gram_matrix,
    project_curve,
    project_values,
    quadrature_nodes,
    reconstruct_function,
    reconstruct_kernel,
    trapezoid_weights,
)

T15 = TimeDomain(0.0, 15.0)
T1 = TimeDomain(0.0, 1.0)

specs = st.one_of(
    st.builds(BasisSpec, st.just("fourier"), st.integers(0, 8), st.just(T15)),
    st.builds(BasisSpec, st.just("bspline"), st.integers(0, 8), st.just(T15)),
)


def test_K_and_labels():
    assert BasisSpec("fourier", 5).K == 11
    assert BasisSpec("fourier", 0).K == 1
    assert BasisSpec("bspline", 2).K == 6
    spec = BasisSpec.parse("fourier:3")
    assert spec.label == "fourier:3" and spec.K == 7
    assert BasisSpec.from_dict(spec.to_dict()) == spec


@pytest.mark.parametrize("bad", ["fourier", "fourier:x", "wavelet:3", "fourier:-1"])
def test_parse_rejects(bad):
    with pytest.raises(BasisError):
        BasisSpec.parse(bad)


def test_domain_validation():
    with pytest.raises(BasisError):
        TimeDomain(1.0, 1.0)
    with pytest.raises(BasisError):
        BasisSpec("fourier", 2, T15).evaluate([16.0])
    g = T15.grid(0.1)
    assert g.size == 151 and g[0] == 0.0 and g[-1] == 15.0


def test_constant_function_value():
    assert basis_eval(BasisSpec("fourier", 2, T1), 1, 0.3) == pytest.approx(1.0, abs=1e-12)
    assert basis_eval(BasisSpec("fourier", 2, T15), 1, 7.0) == pytest.approx(1 / np.sqrt(15), abs=1e-12)


def test_first_sine_value():
    assert basis_eval(BasisSpec("fourier", 1, T1), 2, 0.25) == pytest.approx(1.41421356, abs=1e-8)


def test_sine_cosine_orthogonal_by_quadrature():
    spec = BasisSpec("fourier", 1, T15)
    x = quadrature_nodes(T15)
    w = trapezoid_weights(x)
    E = spec.evaluate(x)
    assert abs(w @ (E[:, 1] * E[:, 2])) < 1e-10


def test_basis_index_range():
    with pytest.raises(BasisError):
        basis_eval(BasisSpec("fourier", 1, T1), 4, 0.5)


@pytest.mark.parametrize("family,order", [("fourier", m) for m in range(1, 9)] + [("bspline", m) for m in (0, 3, 8)])
def test_orthonormal(family, order):
    G = gram_matrix(BasisSpec(family, order, T15))
    assert np.max(np.abs(G - np.eye(G.shape[0]))) < 1e-6


def test_bspline_spans_cubic_polynomials():
    spec = BasisSpec("bspline", 3, T15)
    t = np.linspace(0, 15, 200)
    f = 0.5 - 0.2 * t + 0.03 * t**2 - 0.001 * t**3
    cv = project_curve(SampledCurve("s", t, f), spec)
    assert np.max(np.abs(reconstruct_function(cv, t) - f)) < 1e-9


def test_project_constant():
    spec = BasisSpec("fourier", 3, T15)
    t = np.sort(np.random.default_rng(0).uniform(0, 15, 40))
    cv = project_curve(SampledCurve("s", t, np.full(t.size, 2.5)), spec)
    expect = np.zeros(spec.K)
    expect[0] = 2.5 * np.sqrt(15)
    np.testing.assert_allclose(cv.coeffs, expect, atol=1e-10)


def test_project_basis_function_is_unit_vector():
    spec = BasisSpec("fourier", 3, T15)
    t = np.linspace(0, 15, 500)
    cv = project_curve(SampledCurve("s", t, spec.evaluate(t)[:, 2]), spec)
    e3 = np.zeros(spec.K)
    e3[2] = 1.0
    assert np.linalg.norm(cv.coeffs - e3) < 1e-6


def test_too_few_samples():
    spec = BasisSpec("fourier", 2, T15)
    t = np.linspace(0, 15, spec.K - 1)
    with pytest.raises(BasisError, match="rank"):
        project_curve(SampledCurve("s", t, np.sin(t)), spec)


def test_singular_design():
    # Sine terms vanish at every multiple of T/2 for the first harmonic pair.
    spec = BasisSpec("fourier", 1, T15)
    with pytest.raises(BasisError, match="singular"):
        project_values(np.array([0.0, 7.5, 15.0]), np.ones((1, 3)), spec)


def test_sampled_curve_validation():
    with pytest.raises(BasisError):
        SampledCurve("s", [1.0, 0.5], [0.0, 1.0])
    with pytest.raises(BasisError):
        SampledCurve("s", [0.0, 1.0], [0.0, np.nan])


def test_reconstruct_trivial():
    spec = BasisSpec("fourier", 2, T1)
    g = np.linspace(0, 1, 17)
    unit = np.zeros(spec.K)
    unit[0] = 1.0
    np.testing.assert_allclose(reconstruct_function(CoefficientVector(spec, unit), g), 1.0, atol=1e-12)
    np.testing.assert_array_equal(reconstruct_function(CoefficientVector(spec, np.zeros(spec.K)), g), 0.0)


def test_roundtrip_e2():
    spec = BasisSpec("fourier", 2, T15)
    t = np.linspace(0, 15, 600)
    f = spec.evaluate(t)[:, 1]
    cv = project_curve(SampledCurve("s", t, f), spec)
    assert np.max(np.abs(reconstruct_function(cv, t) - f)) < 1e-6


def test_kernel_trivial_and_outer_product():
    spec = BasisSpec("fourier", 2, T1)
    g = np.linspace(0, 1, 11)
    c = np.zeros((spec.K, spec.K))
    c[0, 0] = 1.0
    np.testing.assert_allclose(reconstruct_kernel(KernelCoefficients(spec, c), g, g), 1.0, atol=1e-12)
    assert not np.any(reconstruct_kernel(KernelCoefficients(spec, np.zeros_like(c)), g, g))

    rng = np.random.default_rng(3)
    a, b = rng.normal(size=spec.K), rng.normal(size=spec.K)
    gt, gu = np.linspace(0, 1, 13), np.linspace(0, 1, 9)
    surf = reconstruct_kernel(KernelCoefficients(spec, np.outer(a, b)), gt, gu)
    A = reconstruct_function(CoefficientVector(spec, a), gt)
    B = reconstruct_function(CoefficientVector(spec, b), gu)
    assert np.max(np.abs(surf - np.outer(A, B))) < 1e-10


def test_coefficient_shape_checks():
    spec = BasisSpec("fourier", 1, T1)
    with pytest.raises(BasisError):
        CoefficientVector(spec, [1.0, 2.0])
    with pytest.raises(BasisError):
        KernelCoefficients(spec, np.zeros((3, 2)))


# -- properties ------------------------------------------------------------


@given(spec=specs)
def test_prop_gram_identity(spec):
    G = gram_matrix(spec)
    assert np.max(np.abs(G - np.eye(spec.K))) < 1e-6


@given(spec=specs, seed=st.integers(0, 2**31 - 1), extra=st.integers(0, 30))
def test_prop_projection_idempotent(spec, seed, extra):
    rng = np.random.default_rng(seed)
    n = 2 * spec.K + extra
    t = np.sort(np.concatenate([[0.0, 15.0], rng.uniform(0, 15, n - 2)]))
    if np.any(np.diff(t) < 1e-6):
        return
    coeffs = rng.normal(size=spec.K)
    values = spec.evaluate(t) @ coeffs
    got = project_curve(SampledCurve("s", t, values), spec).coeffs
    assert np.linalg.norm(got - coeffs) <= 1e-8 * np.linalg.norm(coeffs)


@given(seed=st.integers(0, 2**31 - 1), a=st.floats(-5, 5), b=st.floats(-5, 5))
def test_prop_projection_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    spec = BasisSpec("fourier", 3, T15)
    t = np.sort(rng.uniform(0, 15, 30))
    f, g = rng.normal(size=30), rng.normal(size=30)
    pf = project_curve(SampledCurve("f", t, f), spec).coeffs
    pg = project_curve(SampledCurve("g", t, g), spec).coeffs
    pfg = project_curve(SampledCurve("fg", t, a * f + b * g), spec).coeffs
    np.testing.assert_allclose(pfg, a * pf + b * pg, atol=1e-10 * (1 + abs(a) + abs(b)))


@given(seed=st.integers(0, 2**31 - 1), order=st.integers(1, 6))
def test_prop_parseval(seed, order):
    rng = np.random.default_rng(seed)
    spec = BasisSpec("fourier", order, T15)
    t = np.linspace(0, 15, 1501)
    f = spec.evaluate(t) @ rng.normal(size=spec.K)
    coeffs = project_curve(SampledCurve("s", t, f), spec).coeffs
    l2 = trapezoid_weights(t) @ f**2
    assert abs(coeffs @ coeffs - l2) <= 0.01 * l2
