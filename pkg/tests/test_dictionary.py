import itertools

import numpy as np
import pytest

from koopid import (
    ComposedLift,
    DictionarySpec,
    ObservableSeries,
    PolynomialLift,
    RbfLift,
    assemble,
    build_delay_state,
    dict_output_dim,
    eval_lift,
    monomial_index_tuples,
)
from koopid.dictionary import eval_monomials, lifting_output_dim


def random_series(m, q, T, dt=0.1, seed=0):
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((m, T))
    U = rng.standard_normal((q, T)) if q else None
    return ObservableSeries(Y, U, dt)


# ---------------------------------------------------------------------------
# dict_output_dim
# ---------------------------------------------------------------------------

def test_dict_output_dim_table():
    assert dict_output_dim(2, 2, 4) == 12
    assert dict_output_dim(1, 2, 2) == 1
    assert dict_output_dim(10, 2, 4) == 990
    assert dict_output_dim(31, 2, 3) == 5952
    assert dict_output_dim(25, 2, 3) == 3250
    assert dict_output_dim(20, 2, 3) == 1750


def test_dict_output_dim_matches_enumeration():
    for n_vars in range(1, 7):
        for max_deg in range(2, 6):
            count = 0
            for k in range(2, max_deg + 1):
                count += sum(
                    1 for _ in itertools.combinations_with_replacement(range(n_vars), k)
                )
            assert dict_output_dim(n_vars, 2, max_deg) == count


def test_dict_output_dim_degenerate():
    with pytest.raises(ValueError):
        dict_output_dim(0, 2, 3)
    with pytest.raises(ValueError):
        dict_output_dim(3, 1, 3)
    with pytest.raises(ValueError):
        dict_output_dim(3, 3, 2)


# ---------------------------------------------------------------------------
# delay states
# ---------------------------------------------------------------------------

def test_delay_state_dims():
    cases = [
        (1, 1, 1, 3),  # scalar observable, scalar input, one delay
        (20, 2, 30, 680),
        (5, 0, 25, 130),
        (1, 0, 60, 61),
        (20, 1, 25, 545),
    ]
    for m, q, z, expected in cases:
        spec = DictionarySpec(m=m, q=q, z=z)
        assert spec.state_dim == expected
        series = random_series(m, q, z + 5)
        assert build_delay_state(series, spec, z).shape == (expected,)


def test_delay_state_layout():
    spec = DictionarySpec(m=1, q=1, z=2)
    Y = np.arange(6, dtype=float)[None, :]
    U = 10.0 + np.arange(6, dtype=float)[None, :]
    series = ObservableSeries(Y, U, 0.1)
    gamma = build_delay_state(series, spec, 4)
    # newest observable frame first, then history, then the z past inputs
    np.testing.assert_allclose(gamma, [4.0, 3.0, 2.0, 13.0, 12.0])


def test_delay_state_insufficient_history():
    spec = DictionarySpec(m=1, q=0, z=3)
    series = random_series(1, 0, 10)
    with pytest.raises(ValueError):
        build_delay_state(series, spec, 2)
    with pytest.raises(ValueError):
        build_delay_state(series, spec, 10)


# ---------------------------------------------------------------------------
# liftings
# ---------------------------------------------------------------------------

def test_lift_dims_match_counts():
    spec = DictionarySpec(m=1, q=1, z=1, lift=PolynomialLift(2, 4, "all"))
    assert spec.lift_dim == 12
    spec = DictionarySpec(m=20, q=2, z=30, lift=PolynomialLift(2, 3, "latest"))
    assert spec.lift_dim == 1750
    spec = DictionarySpec(m=1, q=1, z=30, lift=PolynomialLift(2, 3, "all"))
    assert spec.state_dim == 61
    assert spec.lift_dim == 5952
    centers = np.zeros((3, 10))
    spec = DictionarySpec(m=3, q=0, z=0, lift=ComposedLift(centers, 2, 4))
    assert spec.lift_dim == 990


def test_rbf_zero_at_center():
    rng = np.random.default_rng(1)
    centers = rng.standard_normal((2, 4))
    spec = DictionarySpec(m=2, q=0, z=0, lift=RbfLift(centers))
    out = eval_lift(spec, centers[:, 2])
    assert out[2] == pytest.approx(0.0, abs=1e-14)
    # other entries are the pairwise distances
    np.testing.assert_allclose(
        out, np.linalg.norm(centers - centers[:, 2:3], axis=0), atol=1e-12
    )


def test_polynomial_ones_map_to_ones():
    spec = DictionarySpec(m=2, q=1, z=2, lift=PolynomialLift(2, 3, "all"))
    gamma = np.ones(spec.state_dim)
    np.testing.assert_allclose(eval_lift(spec, gamma), np.ones(spec.lift_dim))


def test_monomial_order_is_graded_lex_and_stable():
    terms = list(monomial_index_tuples(3, 2, 3))
    # ascending total degree, then lexicographic index tuples within a degree
    degrees = [len(t) for t in terms]
    assert degrees == sorted(degrees)
    for d in set(degrees):
        block = [t for t in terms if len(t) == d]
        assert block == sorted(block)
    assert terms == list(monomial_index_tuples(3, 2, 3))


def test_monomial_evaluation_permutes_with_variables():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(3)
    perm = [2, 0, 1]
    terms = list(monomial_index_tuples(3, 2, 3))
    base = eval_monomials(terms, x[:, None])[:, 0]
    permuted = eval_monomials(terms, x[perm][:, None])[:, 0]
    # each permuted monomial must appear among the originals
    lookup = {tuple(sorted(t)): v for t, v in zip(terms, base)}
    for t, v in zip(terms, permuted):
        key = tuple(sorted(perm[i] for i in t))
        assert v == pytest.approx(lookup[key], rel=1e-12)


def test_latest_scope_ignores_history_and_inputs():
    spec = DictionarySpec(m=2, q=1, z=1, lift=PolynomialLift(2, 2, "latest"))
    gamma1 = np.array([1.0, 2.0, 9.0, 9.0, 9.0])
    gamma2 = np.array([1.0, 2.0, -3.0, 0.5, 7.0])
    np.testing.assert_allclose(eval_lift(spec, gamma1), eval_lift(spec, gamma2))


def test_inputs_never_lifted():
    spec = DictionarySpec(m=1, q=1, z=1, lift=PolynomialLift(2, 2, "all"))
    # lift sees the two observable frames only -> 3 quadratic monomials
    assert spec.lift_dim == dict_output_dim(2, 2, 2) == 3
    gamma = np.array([2.0, 3.0, 100.0])
    np.testing.assert_allclose(eval_lift(spec, gamma), [4.0, 6.0, 9.0])


def test_min_degree_below_two_rejected():
    with pytest.raises(ValueError):
        PolynomialLift(1, 3, "all")


def test_lifting_output_dim_helper():
    assert lifting_output_dim(PolynomialLift(2, 4, "all"), 2) == 12
    assert lifting_output_dim(RbfLift(np.zeros((2, 7))), 2) == 7
    assert lifting_output_dim(None, 5) == 0


# ---------------------------------------------------------------------------
# assemble
# ---------------------------------------------------------------------------

def test_assemble_minimal_pair():
    spec = DictionarySpec(m=1, q=0, z=2)
    series = random_series(1, 0, 4)  # T = z + 2
    data = assemble(series, spec)
    assert data.d == 1


def test_assemble_column_count():
    spec = DictionarySpec(m=1, q=1, z=1, lift=PolynomialLift(2, 4, "all"))
    series = random_series(1, 1, 10001)
    data = assemble(series, spec)
    assert data.Gamma.shape == (3, 9999)
    assert data.GammaPlus.shape == (3, 9999)
    assert data.Uin.shape == (1, 9999)
    assert data.Fn.shape == (12, 9999)


def test_assemble_autonomous_ignores_inputs():
    spec = DictionarySpec(m=2, q=0, z=1)
    series = random_series(2, 3, 20)
    data = assemble(series, spec)
    assert data.Uin is None


def test_assemble_too_short():
    spec = DictionarySpec(m=1, q=0, z=5)
    with pytest.raises(ValueError):
        assemble(random_series(1, 0, 6), spec)


def test_shift_consistency():
    spec = DictionarySpec(m=2, q=1, z=3)
    series = random_series(2, 1, 30, seed=3)
    data = assemble(series, spec)
    nb = spec.frame_dim  # entries per observable frame
    # frame blocks 1..z of each gamma+ equal frame blocks 0..z-1 of gamma
    np.testing.assert_allclose(
        data.GammaPlus[nb : nb * (spec.z + 1)], data.Gamma[: nb * spec.z]
    )


def test_fn_columns_match_lift():
    spec = DictionarySpec(m=1, q=1, z=1, lift=PolynomialLift(2, 3, "all"))
    series = random_series(1, 1, 15, seed=4)
    data = assemble(series, spec)
    for j in range(data.d):
        np.testing.assert_allclose(
            data.Fn[:, j], eval_lift(spec, data.Gamma[:, j]), atol=1e-13
        )


def test_assemble_input_alignment():
    spec = DictionarySpec(m=1, q=1, z=1)
    series = random_series(1, 1, 12, seed=5)
    data = assemble(series, spec)
    # column j is the triple (gamma_{z+j}, gamma_{z+j+1}, u_{z+j})
    np.testing.assert_allclose(data.Uin[0], series.U[0, spec.z : spec.z + data.d])


def test_augmented_assembly_stacks_lift():
    spec = DictionarySpec(m=1, q=1, z=1, lift=PolynomialLift(2, 4, "all"))
    series = random_series(1, 1, 40, seed=6)
    plain = assemble(series, spec)
    aug = assemble(series, spec, augmented=True)
    assert aug.Gamma.shape[0] == spec.state_dim + spec.lift_dim
    np.testing.assert_allclose(aug.Gamma[: spec.state_dim], plain.Gamma)
    np.testing.assert_allclose(aug.Gamma[spec.state_dim :], plain.Fn)
    assert aug.Fn.shape[0] == 0


def test_series_validation():
    with pytest.raises(ValueError):
        ObservableSeries(np.ones((1, 5)), np.ones((1, 4)), 0.1)  # U length mismatch
    with pytest.raises(ValueError):
        ObservableSeries(np.full((1, 5), np.nan), None, 0.1)
    with pytest.raises(ValueError):
        ObservableSeries(np.ones((1, 5)), None, -1.0)
