import numpy as np
import pytest

from koopid import (
    DictionarySpec,
    Dmd,
    Edmdc,
    LiftedData,
    NonlinearControlledPredictor,
    NonlinearPredictor,
    ObservableSeries,
    PolynomialLift,
    assemble,
    delay_init,
    extrapolated_history,
    eval_lift,
    pod_basis,
    reduce,
    rollout,
)
from koopid.numerics import PodBasis


def scalar_data(factor, T=20):
    y = factor ** np.arange(T, dtype=float)
    Gamma = y[None, :-1]
    GammaPlus = y[None, 1:]
    return LiftedData(Gamma, GammaPlus, dt=1.0)


# ---------------------------------------------------------------------------
# linear families
# ---------------------------------------------------------------------------

def test_dmd_scalar_decay():
    model = Dmd().fit(scalar_data(0.5))
    np.testing.assert_allclose(model.A_, [[0.5]], atol=1e-12)


def test_dmd_identity_map():
    rng = np.random.default_rng(0)
    Gamma = rng.standard_normal((3, 20))
    model = Dmd().fit(LiftedData(Gamma, Gamma.copy()))
    np.testing.assert_allclose(model.A_, np.eye(3), atol=1e-10)


def test_dmd_planar_rotation():
    theta = 0.3
    R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    x = np.array([1.0, 0.3])
    cols = [x]
    for _ in range(50):
        cols.append(R @ cols[-1])
    traj = np.array(cols).T
    model = Dmd().fit(LiftedData(traj[:, :-1], traj[:, 1:]))
    np.testing.assert_allclose(model.A_, R, atol=1e-10)


def test_edmdc_scalar_recovery():
    rng = np.random.default_rng(1)
    u = rng.uniform(-1, 1, 60)
    g = [0.3]
    for ui in u:
        g.append(0.9 * g[-1] + 0.1 * ui)
    g = np.array(g)
    data = LiftedData(g[None, :-1], g[None, 1:], Uin=u[None, :])
    model = Edmdc().fit(data)
    assert model.A_[0, 0] == pytest.approx(0.9, abs=1e-12)
    assert model.B_[0, 0] == pytest.approx(0.1, abs=1e-12)


def test_edmdc_zero_input_matches_dmd():
    rng = np.random.default_rng(2)
    Gamma = rng.standard_normal((3, 40))
    GammaPlus = rng.standard_normal((3, 40))
    with pytest.warns(RuntimeWarning):
        controlled = Edmdc().fit(
            LiftedData(Gamma, GammaPlus, Uin=np.zeros((1, 40)))
        )
    assert controlled.degenerate_input_
    plain = Dmd().fit(LiftedData(Gamma, GammaPlus))
    np.testing.assert_allclose(controlled.A_, plain.A_, atol=1e-8)


def test_edmdc_multi_input_shapes():
    spec = DictionarySpec(m=20, q=2, z=30)
    rng = np.random.default_rng(3)
    series = ObservableSeries(
        rng.standard_normal((20, 700)), rng.standard_normal((2, 700)), 0.1
    )
    model = Edmdc(rank=50).fit(assemble(series, spec))
    assert model.A_.shape == (680, 680)
    assert model.B_.shape == (680, 2)


# ---------------------------------------------------------------------------
# nonlinear families
# ---------------------------------------------------------------------------

def test_nonlinear_logistic_map():
    x = [0.2]
    for _ in range(50):
        x.append(3.8 * x[-1] - 3.8 * x[-1] ** 2)
    x = np.array(x)
    spec = DictionarySpec(m=1, q=0, z=0, lift=PolynomialLift(2, 2, "latest"))
    data = assemble(ObservableSeries(x[None, :], None, 1.0), spec)
    model = NonlinearPredictor().fit(data)
    assert model.A_[0, 0] == pytest.approx(3.8, abs=1e-10)
    assert model.C_[0, 0] == pytest.approx(-3.8, abs=1e-10)
    # two-regressor closed-form least squares oracle
    Z = np.vstack([data.Gamma, data.Fn])
    oracle = data.GammaPlus @ Z.T @ np.linalg.inv(Z @ Z.T)
    np.testing.assert_allclose(np.hstack([model.A_, model.C_]), oracle, atol=1e-10)


def quadratic_model(rng, M, L, q=0, scale=0.3):
    """Random stable synthetic model with a quadratic lift on the state."""
    from koopid.dictionary import eval_monomials, monomial_index_tuples

    terms = list(monomial_index_tuples(M, 2, 2))[:L]
    A = scale * rng.standard_normal((M, M))
    A /= max(1.0, np.max(np.abs(np.linalg.eigvals(A))) / 0.8)
    C = 0.05 * rng.standard_normal((M, L))
    B = rng.standard_normal((M, q)) if q else None
    lift = lambda g: eval_monomials(terms, g if g.ndim == 2 else g[:, None]).ravel()
    return A, B, C, lift, terms


def synthetic_snapshots(rng, A, B, C, lift, d, q=0):
    from koopid.dictionary import eval_monomials

    M = A.shape[0]
    Gamma = rng.uniform(-1, 1, (M, d))
    U = rng.uniform(-1, 1, (q, d)) if q else None
    Fn = np.column_stack([lift(Gamma[:, j]) for j in range(d)])
    GammaPlus = A @ Gamma + C @ Fn
    if q:
        GammaPlus += B @ U
    return LiftedData(Gamma, GammaPlus, Uin=U, Fn=Fn)


def test_nonlinear_self_consistency():
    rng = np.random.default_rng(4)
    A, _, C, lift, _ = quadratic_model(rng, M=3, L=6)
    data = synthetic_snapshots(rng, A, None, C, lift, d=200)
    model = NonlinearPredictor().fit(data)
    assert np.linalg.norm(model.A_ - A) / np.linalg.norm(A) < 1e-8
    assert np.linalg.norm(model.C_ - C) / np.linalg.norm(C) < 1e-8


def test_nonlinear_empty_lift_reduces_to_dmd():
    rng = np.random.default_rng(5)
    Gamma = rng.standard_normal((3, 30))
    GammaPlus = rng.standard_normal((3, 30))
    nl = NonlinearPredictor().fit(LiftedData(Gamma, GammaPlus))
    lin = Dmd().fit(LiftedData(Gamma, GammaPlus))
    np.testing.assert_allclose(nl.A_, lin.A_, atol=1e-12)
    assert nl.C_.shape == (3, 0)


def test_nonlinear_controlled_self_consistency():
    rng = np.random.default_rng(6)
    A, B, C, lift, _ = quadratic_model(rng, M=3, L=4, q=1)
    data = synthetic_snapshots(rng, A, B, C, lift, d=300, q=1)
    model = NonlinearControlledPredictor().fit(data)
    for got, want in ((model.A_, A), (model.B_, B), (model.C_, C)):
        assert np.linalg.norm(got - want) / np.linalg.norm(want) < 1e-8


def test_nonlinear_controlled_zero_input_matches_autonomous():
    rng = np.random.default_rng(7)
    A, _, C, lift, _ = quadratic_model(rng, M=3, L=4)
    data = synthetic_snapshots(rng, A, None, C, lift, d=300)
    controlled = LiftedData(
        data.Gamma, data.GammaPlus, Uin=np.zeros((1, data.d)), Fn=data.Fn
    )
    with pytest.warns(RuntimeWarning):
        mc = NonlinearControlledPredictor().fit(controlled)
    assert mc.degenerate_input_
    mn = NonlinearPredictor().fit(data)
    np.testing.assert_allclose(mc.A_, mn.A_, atol=1e-8)
    np.testing.assert_allclose(mc.C_, mn.C_, atol=1e-8)


def test_nonlinear_controlled_shapes():
    spec = DictionarySpec(m=1, q=1, z=1, lift=PolynomialLift(2, 4, "all"))
    rng = np.random.default_rng(8)
    series = ObservableSeries(
        rng.standard_normal((1, 200)), rng.standard_normal((1, 200)), 0.1
    )
    model = NonlinearControlledPredictor().fit(assemble(series, spec))
    assert model.A_.shape == (3, 3)
    assert model.B_.shape == (3, 1)
    assert model.C_.shape == (3, 12)


def test_missing_inputs_rejected():
    rng = np.random.default_rng(9)
    data = LiftedData(rng.standard_normal((2, 10)), rng.standard_normal((2, 10)))
    with pytest.raises(ValueError):
        Edmdc().fit(data)
    with pytest.raises(ValueError):
        NonlinearControlledPredictor().fit(data)


# ---------------------------------------------------------------------------
# rollout
# ---------------------------------------------------------------------------

def test_rollout_zero_map():
    model = Dmd().fit(scalar_data(0.5))
    model.A_ = np.zeros((1, 1))
    res = model.rollout(np.array([3.0]), 4)
    np.testing.assert_allclose(res.states, [[3.0, 0.0, 0.0, 0.0, 0.0]])


def test_rollout_single_step_contract():
    x = np.linspace(0.1, 0.9, 60)
    traj = 3.8 * x - 3.8 * x**2
    spec = DictionarySpec(m=1, q=0, z=0, lift=PolynomialLift(2, 2, "latest"))
    data = LiftedData(
        x[None, :], traj[None, :], Fn=(x**2)[None, :], spec=spec, dt=1.0
    )
    model = NonlinearPredictor().fit(data)
    g0 = np.array([0.37])
    expected = model.A_ @ g0 + model.C_ @ eval_lift(spec, g0)
    np.testing.assert_allclose(model.rollout(g0, 1).states[:, 1], expected)


def test_rollout_matches_logistic_iteration():
    x = [0.2]
    for _ in range(60):
        x.append(3.8 * x[-1] - 3.8 * x[-1] ** 2)
    x = np.array(x)
    spec = DictionarySpec(m=1, q=0, z=0, lift=PolynomialLift(2, 2, "latest"))
    data = assemble(ObservableSeries(x[None, :], None, 1.0), spec)
    model = NonlinearPredictor().fit(data)
    res = model.rollout(np.array([0.2]), 100)
    truth = [0.2]
    for _ in range(100):
        truth.append(3.8 * truth[-1] - 3.8 * truth[-1] ** 2)
    # the map is chaotic (Lyapunov exponent ~0.43/step), so machine-precision
    # coefficient error swamps 1e-8 beyond ~35 steps; check the resolvable
    # window tightly and boundedness of the rest
    np.testing.assert_allclose(res.states[0, :31], truth[:31], atol=1e-8)
    assert np.all((res.states[0] > -1e-6) & (res.states[0] < 1 + 1e-6))


def test_rollout_divergence_reported():
    model = Dmd().fit(scalar_data(0.5))
    model.A_ = np.array([[1e4]])
    res = model.rollout(np.array([1.0]), 10)
    assert res.diverged
    assert res.diverged_at is not None
    assert np.all(np.isfinite(res.valid_states))
    assert np.all(np.isnan(res.states[:, res.diverged_at :]))


def test_controlled_rollout_zero_input_matches_autonomous_restriction():
    rng = np.random.default_rng(10)
    A, B, C, lift, _ = quadratic_model(rng, M=3, L=4, q=1)
    data = synthetic_snapshots(rng, A, B, C, lift, d=300, q=1)
    model = NonlinearControlledPredictor().fit(data)
    model.lift_fn_ = lift
    g0 = np.array([0.1, -0.2, 0.3])
    res = model.rollout(g0, 50, np.zeros((1, 50)))
    auto = NonlinearPredictor().fit(
        LiftedData(data.Gamma, data.GammaPlus - model.B_ @ data.Uin, Fn=data.Fn)
    )
    auto.lift_fn_ = lift
    np.testing.assert_allclose(res.states, auto.rollout(g0, 50).states, atol=1e-8)


# ---------------------------------------------------------------------------
# reduction
# ---------------------------------------------------------------------------

def hopf_like_model(rng):
    spec = DictionarySpec(m=1, q=0, z=2, lift=PolynomialLift(2, 3, "all"))
    T = 400
    t = np.arange(T) * 0.1
    y = np.tanh(np.sin(t) + 0.1 * rng.standard_normal(T))
    data = assemble(ObservableSeries(y[None, :], None, 0.1), spec)
    return NonlinearPredictor(rank=5).fit(data), data


def test_reduce_identity_projection():
    rng = np.random.default_rng(11)
    model, data = hopf_like_model(rng)
    M = model.state_dim_
    basis = PodBasis(np.eye(M), np.ones(M), 1.0)
    red = reduce(model, basis)
    g0 = data.Gamma[:, 10]
    np.testing.assert_allclose(
        red.rollout(g0, 50).states, model.rollout(g0, 50).states, atol=1e-10
    )


def test_reduce_square_orthogonal_similarity():
    rng = np.random.default_rng(12)
    model, data = hopf_like_model(rng)
    M = model.state_dim_
    Q, _ = np.linalg.qr(rng.standard_normal((M, M)))
    basis = PodBasis(Q, np.ones(M), 1.0)
    red = reduce(model, basis)
    g0 = data.Gamma[:, 10]
    np.testing.assert_allclose(
        red.rollout(g0, 100).states, model.rollout(g0, 100).states, atol=1e-8
    )


def test_reduce_pod_shapes():
    rng = np.random.default_rng(13)
    model, data = hopf_like_model(rng)
    basis = pod_basis(data.Gamma, 2)
    red = reduce(model, basis)
    assert red.Ared.shape == (2, 2)
    assert red.Cred.shape == (2, model.C_.shape[1])
    assert red.rollout(data.Gamma[:, 0], 5).states.shape == (model.state_dim_, 6)


def test_reduce_dim_mismatch():
    rng = np.random.default_rng(14)
    model, _ = hopf_like_model(rng)
    with pytest.raises(ValueError):
        reduce(model, PodBasis(np.eye(model.state_dim_ + 1), np.ones(4), 1.0))


# ---------------------------------------------------------------------------
# delay initialization
# ---------------------------------------------------------------------------

def test_delay_init_examples():
    spec = DictionarySpec(m=1, q=1, z=1)
    hist = extrapolated_history(np.array([1.0]), np.array([0.0]), 1, 0.1)
    np.testing.assert_allclose(delay_init(spec, hist), [1.0, 1.0, 0.0])
    hist = extrapolated_history(np.array([0.5]), np.array([2.0]), 1, 0.1)
    np.testing.assert_allclose(delay_init(spec, hist), [0.5, 0.3, 0.0])


def test_delay_init_no_delay():
    spec = DictionarySpec(m=2, q=0, z=0)
    np.testing.assert_allclose(delay_init(spec, [[1.5], [2.5]]), [1.5, 2.5])


def test_delay_init_shape_errors():
    spec = DictionarySpec(m=1, q=1, z=2)
    with pytest.raises(ValueError):
        delay_init(spec, np.ones((1, 2)))  # needs z+1 frames
    with pytest.raises(ValueError):
        delay_init(spec, np.ones((2, 3)))  # wrong observable dim


# ---------------------------------------------------------------------------
# properties
# ---------------------------------------------------------------------------

def test_nesting_residual():
    rng = np.random.default_rng(15)
    spec = DictionarySpec(m=1, q=0, z=1, lift=PolynomialLift(2, 3, "all"))
    y = np.sin(np.arange(120) * 0.3) + 0.05 * rng.standard_normal(120)
    data = assemble(ObservableSeries(y[None, :], None, 0.1), spec)
    nl = NonlinearPredictor().fit(data)
    lin = Dmd().fit(data)
    assert nl.residual_ <= lin.residual_ + 1e-12


def test_fit_invariant_to_column_permutation():
    rng = np.random.default_rng(16)
    A, B, C, lift, _ = quadratic_model(rng, M=3, L=4, q=1)
    data = synthetic_snapshots(rng, A, B, C, lift, d=100, q=1)
    perm = rng.permutation(data.d)
    shuffled = LiftedData(
        data.Gamma[:, perm], data.GammaPlus[:, perm],
        Uin=data.Uin[:, perm], Fn=data.Fn[:, perm],
    )
    m1 = NonlinearControlledPredictor().fit(data)
    m2 = NonlinearControlledPredictor().fit(shuffled)
    np.testing.assert_allclose(m1.A_, m2.A_, atol=1e-9)
    np.testing.assert_allclose(m1.B_, m2.B_, atol=1e-9)
    np.testing.assert_allclose(m1.C_, m2.C_, atol=1e-9)


def test_sklearn_params_roundtrip():
    model = NonlinearPredictor(rank=7)
    assert model.get_params() == {"rank": 7}
    model.set_params(rank=3)
    assert model.rank == 3
