import numpy as np
import pytest

from wallkf.ensemble import (
    Ensemble,
    PointPrior,
    PredictionCovariance,
    PriorSpec,
    UniformPrior,
    analyze,
    enkf_covariance,
    enkf_predict,
    enmkf_covariance,
    enmkf_predict,
    init_ensemble,
    sample_covariance,
    step,
)
from wallkf.kalman import ControlFilterState, ar1_model
from wallkf.marginal_kf import ConditionalStateFilter, mkf_predict, mkf_update
from wallkf.statespace import ModelOperators, ModelProvider
from wallkf.wall import WallConfig, wall_provider


def make_ensemble(members, p=1, seed=0):
    members = np.asarray(members, dtype=float)
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(len(members))]
    return Ensemble(members, p, streams)


def scalar_provider(v=0.25, w=0.0, b_scale=1.0):
    """Scalar state whose decay rate depends smoothly on theta."""

    def build(theta):
        a = 1.0 / (1.0 + np.exp(-theta[0]))
        return ModelOperators(A=np.array([[a]]), B_columns=(np.array([b_scale]),),
                              H=np.array([[1.0]]), W=np.array([[w]]), V=np.array([[v]]))

    return ModelProvider(build, n=1, ell=1, m=1, dt=1.0)


# ---------------------------------------------------------------------------
# initialization

def test_init_respects_uniform_bounds_and_mean():
    prior = PriorSpec(parameters=(UniformPrior(0.17, 0.36, store="log"),),
                      state_mean=np.zeros(3), state_var=0.01)
    M = 100
    e = init_ensemble(prior, M, seed=99)
    R = np.exp(e.theta[:, 0])
    assert np.all((R > 0.17) & (R < 0.36))
    sigma = (0.36 - 0.17) / np.sqrt(12.0)
    assert abs(R.mean() - 0.265) < 3.0 * sigma / np.sqrt(M)


def test_init_is_deterministic_per_seed():
    prior = PriorSpec(parameters=(UniformPrior(0.1, 0.9),),
                      state_mean=np.array([1.0, 2.0]), state_var=0.5)
    a = init_ensemble(prior, 16, seed=5)
    b = init_ensemble(prior, 16, seed=5)
    assert a.members.tobytes() == b.members.tobytes()


def test_init_rejects_single_member():
    prior = PriorSpec(parameters=(PointPrior(1.0),), state_mean=np.zeros(1), state_var=1.0)
    with pytest.raises(ValueError):
        init_ensemble(prior, 1, seed=0)


# ---------------------------------------------------------------------------
# marginalized prediction

def test_enmkf_predict_is_deterministic_for_identical_members():
    provider = scalar_provider()
    e = make_ensemble([[0.3, 2.0], [0.3, 2.0], [0.3, 2.0]])
    u = ControlFilterState([1.5], [[0.4]])
    out = enmkf_predict(e, provider, u)
    assert np.unique(out.states).size == 1


def test_enmkf_predict_identity_dynamics_no_control():
    def build(theta):
        return ModelOperators(A=np.eye(2), B_columns=(np.zeros(2),), H=np.eye(2),
                              W=np.zeros((2, 2)), V=np.eye(2))

    provider = ModelProvider(build, n=2, ell=1, m=2, dt=1.0)
    e = make_ensemble([[0.0, 1.0, 2.0], [1.0, 3.0, 4.0]])
    out = enmkf_predict(e, provider, ControlFilterState([9.0], [[1.0]]))
    np.testing.assert_array_equal(out.members, e.members)


def test_enmkf_predict_matches_marginal_filter_mean():
    provider = scalar_provider()
    theta = 0.4
    e = make_ensemble([[theta, 2.0], [theta, 2.0]])
    u = ControlFilterState([3.0], [[0.2]])
    out = enmkf_predict(e, provider, u)
    ops = provider.operators(np.array([theta]))
    exact = mkf_predict(ConditionalStateFilter([2.0], [[0.0]]), ops, u.mean, u.cov)
    np.testing.assert_allclose(out.states[:, 0], exact.mean[0], atol=1e-14)


# ---------------------------------------------------------------------------
# marginalized covariance

def test_enmkf_covariance_degenerate_ensemble_is_pure_inflation():
    provider = scalar_provider(w=0.0)
    e = make_ensemble([[0.2, 1.0], [0.2, 1.0], [0.2, 1.0]])
    u = ControlFilterState([0.0], [[0.5]])
    W = np.array([[0.1]])
    P = enmkf_covariance(e, provider, u, W)
    b = provider.operators(np.array([0.2])).B[0, 0]
    np.testing.assert_allclose(P.matrix, [[0.0, 0.0], [0.0, b * 0.5 * b + 0.1]], atol=1e-14)


def test_enmkf_covariance_reduces_to_sample_covariance():
    provider = scalar_provider()
    rng = np.random.default_rng(2)
    e = make_ensemble(rng.standard_normal((20, 2)))
    P = enmkf_covariance(e, provider, ControlFilterState([0.0], [[0.0]]), np.zeros((1, 1)))
    np.testing.assert_allclose(P.matrix, np.cov(e.members, rowvar=False), atol=1e-12)


def test_enmkf_covariance_decomposition_identity():
    provider = scalar_provider()
    rng = np.random.default_rng(3)
    e = make_ensemble(rng.standard_normal((40, 2)) + 1.0)
    u_cov = np.array([[0.37]])
    W = np.array([[0.05]])
    P = enmkf_covariance(e, provider, ControlFilterState([0.0], u_cov), W)
    sample = np.cov(e.members, rowvar=False)
    inflation = np.zeros((1, 1))
    for i in range(e.size):
        B = provider.operators(e.members[i, :1]).B
        inflation += B @ u_cov @ B.T
    inflation = inflation / e.size + W
    diff = P.matrix - sample
    np.testing.assert_allclose(diff, [[0.0, 0.0], [0.0, inflation[0, 0]]], atol=1e-12)


def test_enmkf_covariance_theta_block_is_bitwise_sample_covariance():
    cfg = WallConfig(n_cells=6)
    provider = wall_provider(cfg)
    rng = np.random.default_rng(4)
    theta = np.column_stack([np.log(rng.uniform(0.2, 0.4, 12)), np.log(rng.uniform(2e5, 4e5, 12))])
    states = rng.uniform(10, 20, (12, cfg.n_nodes))
    e = make_ensemble(np.hstack([theta, states]), p=2)
    P = enmkf_covariance(e, provider, ControlFilterState([20.0, 10.0], 0.3 * np.eye(2)), None)
    sample = sample_covariance(e.members)
    assert P.matrix[:2, :2].tobytes() == sample[:2, :2].tobytes()


# ---------------------------------------------------------------------------
# sampled-control prediction

def test_enkf_predict_with_zero_control_covariance_equals_marginalized():
    provider = scalar_provider()
    members = [[0.1, 1.0], [0.5, 2.0], [-0.2, 0.5]]
    u = ControlFilterState([2.0], [[0.0]])
    out_enkf = enkf_predict(make_ensemble(members, seed=8), provider, u)
    out_enmkf = enmkf_predict(make_ensemble(members, seed=8), provider, u)
    np.testing.assert_array_equal(out_enkf.members, out_enmkf.members)


def test_enkf_predict_is_deterministic_per_seed():
    provider = scalar_provider()
    members = [[0.1, 1.0], [0.5, 2.0]]
    u = ControlFilterState([2.0], [[0.3]])
    a = enkf_predict(make_ensemble(members, seed=13), provider, u)
    b = enkf_predict(make_ensemble(members, seed=13), provider, u)
    assert a.members.tobytes() == b.members.tobytes()


def test_enkf_predict_mean_consistent_with_marginalized_mean():
    provider = scalar_provider()
    rng = np.random.default_rng(21)
    M = 4000
    members = np.column_stack([rng.uniform(-0.5, 0.5, M), rng.uniform(0.0, 2.0, M)])
    u_cov = 0.09
    u = ControlFilterState([1.0], [[u_cov]])
    sampled = enkf_predict(make_ensemble(members, seed=31), provider, u)
    marginal = enmkf_predict(make_ensemble(members, seed=31), provider, u)
    deviation = sampled.states.mean() - marginal.states.mean()
    b = np.array([provider.operators(members[i, :1]).B[0, 0] for i in range(M)])
    dev_std = np.sqrt(np.sum(b**2) * u_cov) / M
    assert abs(deviation) < 3.0 * dev_std


def test_enkf_predict_rejects_indefinite_control_covariance():
    provider = scalar_provider()
    e = make_ensemble([[0.0, 1.0], [0.1, 2.0]])
    from wallkf.errors import NumericalError
    with pytest.raises(NumericalError):
        enkf_predict(e, provider, ControlFilterState([0.0], [[-0.5]]))


# ---------------------------------------------------------------------------
# sampled-control covariance

def test_enkf_covariance_without_w_is_sample_covariance():
    rng = np.random.default_rng(5)
    e = make_ensemble(rng.standard_normal((15, 3)), p=1)
    P = enkf_covariance(e, None)
    np.testing.assert_allclose(P.matrix, np.cov(e.members, rowvar=False), atol=1e-12)


def test_enkf_covariance_two_members_is_rank_one_plus_w():
    e = make_ensemble([[0.0, 1.0], [1.0, 3.0]], p=1)
    W = np.array([[0.25]])
    P = enkf_covariance(e, W)
    dev = np.array([-0.5, -1.0])  # member 0 minus mean
    expected = 2.0 * np.outer(dev, dev)  # 1/(M-1) with M=2 keeps the single outer product
    expected[1, 1] += 0.25
    np.testing.assert_allclose(P.matrix, expected, atol=1e-14)


def test_enkf_covariance_matches_two_pass_oracle():
    rng = np.random.default_rng(6)
    members = rng.standard_normal((30, 4)) * rng.uniform(0.5, 2.0, 4)
    e = make_ensemble(members, p=2)
    P = enkf_covariance(e, np.diag([0.1, 0.2]))
    mean = members.mean(axis=0)
    oracle = np.zeros((4, 4))
    for row in members:
        oracle += np.outer(row - mean, row - mean)
    oracle /= 29.0
    oracle[2:, 2:] += np.diag([0.1, 0.2])
    np.testing.assert_allclose(P.matrix, oracle, atol=1e-12)


# ---------------------------------------------------------------------------
# analysis

def test_analyze_with_uninformative_observation_keeps_ensemble():
    rng = np.random.default_rng(7)
    members = rng.standard_normal((10, 2)) + 5.0
    e = make_ensemble(members)
    ops = ModelOperators(A=np.eye(1), B_columns=(np.zeros(1),), H=np.array([[1.0]]),
                         W=np.zeros((1, 1)), V=np.array([[1e12]]))
    P = PredictionCovariance(sample_covariance(members), 1)
    out = analyze(e, P, np.array([4.0]), ops)
    np.testing.assert_allclose(out.members, members, rtol=1e-8, atol=1e-4)


def test_analyze_leaves_theta_untouched_without_cross_covariance():
    rng = np.random.default_rng(8)
    members = rng.standard_normal((12, 3))
    e = make_ensemble(members, p=1)
    matrix = np.diag([0.5, 1.0, 2.0])  # no theta-state coupling
    ops = ModelOperators(A=np.eye(2), B_columns=(np.zeros(2),), H=np.eye(2),
                         W=np.zeros((2, 2)), V=0.1 * np.eye(2))
    out = analyze(e, PredictionCovariance(matrix, 1), np.array([0.3, -0.1]), ops)
    np.testing.assert_array_equal(out.theta, e.theta)
    assert not np.array_equal(out.states, e.states)


def test_analyze_posterior_mean_matches_exact_filter():
    # plain mode, point-mass theta: one prediction/analysis cycle of the
    # ensemble filter against the exact conditional filter
    provider = scalar_provider(v=0.25, w=0.04)
    theta = 0.2
    M = 2000
    rng = np.random.default_rng(70)
    prior_mean, prior_var = 1.0, 0.36
    members = np.column_stack([np.full(M, theta), prior_mean + np.sqrt(prior_var) * rng.standard_normal(M)])
    e = make_ensemble(members, seed=71)
    u = ControlFilterState([0.5], [[0.09]])
    y = np.array([2.0])

    e_pred = enmkf_predict(e, provider, u)
    P = enmkf_covariance(e_pred, provider, u, np.array([[0.04]]))
    e_post = analyze(e_pred, P, y, provider.operators(np.array([theta])))

    ops = provider.operators(np.array([theta]))
    start = ConditionalStateFilter([members[:, 1].mean()], [[np.var(members[:, 1], ddof=1)]])
    exact = mkf_update(mkf_predict(start, ops, u.mean, u.cov), y, ops)

    ens_std = e_post.states.std(ddof=1)
    assert abs(e_post.states.mean() - exact.mean[0]) < 3.0 * ens_std / np.sqrt(M)


def test_analyze_without_perturbations_keeps_identical_members_identical():
    provider = scalar_provider()
    members = np.tile([0.3, 1.7], (6, 1))
    e = make_ensemble(members)
    P = PredictionCovariance(np.diag([0.1, 0.4]), 1)
    out = analyze(e, P, np.array([2.5]), provider.operators(np.array([0.3])), perturb=False)
    assert np.unique(out.members, axis=0).shape[0] == 1
    assert not np.array_equal(out.members, members)


# ---------------------------------------------------------------------------
# full step

def _wall_setup(M=24, seed=1234, n_cells=8):
    cfg = WallConfig(n_cells=n_cells)
    provider = wall_provider(cfg, V=np.diag([20.0, 5.0]))
    prior = PriorSpec(
        parameters=(UniformPrior(0.28, 0.36, store="log"), UniformPrior(301000.0, 376000.0, store="log")),
        state_mean=np.linspace(22.0, 9.0, cfg.n_nodes),
        state_var=0.01,
    )
    e = init_ensemble(prior, M, seed)
    model = ar1_model(2, 0.02 * np.eye(2), 0.01 * np.eye(2),
                      np.array([22.0, 9.0]), 0.1 * np.eye(2))
    return cfg, provider, e, model


def test_step_with_uninformative_observations_changes_nothing_much():
    cfg, provider, e, _ = _wall_setup()
    model = ar1_model(2, np.zeros((2, 2)), 1e12 * np.eye(2),
                      np.array([22.0, 9.0]), 0.1 * np.eye(2))
    provider_huge_v = wall_provider(cfg, V=1e12 * np.eye(2))
    theta_before = e.theta.copy()
    cs = model.initial_state()
    e_post, cs_post, diag = step("enmkf", e, provider_huge_v, cs, model,
                                 np.array([40.0, -5.0]), np.array([100.0, -50.0]),
                                 None, "scaled_by_R")
    np.testing.assert_allclose(e_post.theta, theta_before, atol=1e-4)
    np.testing.assert_allclose(cs_post.mean, cs.mean, rtol=1e-6)
    np.testing.assert_allclose(cs_post.cov, cs.cov, rtol=1e-6)


def test_step_enmkf_equals_enkf_when_control_is_certain():
    members_seed = 77
    cfg, provider, _, _ = _wall_setup()
    model = ar1_model(2, np.zeros((2, 2)), 0.01 * np.eye(2),
                      np.array([22.0, 9.0]), np.zeros((2, 2)))
    prior = PriorSpec(
        parameters=(UniformPrior(0.28, 0.36, store="log"), UniformPrior(301000.0, 376000.0, store="log")),
        state_mean=np.linspace(22.0, 9.0, cfg.n_nodes),
        state_var=0.01,
    )
    z, y = np.array([22.4, 9.2]), np.array([35.0, -20.0])
    out = {}
    for kind in ("enmkf", "enkf"):
        e = init_ensemble(prior, 16, members_seed)
        cs = model.initial_state()
        e_post, _, _ = step(kind, e, provider, cs, model, z, y, None, "scaled_by_R")
        out[kind] = e_post.members
    np.testing.assert_array_equal(out["enmkf"], out["enkf"])


def test_step_matches_literal_wall_pseudocode_oracle():
    """Five steps of the full wall filter against a straight-line oracle:
    boundary filter, per-member prediction, sample covariance plus
    per-channel inflation, gain, and resistance-scaled perturbed update."""
    M, seed, n_cells = 24, 4321, 8
    cfg, provider, e, model = _wall_setup(M, seed, n_cells)
    rng = np.random.default_rng(99)
    z_series = np.column_stack([22.0 + 0.2 * rng.standard_normal(5),
                                9.0 + 0.3 * rng.standard_normal(5)])
    y_series = np.column_stack([30.0 + 2.0 * rng.standard_normal(5),
                                -15.0 + 1.0 * rng.standard_normal(5)])

    # package path
    e_pkg = init_ensemble(PriorSpec(
        parameters=(UniformPrior(0.28, 0.36, store="log"), UniformPrior(301000.0, 376000.0, store="log")),
        state_mean=np.linspace(22.0, 9.0, cfg.n_nodes), state_var=0.01), M, seed)
    cs = model.initial_state()
    for k in range(5):
        e_pkg, cs, _ = step("enmkf", e_pkg, provider, cs, model, z_series[k], y_series[k], None, "scaled_by_R")

    # literal oracle with its own streams (same seed)
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(M)]
    X = np.empty((M, 2 + cfg.n_nodes))
    for i, g in enumerate(streams):
        X[i, 0] = np.log(g.uniform(0.28, 0.36))
        X[i, 1] = np.log(g.uniform(301000.0, 376000.0))
        X[i, 2:] = np.linspace(22.0, 9.0, cfg.n_nodes) + 0.1 * g.standard_normal(cfg.n_nodes)

    u_mean, u_cov = model.u0_mean.copy(), model.u0_cov.copy()
    Q, C = model.Q, model.C
    V = np.diag([20.0, 5.0])
    H = np.zeros((2, cfg.n_nodes))
    H[0, :3] = np.array([3.0, -4.0, 1.0]) / (2.0 * cfg.ds)
    H[1, -3:] = np.array([1.0, -4.0, 3.0]) / (2.0 * cfg.ds)
    Hcal = np.hstack([np.zeros((2, 2)), H])
    d2 = np.diag(-2.0 * np.ones(n_cells - 1)) + np.diag(np.ones(n_cells - 2), 1) + np.diag(np.ones(n_cells - 2), -1)

    def member_ops(theta):
        a = 1.0 / (np.exp(theta[0]) * np.exp(theta[1]))
        lam = a * cfg.dt * n_cells**2
        interior = np.linalg.inv(np.eye(n_cells - 1) - lam * d2)
        A = np.zeros((cfg.n_nodes, cfg.n_nodes))
        A[1:-1, 1:-1] = interior
        b_int = np.zeros(cfg.n_nodes)
        b_int[0] = 1.0
        b_int[1:-1] = lam * interior[:, 0]
        b_ext = np.zeros(cfg.n_nodes)
        b_ext[-1] = 1.0
        b_ext[1:-1] = lam * interior[:, -1]
        return A, b_int, b_ext

    for k in range(5):
        # boundary filter (diagonal throughout)
        u_pred_cov = u_cov + Q
        Ku = u_pred_cov @ np.linalg.inv(u_pred_cov + C)
        u_mean = u_mean + Ku @ (z_series[k] - u_mean)
        u_cov = (np.eye(2) - Ku) @ u_pred_cov

        inflation = np.zeros((cfg.n_nodes, cfg.n_nodes))
        for i in range(M):
            A, b_int, b_ext = member_ops(X[i, :2])
            X[i, 2:] = A @ X[i, 2:] + b_int * u_mean[0] + b_ext * u_mean[1]
            inflation += u_cov[0, 0] * np.outer(b_int, b_int) + u_cov[1, 1] * np.outer(b_ext, b_ext)
        P = np.cov(X, rowvar=False)
        P[2:, 2:] += inflation / M
        K = P @ Hcal.T @ np.linalg.inv(Hcal @ P @ Hcal.T + V)
        Lv = np.linalg.cholesky(V)
        for i in range(M):
            v_i = Lv @ streams[i].standard_normal(2)
            X[i] = X[i] + K @ (np.exp(X[i, 0]) * (y_series[k] + v_i) - Hcal @ X[i])

    assert np.abs(e_pkg.members - X).max() < 1e-10
