"""Stationary laws, Poisson solves, truncated certificates, decay bounds."""

import numpy as np
import pytest

import oracles
from conftest import random_product_policy, small_instances
from marlcert import (
    NumericalError,
    ReducibilityError,
    ValidationError,
    aligned_sup_distance,
    bias_and_cert_bounds,
    certificate_message_passing,
    decay_table,
    discounted_contraction_check,
    discounted_rate,
    induced_kernel,
    influence_report,
    locality_certificate,
    neumann_oscillation_bound,
    oscillation,
    policy_reward,
    recurrent_class,
    required_radius,
    scenario_hub_spoke,
    scenario_leader_follower,
    scenario_sleepy,
    solve_poisson,
    stationary_distribution,
    support_graph,
    truncated_certificate,
    truncated_poisson,
)

TWO_CLASSES = np.eye(2)
PERIODIC = np.array([[0.0, 1.0], [1.0, 0.0]])


def closed_loop(sc):
    kernel = induced_kernel(sc.mdp, sc.policy)
    r_pi = policy_reward(sc.mdp, sc.policy)
    return kernel, r_pi


def test_recurrent_class_full_chain():
    kernel = np.array([[0.5, 0.5], [0.2, 0.8]])
    np.testing.assert_array_equal(recurrent_class(kernel), [0, 1])


def test_recurrent_class_allows_transient_states():
    # Hub-and-spoke: spoke-mismatched joint states are transient, but the
    # chain still has a unique aperiodic closed class.
    sc = scenario_hub_spoke(3, 1.0, 2.0)
    kernel, _ = closed_loop(sc)
    states = recurrent_class(kernel)
    assert 0 < len(states) < kernel.shape[0]
    d = stationary_distribution(kernel)
    transient = np.setdiff1d(np.arange(kernel.shape[0]), states)
    np.testing.assert_allclose(d[transient], 0.0, atol=1e-12)


def test_recurrent_class_rejects_two_closed_classes():
    with pytest.raises(ReducibilityError, match="unique-recurrent-class"):
        recurrent_class(TWO_CLASSES)


def test_recurrent_class_rejects_periodic_chain():
    with pytest.raises(ReducibilityError, match="period 2"):
        recurrent_class(PERIODIC)


def test_kernel_validation():
    with pytest.raises(ValidationError):
        recurrent_class(np.array([[0.5, 0.4], [0.5, 0.5]]))
    with pytest.raises(ValidationError):
        recurrent_class(np.zeros((2, 3)))


def test_stationary_matches_eig_oracle(rng):
    for mdp, soft in small_instances(5, start_seed=800):
        kernel = induced_kernel(mdp, soft)
        d = stationary_distribution(kernel)
        np.testing.assert_allclose(d, oracles.stationary_oracle(kernel), atol=1e-9)
        assert float(np.abs(d @ kernel - d).sum()) <= 1e-10


def test_solve_poisson_identity_and_anchor(rng):
    for mdp, soft in small_instances(5, start_seed=900):
        kernel = induced_kernel(mdp, soft)
        r_pi = policy_reward(mdp, soft)
        sol = solve_poisson(kernel, r_pi)
        assert sol.residual <= 1e-9
        assert sol.h[0] == 0.0
        assert sol.anchor == 0
        np.testing.assert_allclose(sol.h - kernel @ sol.h, r_pi - sol.rbar,
                                   atol=1e-9)
        series_h, series_rbar, _ = oracles.poisson_series_oracle(kernel, r_pi)
        assert sol.rbar == pytest.approx(series_rbar, abs=1e-9)
        np.testing.assert_allclose(sol.h, series_h, atol=1e-7)


def test_solve_poisson_anchor_conventions_differ_by_constant():
    for mdp, soft in small_instances(3, start_seed=950):
        kernel = induced_kernel(mdp, soft)
        r_pi = policy_reward(mdp, soft)
        a = solve_poisson(kernel, r_pi, anchor=0)
        b = solve_poisson(kernel, r_pi, anchor=kernel.shape[0] - 1)
        diff = a.h - b.h
        assert diff.max() - diff.min() <= 1e-9
        assert a.rbar == pytest.approx(b.rbar, abs=1e-12)


def test_solve_poisson_validation():
    kernel = np.array([[0.5, 0.5], [0.2, 0.8]])
    with pytest.raises(ValidationError):
        solve_poisson(kernel, np.zeros(3))
    with pytest.raises(ValidationError):
        solve_poisson(kernel, np.zeros(2), anchor=5)
    with pytest.raises(ReducibilityError):
        solve_poisson(TWO_CLASSES, np.zeros(2))


def test_sleepy_bias_closed_form():
    for alpha in (0.0, 0.3, 0.7, 1.0):
        sc = scenario_sleepy(alpha)
        kernel, r_pi = closed_loop(sc)
        sol = solve_poisson(kernel, r_pi)
        assert sol.rbar == pytest.approx(0.5, abs=1e-12)
        np.testing.assert_allclose(sol.d, 0.25, atol=1e-12)
        np.testing.assert_allclose(sol.h, [0.0, 1.0, alpha, 1.0 + alpha],
                                   atol=1e-12)


def test_truncated_certificate_matches_matrix_powers(rng):
    for _ in range(10):
        n = int(rng.integers(2, 6))
        h = rng.random((n, n)) * (rng.random((n, n)) < 0.6) * 0.5
        b = rng.random(n)
        for kappa in (0, 1, 3, 6):
            got = truncated_certificate(h, b, kappa)
            want = oracles.certificate_oracle(h, b, kappa)
            np.testing.assert_allclose(got, want, atol=1e-12)


def test_truncated_certificate_known_values():
    sc = scenario_sleepy(0.4)
    h = influence_report(sc.mdp, sc.policy).influence_bound
    b = oscillation(policy_reward(sc.mdp, sc.policy), sc.mdp.state_sizes)
    np.testing.assert_allclose(truncated_certificate(h, b, 0), [0.0, 1.0],
                               atol=1e-15)
    for kappa in (1, 2, 5):
        # The influence chain has length 1, so the series is exhausted after
        # one round and further radius buys nothing.
        np.testing.assert_allclose(truncated_certificate(h, b, kappa),
                                   [0.4, 1.0], atol=1e-15)
    lf = scenario_leader_follower()
    h2 = influence_report(lf.mdp, lf.policy).influence_bound
    b2 = oscillation(policy_reward(lf.mdp, lf.policy), lf.mdp.state_sizes)
    np.testing.assert_allclose(truncated_certificate(h2, b2, 1), [1.0, 1.0],
                               atol=1e-15)


def test_hub_spoke_certificate_geometric_closed_form():
    n, beta, tau = 3, 1.0, 2.0
    sc = scenario_hub_spoke(n, beta, tau)
    h = influence_report(sc.mdp, sc.policy).influence_bound
    b = oscillation(policy_reward(sc.mdp, sc.policy), sc.mdp.state_sizes)
    w = 0.5 * np.tanh(beta / (2 * tau))
    rho = (n - 1) * w
    for kappa in range(6):
        want = b + w * sum(rho**t for t in range(kappa))
        np.testing.assert_allclose(truncated_certificate(h, b, kappa), want,
                                   atol=1e-12)
    # Support stabilizes after a single round: who contributes never changes
    # again, only the geometric weights shrink.
    g = support_graph(h)
    for i in range(n):
        assert g.ball(i, 1) == g.ball(i, 5)


def test_message_passing_is_bitwise_identical(rng):
    cases = []
    for sc in (scenario_sleepy(0.3), scenario_leader_follower(),
               scenario_hub_spoke(3, 1.0, 2.0)):
        h = influence_report(sc.mdp, sc.policy).influence_bound
        b = oscillation(policy_reward(sc.mdp, sc.policy), sc.mdp.state_sizes)
        cases.append((h, b))
    for _ in range(10):
        n = int(rng.integers(2, 7))
        h = rng.random((n, n)) * (rng.random((n, n)) < 0.5)
        cases.append((h, rng.random(n)))
    for h, b in cases:
        g = support_graph(h)
        for kappa in (0, 1, 2, 5, 8):
            dense = truncated_certificate(h, b, kappa)
            local = certificate_message_passing(g, h, b, kappa)
            assert np.array_equal(dense, local)


def test_message_passing_graph_consistency_check():
    h = np.array([[0.0, 0.5], [0.0, 0.0]])
    wrong = support_graph(np.zeros((2, 2)))
    with pytest.raises(ValidationError, match="inconsistent"):
        certificate_message_passing(wrong, h, np.ones(2), 1)


def test_message_passing_threshold_drops_weak_edges():
    h = np.array([[0.0, 0.0], [0.4, 0.0]])
    b = np.array([1.0, 1.0])
    g = support_graph(h, threshold=0.5)  # the 0.4 edge is below threshold
    local = certificate_message_passing(g, h, b, 3)
    dense = truncated_certificate(h, b, 3)
    assert (local <= dense + 1e-15).all()
    np.testing.assert_allclose(local, b, atol=1e-15)


def test_support_graph_balls_match_bfs(rng):
    for _ in range(10):
        n = int(rng.integers(2, 8))
        h = rng.random((n, n)) * (rng.random((n, n)) < 0.3)
        g = support_graph(h)
        edges = {(i, j) for i in range(n) for j in range(n) if h[j, i] > 0}
        for i in range(n):
            for radius in (0, 1, 2, n):
                for direction in ("in", "out"):
                    want = oracles.ball_oracle(n, edges, i, radius, direction)
                    assert set(g.ball(i, radius, direction)) == want


def test_support_graph_ball_direction_semantics():
    # Single edge 1 -> 2 (entry [2, 1] in influenced-row orientation).
    h = np.zeros((3, 3))
    h[2, 1] = 0.8
    g = support_graph(h)
    assert g.ball(2, 1) == (1, 2)          # ancestors by default
    assert g.ball(2, 0) == (2,)
    assert g.ball(1, 1, direction="out") == (1, 2)
    assert g.ball(1, 1, direction="in") == (1,)
    with pytest.raises(ValidationError):
        g.ball(5, 1)
    with pytest.raises(ValidationError):
        g.ball(0, 1, direction="sideways")


def test_truncated_poisson_converges_to_exact():
    for mdp, soft in small_instances(3, start_seed=1000):
        kernel = induced_kernel(mdp, soft)
        r_pi = policy_reward(mdp, soft)
        sol = solve_poisson(kernel, r_pi)
        h0 = truncated_poisson(kernel, r_pi, sol.rbar, 0)
        np.testing.assert_allclose(h0, (r_pi - sol.rbar) - (r_pi - sol.rbar)[0],
                                   atol=1e-12)
        h_far = truncated_poisson(kernel, r_pi, sol.rbar, 400)
        assert aligned_sup_distance(h_far, sol.h) <= 1e-8
        errs = [aligned_sup_distance(
            truncated_poisson(kernel, r_pi, sol.rbar, k), sol.h)
            for k in range(6)]
        assert errs[-1] <= errs[0] + 1e-12


def test_neumann_bound_dominates_bias_oscillation():
    checked = 0
    for mdp, soft in small_instances(12, start_seed=1100, scope_radius=0):
        rep = influence_report(mdp, soft)
        if rep.rho > 0.95:
            continue
        kernel = induced_kernel(mdp, soft)
        r_pi = policy_reward(mdp, soft)
        sol = solve_poisson(kernel, r_pi)
        bound = neumann_oscillation_bound(
            rep.influence_bound, oscillation(r_pi, mdp.state_sizes))
        assert (oscillation(sol.h, mdp.state_sizes) <= bound + 1e-9).all()
        checked += 1
    assert checked >= 3


def test_neumann_bound_exact_on_leader_follower():
    sc = scenario_leader_follower()
    h_mat = influence_report(sc.mdp, sc.policy).influence_bound
    kernel, r_pi = closed_loop(sc)
    sol = solve_poisson(kernel, r_pi)
    bound = neumann_oscillation_bound(h_mat, oscillation(r_pi, sc.mdp.state_sizes))
    np.testing.assert_allclose(bound, [1.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(oscillation(sol.h, sc.mdp.state_sizes), bound,
                               atol=1e-12)


def test_neumann_bound_needs_contraction():
    with pytest.raises(ValidationError):
        neumann_oscillation_bound(np.eye(2), np.ones(2))


def test_bias_and_cert_bound_formulas():
    b = np.array([0.2, 0.7])
    bias, gap = bias_and_cert_bounds(2.0, 0.5, 3, b, b)
    tail = 0.5**4 / 0.5
    assert bias == pytest.approx(0.5 * 2.0 * tail * 0.9, abs=1e-15)
    assert gap == pytest.approx(2.0 * tail * 0.7, abs=1e-15)
    with pytest.raises(ValidationError):
        bias_and_cert_bounds(2.0, 1.0, 3, b, b)
    with pytest.raises(ValidationError):
        bias_and_cert_bounds(0.5, 0.5, 3, b, b)


def test_locality_certificate_fields_sleepy():
    sc = scenario_sleepy(0.25)
    cert = locality_certificate(sc.mdp, sc.policy, 1)
    assert cert.kappa == 1
    np.testing.assert_allclose(cert.cert, [0.25, 1.0], atol=1e-12)
    np.testing.assert_allclose(cert.b, [0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(cert.h_hat, sc.expected["h"], atol=1e-12)
    assert cert.certified
    assert cert.rho == pytest.approx(0.0, abs=1e-9)
    assert cert.lam == pytest.approx(1e-9, abs=1e-10)
    assert cert.c_est is not None and cert.c_est >= 1.0
    assert 0.0 <= cert.bias_bound < 1e-6
    assert 0.0 <= cert.cert_gap_bound < 1e-6
    assert cert.solution.rbar == pytest.approx(0.5, abs=1e-12)


def test_locality_certificate_without_contraction():
    sc = scenario_leader_follower()
    cert = locality_certificate(sc.mdp, sc.policy, 2)
    assert not cert.certified
    # rho is 0 here (nilpotent influence), so geometric bounds still exist;
    # the flag is down because a single hop carries full TV.
    assert cert.rho < 1.0
    assert cert.bias_bound is not None

    # A genuinely non-contracting influence matrix loses the bounds.
    mdp, soft = small_instances(1, start_seed=1200)[0]  # dense scopes, rho > 1
    rep = influence_report(mdp, soft)
    assert rep.rho >= 1.0
    loose = locality_certificate(mdp, soft, 2)
    assert not loose.certified
    assert loose.c_est is None
    assert loose.bias_bound is None
    assert loose.cert_gap_bound is None
    # The finite sums are still well defined and reported.
    assert loose.cert.shape == (mdp.n_agents,)
    assert np.isfinite(loose.h_hat).all()


def test_decay_table_rows_and_bounds():
    sc = scenario_sleepy(0.5)
    rows = decay_table(sc.mdp, sc.policy, 4)
    assert [r["kappa"] for r in rows] == [0, 1, 2, 3, 4]
    for r in rows:
        assert set(r) == {"kappa", "certificate_sup", "measured_bias",
                          "bias_bound", "measured_gap", "cert_gap_bound"}
    # Truncating at 0 misses the one-step influence; radius 1 is exact.
    assert rows[0]["measured_gap"] == pytest.approx(0.5, abs=1e-12)
    assert all(r["measured_gap"] == pytest.approx(0.0, abs=1e-12)
               for r in rows[1:])
    assert rows[0]["measured_bias"] == pytest.approx(0.25, abs=1e-12)
    assert rows[1]["measured_bias"] == pytest.approx(0.0, abs=1e-12)
    assert rows[0]["certificate_sup"] == pytest.approx(1.0, abs=1e-15)
    bounds = [r["bias_bound"] for r in rows]
    assert all(bounds[i + 1] <= bounds[i] for i in range(len(bounds) - 1))


def test_decay_table_measured_within_bounds(rng):
    checked = 0
    for mdp, soft in small_instances(6, start_seed=1300, scope_radius=0):
        rep = influence_report(mdp, soft)
        if rep.rho + 1e-9 >= 1.0:
            continue
        for row in decay_table(mdp, soft, 6):
            assert row["measured_bias"] <= row["bias_bound"] + 1e-12
            assert row["measured_gap"] <= row["cert_gap_bound"] + 1e-12
        checked += 1
    assert checked >= 3


def test_discounted_rate_and_radius():
    assert discounted_rate(0.99, 0.5) == pytest.approx(0.495, abs=1e-15)
    assert required_radius(0.495, 0.01) == 7
    assert abs(required_radius(0.99, 0.01) - 458) <= 1
    assert required_radius(0.5, 0.25) == 2
    assert required_radius(0.5, 0.5) == 1
    assert required_radius(0.5, 0.9) == 1
    with pytest.raises(ValidationError):
        discounted_rate(0.0, 0.5)
    with pytest.raises(ValidationError):
        discounted_rate(0.5, -1.0)
    with pytest.raises(ValidationError):
        required_radius(1.0, 0.01)
    with pytest.raises(ValidationError):
        required_radius(0.5, 0.0)


def test_discounted_contraction_check(rng):
    for mdp, soft in small_instances(4, start_seed=1400):
        f = rng.standard_normal(mdp.state_space.size)
        for gamma in (0.3, 0.9, 1.0):
            lhs, rhs = discounted_contraction_check(mdp, soft, gamma, f)
            assert (lhs <= rhs + 1e-12).all()
        lhs1, rhs1 = discounted_contraction_check(mdp, soft, 1.0, f)
        lhs_half, rhs_half = discounted_contraction_check(mdp, soft, 0.5, f)
        np.testing.assert_allclose(rhs_half, 0.5 * rhs1, atol=1e-12)
        np.testing.assert_allclose(lhs_half, 0.5 * lhs1, atol=1e-12)
