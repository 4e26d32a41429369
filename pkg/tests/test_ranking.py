"""Tests for the ranking module: targets, the sorting layer, and both loss terms."""

import numpy as np

from codicon.nets import Mlp, finite_diff_grad
from codicon.ranking import (
    RankingModule,
    TargetSequence,
    compute_intrinsic,
    compute_intrinsic_batch,
    encode_inputs,
    init_targets,
    intrinsic_grad_vjp,
    loss_mse,
    loss_var,
    rank_loss,
    update_eta_rank,
)


def make_module(seed=0, state_dim=6, n_agents=4, n_actions=5, hidden=(8,), assignment="identity"):
    rng = np.random.default_rng(seed)
    trg = np.random.default_rng(seed + 1000)
    return RankingModule.create(state_dim, n_agents, n_actions, rng, trg, hidden=hidden, assignment=assignment)


def random_batch(module, b, seed=0):
    rng = np.random.default_rng(seed)
    states = rng.normal(size=(b, module.state_dim))
    actions = rng.integers(0, module.n_actions, size=(b, module.n_agents))
    return states, actions


def test_targets_counts_and_order():
    rng = np.random.default_rng(7)
    t = init_targets(4, rng)
    assert t.values.shape == (4,)
    assert np.sum(t.values > 0) == 1  # ceil(0.2 * 4)
    assert np.sum(t.values < 0) == 3
    assert np.all(np.diff(t.values) > 0)
    assert np.all(t.values >= -1.0) and np.all(t.values <= 1.0)


def test_targets_positive_fraction_scales():
    rng = np.random.default_rng(3)
    t = init_targets(10, rng)
    assert np.sum(t.values > 0) == 2  # ceil(0.2 * 10)
    assert np.sum(t.values < 0) == 8


def test_targets_deterministic_per_seed():
    a = init_targets(4, np.random.default_rng(42))
    b = init_targets(4, np.random.default_rng(42))
    c = init_targets(4, np.random.default_rng(43))
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_encode_layout():
    module = make_module(state_dim=3, n_agents=2, n_actions=4)
    state = np.array([0.5, -1.0, 2.0])
    enc = encode_inputs(module, state[None, :], np.array([[3, 0]]))
    assert enc.shape == (1, 3 + 2 * (4 + 2))
    np.testing.assert_array_equal(enc[0, :3], state)
    # agent 0: action one-hot then id one-hot
    np.testing.assert_array_equal(enc[0, 3:9], [0, 0, 0, 1, 1, 0])
    # agent 1
    np.testing.assert_array_equal(enc[0, 9:15], [1, 0, 0, 0, 0, 1])


def set_constant_output(module, values):
    """Zero every weight and steer the final bias so the squashed scores equal
    `values` (which must lie strictly inside (-1, 1))."""
    net = module.net
    for w in net.weights:
        w[:] = 0.0
    for b in net.biases:
        b[:] = 0.0
    net.biases[-1][:] = np.arctanh(values)


def test_sorting_layer_and_assignments():
    module = make_module()
    set_constant_output(module, [0.3, -0.1, 0.2, 0.0])
    state = np.zeros(module.state_dim)
    out = compute_intrinsic(module, state, np.array([0, 1, 2, 3]))
    np.testing.assert_allclose(out.raw, [0.3, -0.1, 0.2, 0.0])
    np.testing.assert_allclose(out.sorted, [-0.1, 0.0, 0.2, 0.3])
    np.testing.assert_array_equal(out.perm, [1, 3, 2, 0])
    np.testing.assert_allclose(out.raw[out.perm], out.sorted)
    np.testing.assert_allclose(out.per_agent, out.raw)  # identity assignment

    module.assignment = "rank_position"
    out2 = compute_intrinsic(module, state, np.array([0, 1, 2, 3]))
    np.testing.assert_allclose(out2.per_agent, out2.sorted)


def test_sort_ties_broken_by_agent_index():
    module = make_module()
    set_constant_output(module, [0.5, -0.2, 0.5, -0.2])
    out = compute_intrinsic(module, np.zeros(module.state_dim), np.zeros(4, dtype=int))
    np.testing.assert_array_equal(out.perm, [1, 3, 0, 2])


def test_loss_mse_arithmetic():
    t = TargetSequence(np.array([-0.5, 0.5]))
    assert loss_mse(np.array([-0.5, 0.5]), t) == 0.0
    # gaps 0.1 and 0.3 -> (0.01 + 0.09) / 2
    assert np.isclose(loss_mse(np.array([-0.4, 0.2]), t), 0.05)


def test_loss_var_arithmetic():
    assert loss_var(np.array([1.0, 1.0, 1.0])) == 0.0
    # mean 0, squared deviations 1, 0, 1 -> 2/3
    assert np.isclose(loss_var(np.array([-1.0, 0.0, 1.0])), 2.0 / 3.0)


def test_rank_loss_zero_when_outputs_match_targets():
    module = make_module()
    set_constant_output(module, module.targets.values)  # already ascending
    states, actions = random_batch(module, 5, seed=1)
    loss, _ = rank_loss(module, states, actions, mse_coef=1.0, var_coef=0.0)
    assert abs(loss) < 1e-12


def test_rank_loss_batch_is_mean_of_singles():
    module = make_module(seed=5)
    states, actions = random_batch(module, 4, seed=2)
    whole, grad = rank_loss(module, states, actions, mse_coef=1.0, var_coef=0.1)
    singles = [
        rank_loss(module, states[i : i + 1], actions[i : i + 1], 1.0, 0.1)
        for i in range(4)
    ]
    assert np.isclose(whole, np.mean([s[0] for s in singles]))
    np.testing.assert_allclose(grad, np.mean([s[1] for s in singles], axis=0), atol=1e-12)


def test_rank_loss_gradient_matches_finite_differences():
    for seed in range(6):
        module = make_module(seed=seed, hidden=(6,))
        states, actions = random_batch(module, 3, seed=seed + 50)

        def f(flat, module=module, states=states, actions=actions):
            probe = RankingModule(
                module.net.copy(), module.targets, module.n_agents,
                module.n_actions, module.state_dim, module.assignment,
            )
            probe.net.set_flat(flat)
            return rank_loss(probe, states, actions, 1.0, 0.3)[0]

        _, grad = rank_loss(module, states, actions, 1.0, 0.3)
        fd = finite_diff_grad(f, module.net.flat_params())
        assert np.max(np.abs(grad - fd)) < 1e-6 * max(1.0, np.max(np.abs(fd)))


def test_sort_jacobian_is_permutation():
    # finite differences straight through the sorting layer: each output slot
    # responds to exactly one input coordinate, with unit slope
    raw = np.array([0.3, -0.1, 0.2, 0.0])
    perm = np.argsort(raw, kind="stable")
    eps = 1e-6
    jac = np.zeros((4, 4))
    for j in range(4):
        up, down = raw.copy(), raw.copy()
        up[j] += eps
        down[j] -= eps
        jac[:, j] = (np.sort(up) - np.sort(down)) / (2 * eps)
    expected = np.zeros((4, 4))
    expected[np.arange(4), perm] = 1.0
    np.testing.assert_allclose(jac, expected, atol=1e-9)


def test_descent_reduces_rank_loss():
    module = make_module(seed=3)
    states, actions = random_batch(module, 8, seed=9)
    before, _ = rank_loss(module, states, actions, 1.0, 0.0)
    module, _ = update_eta_rank(module, states, actions, lr=1e-2, mse_coef=1.0, var_coef=0.0)
    after, _ = rank_loss(module, states, actions, 1.0, 0.0)
    assert after < before


def test_mse_only_converges_to_targets():
    # with the variance term off, the sorted outputs should land on the
    # target sequence to within 1e-2 sup-norm in at most 5000 steps
    module = make_module(seed=11, hidden=(16,))
    states, actions = random_batch(module, 4, seed=30)
    for step in range(5000):
        _, srt, _, _ = compute_intrinsic_batch(module, states, actions)
        if np.max(np.abs(srt - module.targets.values)) < 1e-2:
            break
        module, _ = update_eta_rank(module, states, actions, lr=0.05, mse_coef=1.0, var_coef=0.0)
    _, srt, _, _ = compute_intrinsic_batch(module, states, actions)
    assert np.max(np.abs(srt - module.targets.values)) < 1e-2


def test_var_only_increases_spread_monotonically():
    # with the mse term off the update ascends the variance; on a fixed batch
    # the spread must grow every single step
    module = make_module(seed=13)
    states, actions = random_batch(module, 1, seed=40)
    spreads = []
    for _ in range(200):
        raw, _, _, _ = compute_intrinsic_batch(module, states, actions)
        spreads.append(loss_var(raw[0]))
        module, _ = update_eta_rank(module, states, actions, lr=1e-3, mse_coef=0.0, var_coef=1.0)
    raw, _, _, _ = compute_intrinsic_batch(module, states, actions)
    spreads.append(loss_var(raw[0]))
    diffs = np.diff(spreads)
    assert np.all(diffs > 0)


def test_update_skips_on_nonfinite_gradient():
    # an inf bias alone no longer hurts (tanh squashes it to 1), so poison
    # with nan, which survives the squash and contaminates the gradient
    module = make_module(seed=2)
    module.net.biases[-1][0] = np.nan
    states, actions = random_batch(module, 2, seed=4)
    before = module.net.flat_params()
    with np.errstate(invalid="ignore"):
        module2, _ = update_eta_rank(module, states, actions, 1e-3, 1.0, 0.1)
    np.testing.assert_array_equal(module2.net.flat_params(), before)


def test_vjp_matches_single_output_backward():
    module = make_module(seed=6)
    states, actions = random_batch(module, 3, seed=7)
    # weight only sample 1, agent 2: must equal d raw[1, 2] / d eta
    w = np.zeros((3, 4))
    w[1, 2] = 1.0
    got = intrinsic_grad_vjp(module, states, actions, w)

    def f(flat):
        probe = RankingModule(
            module.net.copy(), module.targets, module.n_agents,
            module.n_actions, module.state_dim, module.assignment,
        )
        probe.net.set_flat(flat)
        raw, _, _, _ = compute_intrinsic_batch(probe, states, actions)
        return raw[1, 2]

    fd = finite_diff_grad(f, module.net.flat_params())
    assert np.max(np.abs(got - fd)) < 1e-6


def test_vjp_rank_position_routes_through_perm():
    module = make_module(seed=8, assignment="rank_position")
    states, actions = random_batch(module, 2, seed=9)
    _, _, perms, per_agent = compute_intrinsic_batch(module, states, actions)
    w = np.zeros((2, 4))
    w[0, 1] = 1.0  # agent 1's reward in sample 0 is sorted slot 1 = raw[perms[0, 1]]
    got = intrinsic_grad_vjp(module, states, actions, w, perms=perms)

    def f(flat):
        probe = RankingModule(
            module.net.copy(), module.targets, module.n_agents,
            module.n_actions, module.state_dim, "rank_position",
        )
        probe.net.set_flat(flat)
        raw, _, _, _ = compute_intrinsic_batch(probe, states, actions)
        return raw[0, perms[0, 1]]

    fd = finite_diff_grad(f, module.net.flat_params())
    assert np.max(np.abs(got - fd)) < 1e-6


def test_vjp_linear_in_weights():
    module = make_module(seed=10)
    states, actions = random_batch(module, 3, seed=11)
    rng = np.random.default_rng(12)
    w1 = rng.normal(size=(3, 4))
    w2 = rng.normal(size=(3, 4))
    lhs = intrinsic_grad_vjp(module, states, actions, 2.0 * w1 + w2)
    rhs = 2.0 * intrinsic_grad_vjp(module, states, actions, w1) + intrinsic_grad_vjp(module, states, actions, w2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
