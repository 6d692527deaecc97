import math

import numpy as np
import pytest

from cep.neural import (LOG_STD_MAX, LOG_STD_MIN, Batch, Mlp, PolicyBundle,
                        ReplayBuffer, TrainConfig, TrainingDiverged,
                        action_log_density, actor_loss_and_grads,
                        actor_mean_action, actor_sample_batch, actor_update,
                        critic_loss_and_grads, critic_target, critic_update,
                        forward_actor, forward_critic, load_checkpoint,
                        save_checkpoint, soft_update)

STATE_DIM = 6


def make_bundle(seed=0, hidden=(8, 8)) -> PolicyBundle:
    cfg = TrainConfig(hidden=hidden)
    return PolicyBundle.create(STATE_DIM, cfg, np.random.default_rng(seed))


def random_batch(n, rng, terminal_frac=0.0) -> Batch:
    term = rng.uniform(size=n) < terminal_frac
    return Batch(rng.normal(size=(n, STATE_DIM)), rng.uniform(-1, 1, (n, 2)),
                 rng.normal(size=n), rng.normal(size=(n, STATE_DIM)), term)


def zero_net(widths):
    net = Mlp.create(widths, np.random.default_rng(0))
    for i in range(net.n_layers):
        net.weights[i][:] = 0.0
        net.biases[i][:] = 0.0
    return net


class TestMlp:
    def test_zero_net_outputs_zero(self):
        net = zero_net([4, 8, 8, 1])
        assert np.all(net(np.ones((3, 4))) == 0.0)

    def test_param_roundtrip(self):
        net = Mlp.create([4, 8, 2], np.random.default_rng(1))
        flat = net.params_flat()
        clone = zero_net([4, 8, 2])
        clone.set_params_flat(flat)
        x = np.random.default_rng(2).normal(size=(5, 4))
        assert np.array_equal(net(x), clone(x))

    def test_param_count(self):
        net = Mlp.create([4, 8, 2], np.random.default_rng(1))
        assert len(net.params_flat()) == (4 + 1) * 8 + (8 + 1) * 2


class TestForwardActor:
    def test_zero_net_zero_state(self):
        net = zero_net([STATE_DIM, 8, 4])
        out = forward_actor(net, np.zeros(STATE_DIM), np.random.default_rng(3))
        assert np.all(out.mean == 0.0)
        assert np.all(out.log_std == 0.0)
        assert np.all(np.abs(out.action) < 1.0)

    def test_same_seed_same_sample(self):
        bundle = make_bundle()
        s = np.random.default_rng(1).normal(size=STATE_DIM)
        a1 = forward_actor(bundle.actor, s, np.random.default_rng(9))
        a2 = forward_actor(bundle.actor, s, np.random.default_rng(9))
        assert np.array_equal(a1.action, a2.action)
        assert a1.log_prob == a2.log_prob

    def test_log_std_clamped(self):
        net = zero_net([STATE_DIM, 8, 4])
        net.biases[-1][2:] = -20.0
        out = forward_actor(net, np.zeros(STATE_DIM), np.random.default_rng(0))
        assert np.all(out.log_std == LOG_STD_MIN)
        net.biases[-1][2:] = 20.0
        out = forward_actor(net, np.zeros(STATE_DIM), np.random.default_rng(0))
        assert np.all(out.log_std == LOG_STD_MAX)

    def test_width_mismatch_raises(self):
        bundle = make_bundle()
        with pytest.raises(ValueError):
            forward_actor(bundle.actor, np.zeros(STATE_DIM + 1),
                          np.random.default_rng(0))

    def test_action_bounds(self):
        bundle = make_bundle()
        rng = np.random.default_rng(7)
        for _ in range(50):
            out = forward_actor(bundle.actor, rng.normal(size=STATE_DIM), rng)
            assert np.all(np.abs(out.action) <= 1.0)


class TestForwardCritic:
    def test_zero_net(self):
        net = zero_net([STATE_DIM + 2, 8, 1])
        assert forward_critic(net, np.ones(STATE_DIM), np.ones(2)) == 0.0

    def test_purity(self):
        bundle = make_bundle()
        s, a = np.ones(STATE_DIM), np.array([0.3, -0.2])
        assert forward_critic(bundle.critic, s, a) == \
            forward_critic(bundle.critic, s, a)

    def test_lipschitz_bound(self):
        # |Q(s,a) - Q(s,a+d)| <= L*|d| with L from the product of layer
        # spectral norms (tanh is 1-Lipschitz)
        bundle = make_bundle(seed=4)
        net = bundle.critic
        L = 1.0
        for w in net.weights:
            L *= np.linalg.norm(w, ord=2)
        rng = np.random.default_rng(5)
        s = rng.normal(size=STATE_DIM)
        for _ in range(50):
            a = rng.uniform(-1, 1, 2)
            d = rng.normal(size=2) * 1e-2
            q1 = forward_critic(net, s, a)
            q2 = forward_critic(net, s, a + d)
            assert abs(q1 - q2) <= L * np.linalg.norm(d) + 1e-12


class TestSquashedDensity:
    def test_monte_carlo_normalization(self):
        # integral of pi(a|s) over the action box is 1 (within MC error)
        bundle = make_bundle(seed=2)
        s = np.random.default_rng(0).normal(size=STATE_DIM) * 0.3
        rng = np.random.default_rng(42)
        n = 100_000
        actions = rng.uniform(-1.0, 1.0, size=(n, 2))
        log_p = np.array([action_log_density(bundle.actor, s, a)
                          for a in actions[:: 1]])
        integral = 4.0 * float(np.mean(np.exp(log_p)))
        assert abs(integral - 1.0) < 0.02

    def test_sample_path_density_consistency(self):
        # the log-prob reported at sampling matches the standalone density
        bundle = make_bundle(seed=3)
        s = np.random.default_rng(1).normal(size=STATE_DIM)
        out = forward_actor(bundle.actor, s, np.random.default_rng(11))
        lp = action_log_density(bundle.actor, s, out.action)
        assert abs(lp - out.log_prob) < 1e-9


def flat_grads(grads):
    return np.concatenate([np.concatenate([dw.ravel(), db]) for dw, db in grads])


def fd_check(loss_fn, net, analytic, rng, n_coords=40, h=1e-5, tol=1e-4):
    """Central finite differences on random coordinates vs analytic grads."""
    flat = net.params_flat()
    idx = rng.choice(len(flat), size=min(n_coords, len(flat)), replace=False)
    for i in idx:
        orig = flat[i]
        flat[i] = orig + h
        net.set_params_flat(flat)
        up = loss_fn()
        flat[i] = orig - h
        net.set_params_flat(flat)
        down = loss_fn()
        flat[i] = orig
        net.set_params_flat(flat)
        fd = (up - down) / (2 * h)
        ga = analytic[i]
        assert abs(ga - fd) < tol * max(abs(ga), abs(fd), 1e-6), \
            f"coord {i}: analytic {ga} vs fd {fd}"


class TestGradients:
    @pytest.mark.parametrize("seed", range(10))
    def test_critic_gradients_match_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        bundle = make_bundle(seed=seed)
        batch = random_batch(8, rng)
        y = rng.normal(size=8)
        _, grads = critic_loss_and_grads(bundle.critic, batch.states,
                                         batch.actions, y)
        analytic = flat_grads(grads)

        def loss_fn():
            return critic_loss_and_grads(bundle.critic, batch.states,
                                         batch.actions, y)[0]

        fd_check(loss_fn, bundle.critic, analytic, rng)

    @pytest.mark.parametrize("seed", range(10))
    def test_actor_gradients_match_finite_differences(self, seed):
        rng = np.random.default_rng(100 + seed)
        bundle = make_bundle(seed=seed)
        states = rng.normal(size=(8, STATE_DIM))
        noise = rng.standard_normal((8, 2))
        alpha = 0.2
        _, grads, _ = actor_loss_and_grads(bundle.actor, bundle.critic,
                                           states, noise, alpha)
        analytic = flat_grads(grads)

        def loss_fn():
            return actor_loss_and_grads(bundle.actor, bundle.critic, states,
                                        noise, alpha)[0]

        fd_check(loss_fn, bundle.actor, analytic, rng)


class TestCriticTarget:
    def test_gamma_zero(self):
        bundle = make_bundle()
        cfg = TrainConfig(gamma=1e-12)  # gamma must be > 0; effectively zero
        rng = np.random.default_rng(0)
        batch = random_batch(6, rng)
        y = critic_target(batch, bundle, cfg, rng.standard_normal((6, 2)))
        assert np.allclose(y, batch.rewards, atol=1e-9)

    def test_terminal_masked(self):
        bundle = make_bundle()
        cfg = TrainConfig(gamma=0.9)
        rng = np.random.default_rng(0)
        batch = random_batch(6, rng, terminal_frac=1.0)
        y = critic_target(batch, bundle, cfg, rng.standard_normal((6, 2)))
        assert np.array_equal(y, batch.rewards)

    def test_zero_critic_zero_alpha(self):
        bundle = make_bundle()
        bundle.target_critic = zero_net([STATE_DIM + 2, 8, 8, 1])
        cfg = TrainConfig(gamma=0.9, alpha=1e-300)
        rng = np.random.default_rng(0)
        batch = random_batch(6, rng)
        y = critic_target(batch, bundle, cfg, rng.standard_normal((6, 2)))
        assert np.allclose(y, batch.rewards, atol=1e-9)


class TestUpdates:
    def test_overfit_one_batch_critic(self):
        bundle = make_bundle(seed=6)
        cfg = TrainConfig(gamma=0.9, lr_critic=1e-2, hidden=(8, 8))
        rng = np.random.default_rng(1)
        batch = random_batch(16, rng)
        first = critic_update(batch, bundle, cfg, np.random.default_rng(5))
        last = first
        for _ in range(99):
            last = critic_update(batch, bundle, cfg, np.random.default_rng(5))
        assert last < first

    def test_zero_reward_zero_gamma_zero_critic_loss_zero(self):
        bundle = make_bundle()
        bundle.critic = zero_net([STATE_DIM + 2, 8, 8, 1])
        bundle.target_critic = zero_net([STATE_DIM + 2, 8, 8, 1])
        cfg = TrainConfig(gamma=1e-12, alpha=1e-300)
        rng = np.random.default_rng(0)
        batch = random_batch(6, rng)
        batch.rewards[:] = 0.0
        loss = critic_update(batch, bundle, cfg, rng)
        assert loss == 0.0

    def test_zero_critic_zero_alpha_actor_unchanged(self):
        bundle = make_bundle()
        bundle.critic = zero_net([STATE_DIM + 2, 8, 8, 1])
        cfg = TrainConfig(alpha=1e-300)
        rng = np.random.default_rng(0)
        batch = random_batch(6, rng)
        before = bundle.actor.params_flat()
        actor_update(batch, bundle, cfg, rng)
        assert np.allclose(bundle.actor.params_flat(), before, atol=1e-250)

    def test_entropy_domination_widens_policy(self):
        # huge alpha: the entropy bonus pushes log_std toward its upper clamp
        bundle = make_bundle(seed=8)
        cfg = TrainConfig(alpha=10.0, lr_actor=1e-2, hidden=(8, 8))
        rng = np.random.default_rng(2)
        batch = random_batch(32, rng)
        s = batch.states

        def mean_log_std():
            out = bundle.actor(s)
            return float(np.mean(np.clip(out[:, 2:], LOG_STD_MIN, LOG_STD_MAX)))

        before = mean_log_std()
        for _ in range(500):
            actor_update(batch, bundle, cfg, rng)
        after = mean_log_std()
        assert after > before
        assert after > 1.5

    def test_divergence_detected(self):
        bundle = make_bundle()
        cfg = TrainConfig()
        rng = np.random.default_rng(0)
        batch = random_batch(6, rng)
        batch.rewards[0] = np.inf
        with pytest.raises(TrainingDiverged):
            critic_update(batch, bundle, cfg, rng)

    def test_update_determinism(self):
        def run():
            bundle = make_bundle(seed=12)
            cfg = TrainConfig(hidden=(8, 8))
            rng = np.random.default_rng(3)
            batch_rng = np.random.default_rng(4)
            for _ in range(20):
                batch = random_batch(8, batch_rng)
                critic_update(batch, bundle, cfg, rng)
                actor_update(batch, bundle, cfg, rng)
                soft_update(bundle.target_critic, bundle.critic, cfg.tau)
            return np.concatenate([bundle.actor.params_flat(),
                                   bundle.critic.params_flat(),
                                   bundle.target_critic.params_flat()])

        assert np.array_equal(run(), run())

    def test_parameters_finite_after_updates(self):
        bundle = make_bundle(seed=13)
        cfg = TrainConfig(hidden=(8, 8), lr_actor=0.1, lr_critic=0.1)
        rng = np.random.default_rng(5)
        for _ in range(50):
            batch = random_batch(8, rng)
            critic_update(batch, bundle, cfg, rng)
            actor_update(batch, bundle, cfg, rng)
        assert bundle.actor.is_finite()
        assert bundle.critic.is_finite()


class TestSoftUpdate:
    def test_tau_one_copies(self):
        a, b = make_bundle(seed=1), make_bundle(seed=2)
        soft_update(a.target_critic, b.critic, 1.0)
        assert np.array_equal(a.target_critic.params_flat(),
                              b.critic.params_flat())

    def test_tau_zero_keeps(self):
        a, b = make_bundle(seed=1), make_bundle(seed=2)
        before = a.target_critic.params_flat()
        soft_update(a.target_critic, b.critic, 1e-300)
        assert np.allclose(a.target_critic.params_flat(), before)

    def test_halfway(self):
        a = make_bundle(seed=1)
        t = zero_net([STATE_DIM + 2, 8, 8, 1])
        o = zero_net([STATE_DIM + 2, 8, 8, 1])
        for i in range(o.n_layers):
            o.weights[i][:] = 2.0
        soft_update(t, o, 0.5)
        assert np.all(t.weights[0] == 1.0)

    def test_shape_mismatch(self):
        t = zero_net([4, 8, 1])
        o = zero_net([4, 9, 1])
        with pytest.raises(ValueError):
            soft_update(t, o, 0.5)


class TestReplayBuffer:
    def test_sample_requires_fill(self):
        buf = ReplayBuffer(10, STATE_DIM)
        with pytest.raises(ValueError):
            buf.sample(1, np.random.default_rng(0))

    def test_ring_overwrite(self):
        buf = ReplayBuffer(4, 1)
        for i in range(6):
            buf.push(np.array([float(i)]), np.zeros(2), float(i),
                     np.zeros(1), False)
        assert buf.size == 4
        assert sorted(buf.rewards.tolist()) == [2.0, 3.0, 4.0, 5.0]

    def test_seeded_sampling_reproducible(self):
        buf = ReplayBuffer(16, 1)
        for i in range(16):
            buf.push(np.array([float(i)]), np.zeros(2), float(i),
                     np.zeros(1), False)
        b1 = buf.sample(8, np.random.default_rng(9))
        b2 = buf.sample(8, np.random.default_rng(9))
        assert np.array_equal(b1.rewards, b2.rewards)


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        bundle = make_bundle(seed=21)
        p1 = tmp_path / "a.cepn"
        p2 = tmp_path / "b.cepn"
        save_checkpoint(p1, bundle)
        loaded = load_checkpoint(p1)
        save_checkpoint(p2, loaded)
        assert p1.read_bytes() == p2.read_bytes()
        for net, orig in ((loaded.actor, bundle.actor),
                          (loaded.critic, bundle.critic),
                          (loaded.target_critic, bundle.target_critic)):
            assert net.widths == orig.widths
            assert np.array_equal(net.params_flat(), orig.params_flat())

    def test_magic_guard(self, tmp_path):
        p = tmp_path / "bad.cepn"
        p.write_bytes(b"NOPE1" + b"\x00" * 64)
        with pytest.raises(ValueError, match="magic"):
            load_checkpoint(p)

    def test_format_layout(self, tmp_path):
        bundle = make_bundle(seed=22)
        p = tmp_path / "c.cepn"
        save_checkpoint(p, bundle)
        data = p.read_bytes()
        assert data[:5] == b"CEPN1"
        import struct
        n_nets = struct.unpack_from("<I", data, 5)[0]
        assert n_nets == 3
        n_w = struct.unpack_from("<I", data, 9)[0]
        widths = struct.unpack_from(f"<{n_w}I", data, 13)
        assert list(widths) == bundle.actor.widths

    def test_loaded_behaves_identically(self, tmp_path):
        bundle = make_bundle(seed=23)
        p = tmp_path / "d.cepn"
        save_checkpoint(p, bundle)
        loaded = load_checkpoint(p)
        s = np.random.default_rng(3).normal(size=STATE_DIM)
        assert np.array_equal(actor_mean_action(bundle.actor, s),
                              actor_mean_action(loaded.actor, s))
