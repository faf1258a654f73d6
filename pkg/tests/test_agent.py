import math

import numpy as np
import pytest

from oracles import project_bruteforce, vanilla_loss
from tcdqn.agent import Agent, AgentConfig, categorical_project, epsilon_at
from tcdqn.neural import Support
from tcdqn.replay import Batch, Transition, UniformBuffer

SUP = Support()


def cfg(**kw):
    base = dict(n_fc=8, n_nl=6, learn_start=1, batch_size=4)
    base.update(kw)
    return AgentConfig(**base)


def off(**kw):
    return cfg(use_double=False, use_dueling=False, use_per=False, use_noisy=False, use_distributional=False, **kw)


def constant_head(net, values):
    """Make ``net`` ignore its input: zero everything, put ``values`` in the output bias."""
    for _, p in net.parameters():
        p[...] = 0.0
    net.advantage[-1].bias[...] = np.ravel(values)


def batch_of(s, a, r, s_next, terminal):
    n = len(a)
    return Batch(np.asarray(s, float), np.asarray(a), np.asarray(r, float), np.asarray(s_next, float),
                 np.asarray(terminal, bool), np.arange(n), np.ones(n), np.arange(n))


# -- exploration ------------------------------------------------------------------

def test_epsilon_schedule():
    assert epsilon_at(0) == 1.0
    assert epsilon_at(15000) == pytest.approx(0.05 + 0.95 * math.exp(-1), abs=1e-12)
    assert epsilon_at(15000) == pytest.approx(0.39946, abs=5e-5)
    assert epsilon_at(math.inf) == 0.05
    assert epsilon_at(0, noisy=True) == 0.0


def test_full_exploration_is_uniform():
    agent = Agent(3, 4, off(eps_decay=1e12), rng=np.random.default_rng(0))
    counts = np.bincount([agent.select_action(np.zeros(3)) for _ in range(100_000)], minlength=4)
    assert np.all(np.abs(counts / 1e5 - 0.25) < 0.01)


def test_greedy_constructed_network():
    agent = Agent(3, 2, off(), rng=np.random.default_rng(0))
    constant_head(agent.online, [0.2, 0.7])
    agent.frames = 10 ** 9
    agent.config.eps_final = 0.0
    assert all(agent.select_action(np.ones(3)) == 1 for _ in range(100))
    constant_head(agent.online, [0.5, 0.5])
    assert agent.select_action(np.ones(3), greedy=True) == 0


def test_noisy_greedy_is_deterministic():
    agent = Agent(3, 2, cfg(), rng=np.random.default_rng(0))
    x = np.random.default_rng(1).normal(size=3)
    assert len({agent.select_action(x, greedy=True) for _ in range(20)}) == 1


# -- categorical projection -------------------------------------------------------

def test_projection_terminal_exact_atom():
    p = np.random.default_rng(0).dirichlet(np.ones(41))
    out = categorical_project(2.0, 0.99, True, p, SUP)
    assert out[30] == pytest.approx(1.0, abs=1e-15) and out.sum() == pytest.approx(1.0)


def test_projection_identity():
    p = np.random.default_rng(1).dirichlet(np.ones(41))
    np.testing.assert_allclose(categorical_project(0.0, 1.0, False, p, SUP), p, atol=1e-15)


def test_projection_half_split():
    p = np.zeros(41)
    p[20] = 1.0
    out = categorical_project(0.1, 0.99, False, p, SUP)
    assert out[20] == pytest.approx(0.5, abs=1e-12) and out[21] == pytest.approx(0.5, abs=1e-12)


def test_projection_matches_bruteforce():
    rng = np.random.default_rng(2)
    sup = Support(-4.0, 4.0, 41)
    for _ in range(500):
        r = rng.choice([rng.uniform(-6, 6), round(rng.uniform(-4, 4), 1)])
        g = rng.choice([rng.uniform(0, 1), 0.99, 1.0])
        t = bool(rng.integers(2))
        p = rng.dirichlet(np.full(41, rng.uniform(0.05, 2)))
        out = categorical_project(r, g, t, p, sup)
        ref = project_bruteforce(r, g, t, p, -4.0, 4.0, 41)
        assert np.max(np.abs(out - ref)) <= 1e-12
        assert abs(out.sum() - 1.0) <= 1e-9


def test_projection_rejects_bad_input():
    with pytest.raises(ValueError):
        categorical_project(0.0, 0.9, False, np.full(41, 0.5), SUP)


# -- targets ----------------------------------------------------------------------

def constructed_pair(double, dist):
    c = cfg(use_double=double, use_dueling=False, use_noisy=False, use_distributional=dist)
    agent = Agent(2, 2, c, rng=np.random.default_rng(0))
    if dist:
        n = SUP.n_atoms
        # online prefers action 0, target prefers action 1
        on = np.zeros((2, n))
        on[0, 30] = on[1, 10] = 8.0
        tg = np.zeros((2, n))
        tg[0, 12] = tg[1, 28] = 8.0
        constant_head(agent.online, on)
        constant_head(agent.target, tg)
    else:
        constant_head(agent.online, [1.0, 0.0])
        constant_head(agent.target, [0.3, 0.9])
    return agent


def test_double_scalar_target():
    agent = constructed_pair(True, False)
    b = batch_of([[0, 0]], [0], [0.5], [[1, 1]], [False])
    assert agent.compute_target(b)[0] == pytest.approx(0.5 + 0.99 * 0.3, abs=1e-15)
    agent = constructed_pair(False, False)
    assert agent.compute_target(b)[0] == pytest.approx(0.5 + 0.99 * 0.9, abs=1e-15)


def test_double_distributional_target():
    b = batch_of([[0, 0]], [0], [0.5], [[1, 1]], [False])
    agent = constructed_pair(True, True)
    target_probs = agent.target.forward(np.ones(2))
    expected = categorical_project(0.5, 0.99, False, target_probs[0], SUP)
    double = agent.compute_target(b)[0]
    np.testing.assert_allclose(double, expected, atol=1e-15)
    plain = constructed_pair(False, True).compute_target(b)[0]
    np.testing.assert_allclose(plain, categorical_project(0.5, 0.99, False, target_probs[1], SUP), atol=1e-15)
    assert not np.allclose(double, plain)


def test_terminal_target_ignores_next_state():
    agent = Agent(3, 2, cfg(), rng=np.random.default_rng(0))
    rng = np.random.default_rng(1)
    b1 = batch_of(rng.normal(size=(1, 3)), [1], [2.0], rng.normal(size=(1, 3)), [True])
    b2 = batch_of(b1.s, [1], [2.0], rng.normal(size=(1, 3)), [True])
    np.testing.assert_allclose(agent.compute_target(b1), agent.compute_target(b2), atol=1e-12)
    assert agent.compute_target(b1)[0, 30] == pytest.approx(1.0)


# -- loss and updates -------------------------------------------------------------

def test_matched_distribution_gradient():
    agent = Agent(3, 2, cfg(use_noisy=False), rng=np.random.default_rng(0))
    x = np.random.default_rng(1).normal(size=(4, 3))
    probs = agent.online.forward(x)
    b = batch_of(x, [0, 1, 1, 0], np.zeros(4), x, [False] * 4)
    targets = probs[np.arange(4), b.a]
    loss, grads, _ = agent.loss_and_grads(b, targets)
    entropy = -np.mean(np.sum(targets * np.log(targets), axis=1))
    assert loss == pytest.approx(entropy, abs=1e-12)
    assert max(np.abs(g).max() for g in grads.values()) < 1e-9


def vanilla_layers(net):
    return [(l.weight, l.bias) for l in net.trunk + net.advantage]


def scripted_batches(seed, n, dim=5):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        m = 8
        yield batch_of(rng.normal(size=(m, dim)), rng.integers(0, 3, m), rng.normal(size=m),
                       rng.normal(size=(m, dim)), rng.random(m) < 0.3)


def test_vanilla_loss_oracle():
    agent = Agent(5, 3, off(), rng=np.random.default_rng(3))
    agent.target = agent.online.clone()
    for k, (name, p) in enumerate(agent.target.parameters()):
        p += 0.05 * np.sin(np.arange(p.size).reshape(p.shape) + k)
    for b in scripted_batches(4, 20):
        targets = agent.compute_target(b)
        loss, _, _ = agent.loss_and_grads(b, targets)
        ref = vanilla_loss(vanilla_layers(agent.online), vanilla_layers(agent.target), b.s, b.a, b.r,
                           b.s_next, b.terminal, agent.config.gamma)
        assert abs(loss - ref) <= 1e-10


def test_vanilla_update_trace_matches_torch():
    torch = pytest.importorskip("torch")
    torch.set_default_dtype(torch.float64)
    c = off(lr=1e-3, target_period=40)
    agent = Agent(5, 3, c, rng=np.random.default_rng(5), buffer=UniformBuffer(64))
    batches = list(scripted_batches(6, 30))

    online = [tuple(torch.tensor(a.copy(), requires_grad=True) for a in pair) for pair in vanilla_layers(agent.online)]
    target = [tuple(torch.tensor(a.copy()) for a in pair) for pair in vanilla_layers(agent.target)]
    opt = torch.optim.Adam([t for pair in online for t in pair], lr=1e-3, betas=(0.9, 0.999), eps=1e-8)

    def q(layers, x):
        h = torch.tensor(x)
        for k, (w, b) in enumerate(layers):
            h = h @ w.T + b
            if k < len(layers) - 1:
                h = torch.relu(h)
        return h

    frames = 0
    for b in batches:
        targets = agent.compute_target(b)
        _, grads, _ = agent.loss_and_grads(b, targets)
        agent.optimizer.step(grads)
        agent.advance_frames(15)

        with torch.no_grad():
            nxt = q(target, b.s_next).max(dim=1).values
            y = torch.tensor(b.r) + c.gamma * nxt * torch.tensor(~b.terminal, dtype=torch.float64)
        pred = q(online, b.s)[torch.arange(len(b.a)), torch.tensor(b.a)]
        loss = torch.mean((y - pred) ** 2)
        opt.zero_grad()
        loss.backward()
        opt.step()
        before, frames = frames, frames + 15
        if frames // c.target_period > before // c.target_period:
            target = [tuple(t.detach().clone() for t in pair) for pair in online]

    for (w, bias), (tw, tb) in zip(vanilla_layers(agent.online), online):
        np.testing.assert_allclose(w, tw.detach().numpy(), rtol=0, atol=1e-10)
        np.testing.assert_allclose(bias, tb.detach().numpy(), rtol=0, atol=1e-10)


@pytest.mark.parametrize("toggles", [{}, {"use_distributional": False}, {"use_noisy": False, "use_dueling": False}])
def test_loss_decreases_on_frozen_batch(toggles):
    agent = Agent(5, 3, cfg(lr=1e-3, **toggles), rng=np.random.default_rng(7))
    b = next(scripted_batches(8, 1))
    b.r[:] = np.clip(b.r, -1, 1)
    targets = agent.compute_target(b)
    losses = []
    for _ in range(200):
        loss, grads, _ = agent.loss_and_grads(b, targets)
        agent.optimizer.step(grads)
        losses.append(loss)
    assert np.mean(losses[-10:]) < np.mean(losses[:10])


def test_train_step_waits_for_learn_start():
    agent = Agent(3, 2, cfg(learn_start=5), rng=np.random.default_rng(0))
    for i in range(4):
        agent.remember(Transition(np.zeros(3), 0, 0.0, np.zeros(3), False))
        assert agent.train_step() is None
    agent.remember(Transition(np.zeros(3), 1, 1.0, np.ones(3), True))
    info = agent.train_step()
    assert info is not None and np.isfinite(info.loss)
    assert agent.skipped_updates == 4 and agent.updates == 1


def test_priorities_follow_td_errors():
    agent = Agent(3, 2, cfg(batch_size=8), rng=np.random.default_rng(0))
    rng = np.random.default_rng(1)
    for i in range(8):
        agent.remember(Transition(rng.normal(size=3), i % 2, float(i), rng.normal(size=3), False))
    agent.train_step()
    assert agent.buffer.max_priority > 1.0 or not np.allclose(agent.buffer.tree.leaves[:8], 1.0)


def test_target_sync_on_period_boundary():
    agent = Agent(3, 2, cfg(target_period=100), rng=np.random.default_rng(0))
    agent.online.trunk[0].bias += 1.0
    agent.advance_frames(99)
    assert not np.array_equal(agent.online.trunk[0].bias, agent.target.trunk[0].bias)
    agent.advance_frames(15)
    assert np.array_equal(agent.online.trunk[0].bias, agent.target.trunk[0].bias)
    assert agent.last_sync == 114
