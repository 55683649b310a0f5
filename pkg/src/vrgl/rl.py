"""Tabular Q-learning plus four network baselines on the task environments.

Every trainer is a pure function of (task, config): the config seed drives
all randomness through one numpy Generator, so identically seeded runs
produce bitwise-identical reports.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .mdp import GridMDP
from .nets import Adam, DuelingMlp, Mlp, soft_update


class TrainError(ValueError):
    pass


@dataclass
class TrainConfig:
    episodes: int = 2000
    gamma: float = 0.99
    lr: float = 1e-3
    lr_tabular: float = 0.1
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.3
    batch_size: int = 64
    target_sync: int = 500
    buffer_capacity: int = 20000
    warmup: int = 200
    train_every: int = 1  # gradient step per N environment transitions
    hidden: tuple[int, ...] = (64, 64)
    seed: int = 0
    tau: float = 0.005
    noise_sigma: float = 0.1
    entropy_weight: float = 0.01
    max_steps: int | None = None  # per-episode cap; None uses the env/MDP default
    stop_success_rate: float | None = None  # early stop once the window clears this
    success_window: int = 100

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise TrainError("gamma must be in (0, 1)")
        if self.lr <= 0 or self.lr_tabular <= 0:
            raise TrainError("learning rates must be positive")

    def epsilon_at(self, episode: int) -> float:
        decay = max(1, int(self.episodes * self.epsilon_decay_fraction))
        frac = min(1.0, episode / decay)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


@dataclass
class TrainReport:
    returns: list[float] = field(default_factory=list)
    successes: list[bool] = field(default_factory=list)
    steps: list[int] = field(default_factory=list)

    def add(self, ret: float, success: bool, n_steps: int) -> None:
        self.returns.append(ret)
        self.successes.append(success)
        self.steps.append(n_steps)

    @property
    def episodes(self) -> int:
        return len(self.returns)

    def moving_average(self, window: int = 100) -> list[float]:
        out = []
        acc = 0.0
        for i, r in enumerate(self.returns):
            acc += r
            if i >= window:
                acc -= self.returns[i - window]
            out.append(acc / min(i + 1, window))
        return out

    def success_rate(self, window: int = 100) -> float:
        if not self.successes:
            return 0.0
        tail = self.successes[-window:]
        return sum(tail) / len(tail)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("episode,return,success,steps,ma100\n")
        ma = self.moving_average(100)
        for i, (r, s, n) in enumerate(zip(self.returns, self.successes, self.steps)):
            out.write(f"{i},{r!r},{int(s)},{n},{ma[i]!r}\n")
        return out.getvalue()


class ReplayBuffer:
    """Fixed-capacity ring of transitions with seeded uniform sampling."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._data: list = []
        self._next = 0

    def push(self, transition) -> None:
        if len(self._data) < self.capacity:
            self._data.append(transition)
        else:
            self._data[self._next] = transition
        self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.integers(0, len(self._data), size=batch_size)
        return [self._data[i] for i in idx]

    def __len__(self):
        return len(self._data)


def _stop_early(report: TrainReport, cfg: TrainConfig) -> bool:
    return (
        cfg.stop_success_rate is not None
        and report.episodes >= cfg.success_window
        and report.success_rate(cfg.success_window) >= cfg.stop_success_rate
    )


# ------------------------------------------------------------------ tabular

def q_learning_train(mdp: GridMDP, cfg: TrainConfig) -> tuple[np.ndarray, TrainReport]:
    """Tabular Q on an explicit MDP; terminal entry ends the episode (no bootstrap)."""
    rng = np.random.default_rng(cfg.seed)
    Q = np.zeros((mdp.n_states, mdp.n_actions))
    report = TrainReport()
    cap = cfg.max_steps or 200
    for ep in range(cfg.episodes):
        s = mdp.start
        total = 0.0
        success = False
        steps = 0
        eps = cfg.epsilon_at(ep)
        for _ in range(cap):
            if rng.random() < eps:
                a = int(rng.integers(mdp.n_actions))
            else:
                a = int(np.argmax(Q[s]))  # ties resolved toward the lowest index
            s2 = int(mdp.transitions[s, a])
            r = float(mdp.reward[s2])
            done = s2 in mdp.terminals
            target = r if done else r + cfg.gamma * float(np.max(Q[s2]))
            Q[s, a] += cfg.lr_tabular * (target - Q[s, a])
            total += r
            steps += 1
            s = s2
            if done:
                success = True
                break
        report.add(total, success, steps)
        if _stop_early(report, cfg):
            break
    return Q, report


def greedy_policy(Q: np.ndarray):
    def policy(s, rng=None):
        return int(np.argmax(Q[s]))

    return policy


# ------------------------------------------------------------------ DQN family

def _episode_loop(env, cfg: TrainConfig, act, on_transition):
    """Shared episodic driver; returns the TrainReport."""
    report = TrainReport()
    cap = cfg.max_steps or env.step_limit
    for ep in range(cfg.episodes):
        obs = env.reset(cfg.seed)
        total = 0.0
        success = False
        steps = 0
        for _ in range(cap):
            a = act(obs, ep)
            res = env.step(a)
            on_transition(obs, a, res)
            obs = res.observation
            total += res.reward
            steps += 1
            if res.done:
                success = bool(res.info.get("success"))
                break
        report.add(total, success, steps)
        if _stop_early(report, cfg):
            break
    return report


def _fit_q_batch(online, target, opt, batch, gamma: float):
    obs = np.array([b[0] for b in batch])
    acts = np.array([b[1] for b in batch])
    rewards = np.array([b[2] for b in batch])
    nxt = np.array([b[3] for b in batch])
    dones = np.array([b[4] for b in batch], dtype=np.float64)
    q_next = target.forward(nxt).max(axis=1)
    y = rewards + gamma * (1.0 - dones) * q_next
    q, cache = online.forward_cached(obs)
    taken = q[np.arange(len(batch)), acts]
    grad_q = np.zeros_like(q)
    grad_q[np.arange(len(batch)), acts] = 2.0 * (taken - y) / len(batch)
    grads, _ = online.backward(cache, grad_q)
    online.set_flat(opt.step(online.get_flat(), type(online).grads_flat(grads)))
    return float(np.mean((taken - y) ** 2))


def _dqn_family_train(env, cfg: TrainConfig, make_net):
    rng = np.random.default_rng(cfg.seed)
    online = make_net(rng)
    target = online.copy()
    opt = Adam(online.get_flat().size, lr=cfg.lr)
    buffer = ReplayBuffer(cfg.buffer_capacity)
    step_count = 0

    def act(obs, ep):
        if rng.random() < cfg.epsilon_at(ep):
            return int(rng.integers(env.n_actions))
        return int(np.argmax(online.forward(obs)))

    def on_transition(obs, a, res):
        nonlocal step_count
        buffer.push((obs, a, res.reward, res.observation, res.done))
        step_count += 1
        if len(buffer) >= max(cfg.batch_size, cfg.warmup) and step_count % cfg.train_every == 0:
            _fit_q_batch(online, target, opt, buffer.sample(cfg.batch_size, rng), cfg.gamma)
        if step_count % cfg.target_sync == 0:
            target.set_flat(online.get_flat())

    report = _episode_loop(env, cfg, act, on_transition)
    return online, report


def dqn_train(env, cfg: TrainConfig) -> tuple[Mlp, TrainReport]:
    sizes = [env.observation_dim, *cfg.hidden, env.n_actions]
    return _dqn_family_train(env, cfg, lambda rng: Mlp(sizes, rng))


def dueling_dqn_train(env, cfg: TrainConfig) -> tuple[DuelingMlp, TrainReport]:
    return _dqn_family_train(
        env, cfg, lambda rng: DuelingMlp(env.observation_dim, list(cfg.hidden), env.n_actions, rng)
    )


# ------------------------------------------------------------------ actor-critic

def softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def actor_critic_train(env, cfg: TrainConfig) -> tuple[Mlp, Mlp, TrainReport]:
    """One-step advantage actor-critic with a softmax policy head."""
    rng = np.random.default_rng(cfg.seed)
    policy = Mlp([env.observation_dim, *cfg.hidden, env.n_actions], rng)
    value = Mlp([env.observation_dim, *cfg.hidden, 1], rng)
    p_opt = Adam(policy.get_flat().size, lr=cfg.lr)
    v_opt = Adam(value.get_flat().size, lr=cfg.lr)

    def act(obs, ep):
        probs = softmax(policy.forward(obs))
        return int(rng.choice(env.n_actions, p=probs))

    def on_transition(obs, a, res):
        v_s = float(value.forward(obs)[0])
        v_next = 0.0 if res.done else float(value.forward(res.observation)[0])
        delta = res.reward + cfg.gamma * v_next - v_s

        _, v_cache = value.forward_cached(obs)
        v_grads, _ = value.backward(v_cache, np.array([[2.0 * (v_s - (res.reward + cfg.gamma * v_next))]]))
        value.set_flat(v_opt.step(value.get_flat(), Mlp.grads_flat(v_grads)))

        logits, p_cache = policy.forward_cached(np.atleast_2d(obs))
        probs = softmax(logits)[0]
        onehot = np.zeros(env.n_actions)
        onehot[a] = 1.0
        entropy = -np.sum(probs * np.log(probs + 1e-12))
        d_entropy = -probs * (np.log(probs + 1e-12) + entropy)
        ascent = delta * (onehot - probs) + cfg.entropy_weight * d_entropy
        p_grads, _ = policy.backward(p_cache, -ascent[None, :])
        policy.set_flat(p_opt.step(policy.get_flat(), Mlp.grads_flat(p_grads)))

    report = _episode_loop(env, cfg, act, on_transition)
    return policy, value, report


# ------------------------------------------------------------------ DDPG

def _squash(raw: np.ndarray, bounds) -> np.ndarray:
    scale = np.array([hi for _, hi in bounds])
    return np.tanh(raw) * scale


def ddpg_train(env, cfg: TrainConfig) -> tuple[Mlp, Mlp, TrainReport]:
    """Deterministic actor with tanh-squashed output; critic Q(s, a)."""
    rng = np.random.default_rng(cfg.seed)
    bounds = env.action_bounds
    a_dim = len(bounds)
    scale = np.array([hi for _, hi in bounds])
    actor = Mlp([env.observation_dim, *cfg.hidden, a_dim], rng)
    critic = Mlp([env.observation_dim + a_dim, *cfg.hidden, 1], rng)
    actor_t = actor.copy()
    critic_t = critic.copy()
    a_opt = Adam(actor.get_flat().size, lr=cfg.lr)
    c_opt = Adam(critic.get_flat().size, lr=cfg.lr)
    buffer = ReplayBuffer(cfg.buffer_capacity)

    def act(obs, ep):
        a = _squash(actor.forward(obs), bounds)
        noise = rng.normal(0.0, cfg.noise_sigma, size=a_dim) * scale
        return np.clip(a + noise, -scale, scale)

    step_count = 0

    def on_transition(obs, a, res):
        nonlocal step_count
        buffer.push((obs, np.asarray(a), res.reward, res.observation, res.done))
        step_count += 1
        if len(buffer) < max(cfg.batch_size, cfg.warmup) or step_count % cfg.train_every != 0:
            return
        batch = buffer.sample(cfg.batch_size, rng)
        obs_b = np.array([b[0] for b in batch])
        act_b = np.array([b[1] for b in batch])
        rew_b = np.array([b[2] for b in batch])
        nxt_b = np.array([b[3] for b in batch])
        done_b = np.array([b[4] for b in batch], dtype=np.float64)

        a_next = _squash(actor_t.forward(nxt_b), bounds)
        q_next = critic_t.forward(np.concatenate([nxt_b, a_next], axis=1))[:, 0]
        y = rew_b + cfg.gamma * (1.0 - done_b) * q_next

        x = np.concatenate([obs_b, act_b], axis=1)
        q, cache = critic.forward_cached(x)
        grad_q = (2.0 * (q[:, 0] - y) / len(batch))[:, None]
        c_grads, _ = critic.backward(cache, grad_q)
        critic.set_flat(c_opt.step(critic.get_flat(), Mlp.grads_flat(c_grads)))

        raw, a_cache = actor.forward_cached(obs_b)
        a_pi = np.tanh(raw) * scale
        x_pi = np.concatenate([obs_b, a_pi], axis=1)
        _, q_cache = critic.forward_cached(x_pi)
        ones = np.full((len(batch), 1), -1.0 / len(batch))  # maximize mean Q
        _, gx = critic.backward(q_cache, ones)
        g_action = gx[:, env.observation_dim :]
        g_raw = g_action * (1.0 - np.tanh(raw) ** 2) * scale
        a_grads, _ = actor.backward(a_cache, g_raw)
        actor.set_flat(a_opt.step(actor.get_flat(), Mlp.grads_flat(a_grads)))

        soft_update(actor_t, actor, cfg.tau)
        soft_update(critic_t, critic, cfg.tau)

    report = _episode_loop(env, cfg, act, on_transition)
    return actor, critic, report


ALGORITHMS = {
    "q": q_learning_train,
    "dqn": dqn_train,
    "dueling": dueling_dqn_train,
    "ac": actor_critic_train,
    "ddpg": ddpg_train,
}
