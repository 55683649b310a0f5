"""Reward inference from demonstrations: maximum-entropy IRL and PolicyWalk.

Both operate on explicit GridMDPs with state rewards.  The exact planner
treats episodes as ending at terminals (reward collected on entry, no tail
value); the soft passes use the visited-state convention with trajectories
padded at their absorbing state so empirical and expected feature counts
are comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mdp import GridMDP, Trajectory


class IrlError(ValueError):
    pass


# ------------------------------------------------------------ demonstrations

@dataclass
class Demonstrations:
    trajectories: list[Trajectory]

    def __post_init__(self):
        if not self.trajectories:
            raise IrlError("need at least one demonstration")

    def validate(self, mdp: GridMDP) -> None:
        for t in self.trajectories:
            for s, a in t.steps():
                if not (0 <= s < mdp.n_states and 0 <= a < mdp.n_actions):
                    raise IrlError(f"demonstration step ({s},{a}) outside the MDP")

    def state_actions(self) -> list[tuple[int, int]]:
        out = []
        for t in self.trajectories:
            out.extend(t.steps())
        return out

    def visited_states(self) -> set[int]:
        seen = set()
        for t in self.trajectories:
            seen.update(t.states)
        return seen

    def start_distribution(self, n_states: int) -> np.ndarray:
        p = np.zeros(n_states)
        for t in self.trajectories:
            if t.states:
                p[t.states[0]] += 1.0
        total = p.sum()
        if total == 0:
            raise IrlError("demonstrations contain no states")
        return p / total

    def feature_expectations(
        self, mdp: GridMDP, horizon: int, discount: float = 1.0, pad: bool = True
    ) -> np.ndarray:
        """Average (discounted) feature sum; absorbing tails padded to the horizon."""
        mu = np.zeros(mdp.n_features)
        for t in self.trajectories:
            states = list(t.states)
            if not states:
                continue
            final = int(mdp.transitions[states[-1], t.actions[-1]]) if t.actions else states[-1]
            if pad:
                states = states + [final] * max(0, horizon - len(states))
            states = states[:horizon]
            for i, s in enumerate(states):
                mu += (discount**i) * mdp.features[s]
        return mu / len(self.trajectories)


# ------------------------------------------------------------ linear rewards

@dataclass
class LinearReward:
    theta: np.ndarray

    def on(self, mdp: GridMDP) -> np.ndarray:
        return mdp.features @ self.theta

    def to_dict(self, mdp: GridMDP | None = None) -> dict:
        d = {"theta": np.asarray(self.theta).tolist()}
        if mdp is not None:
            d["state_rewards"] = self.on(mdp).tolist()
        return d


# ------------------------------------------------------------ soft planning

def soft_value_iteration(
    mdp: GridMDP, reward: np.ndarray | None = None, horizon: int = 50
) -> tuple[np.ndarray, np.ndarray]:
    """Finite-horizon log-sum-exp backups; returns (V, policy [S, A])."""
    if horizon < 1:
        raise IrlError("horizon must be >= 1")
    r = mdp.reward if reward is None else np.asarray(reward, dtype=np.float64)
    T = mdp.transitions
    V = np.zeros(mdp.n_states)
    Q = np.zeros_like(T, dtype=np.float64)
    for _ in range(horizon):
        Q = r[:, None] + mdp.gamma * V[T]
        m = Q.max(axis=1, keepdims=True)
        V = (m + np.log(np.exp(Q - m).sum(axis=1, keepdims=True)))[:, 0]
    policy = np.exp(Q - V[:, None])
    policy /= policy.sum(axis=1, keepdims=True)
    return V, policy


def expected_visitation(
    mdp: GridMDP, policy: np.ndarray, start: np.ndarray, horizon: int
) -> np.ndarray:
    """Accumulated state-visitation mass over `horizon` steps (sums to horizon)."""
    T = mdp.transitions
    n = mdp.n_states
    flat_targets = T.ravel()
    d_t = np.asarray(start, dtype=np.float64).copy()
    total = d_t.copy()
    for _ in range(horizon - 1):
        flow = (d_t[:, None] * policy).ravel()
        d_t = np.bincount(flat_targets, weights=flow, minlength=n)
        total += d_t
    return total


def _default_horizon(mdp: GridMDP) -> int:
    if mdp.cells:
        rows = max(r for r, _ in mdp.cells) - min(r for r, _ in mdp.cells)
        cols = max(c for _, c in mdp.cells) - min(c for _, c in mdp.cells)
        return max(2, 2 * (rows + cols))
    return max(2, 2 * mdp.n_states)


# ------------------------------------------------------------ MaxEnt IRL

@dataclass
class MaxEntConfig:
    iterations: int = 200
    lr: float = 0.1
    lr_decay: float = 0.99
    tolerance: float = 1e-4
    horizon: int | None = None
    theta_bound: float = 50.0
    l2: float = 0.0  # shrinks rewards without demonstration support toward zero


@dataclass
class MaxEntDiagnostics:
    grad_norms: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    diverged: bool = False


def maxent_irl(
    mdp: GridMDP, demos: Demonstrations, config: MaxEntConfig | None = None
) -> tuple[LinearReward, MaxEntDiagnostics]:
    """Gradient ascent matching demonstration feature counts.

    The gradient is (empirical counts) - (expected counts under the current
    soft-optimal policy), computed by backward soft value iteration and a
    forward visitation pass.
    """
    cfg = config or MaxEntConfig()
    demos.validate(mdp)
    horizon = cfg.horizon or _default_horizon(mdp)
    mu_hat = demos.feature_expectations(mdp, horizon)
    start = demos.start_distribution(mdp.n_states)
    theta = np.zeros(mdp.n_features)
    diag = MaxEntDiagnostics()
    lr = cfg.lr
    for it in range(cfg.iterations):
        reward = mdp.features @ theta
        _, policy = soft_value_iteration(mdp, reward, horizon)
        visits = expected_visitation(mdp, policy, start, horizon)
        grad = mu_hat - mdp.features.T @ visits - cfg.l2 * theta
        norm = float(np.linalg.norm(grad))
        diag.grad_norms.append(norm)
        diag.iterations = it + 1
        if norm <= cfg.tolerance:
            diag.converged = True
            break
        theta = theta + lr * grad
        lr *= cfg.lr_decay
        if float(np.linalg.norm(theta)) > cfg.theta_bound:
            diag.diverged = True
            break
    return LinearReward(theta), diag


# ------------------------------------------------------------ exact planning

def value_iteration(
    mdp: GridMDP, reward: np.ndarray | None = None, tol: float = 1e-9
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Optimal values via policy iteration with exact evaluation.

    Episodic convention: acting from s yields reward(s') and, unless s' is
    terminal, the discounted continuation; terminal states carry value 0.
    Returns (V, Q, greedy policy with ties to the lowest action index).
    """
    r = mdp.reward if reward is None else np.asarray(reward, dtype=np.float64)
    T = mdp.transitions
    n, m = T.shape
    terminal = np.zeros(n, dtype=bool)
    for t in mdp.terminals:
        terminal[t] = True
    r_enter = r[T]  # [S, A]
    cont = mdp.gamma * (~terminal[T])  # discount per transition, 0 into terminals

    V = np.zeros(n)
    policy = np.argmax(r_enter + cont * V[T], axis=1)
    for _ in range(n + 2):
        # evaluate exactly: V = r_pi + cont_pi * V[T_pi] on non-terminal rows
        idx = np.arange(n)
        t_pi = T[idx, policy]
        A = np.eye(n)
        A[idx, t_pi] -= np.where(terminal, 0.0, cont[idx, policy])
        b = np.where(terminal, 0.0, r_enter[idx, policy])
        V = np.linalg.solve(A, b)
        V[terminal] = 0.0
        Q = r_enter + cont * V[T]
        improved = np.argmax(Q, axis=1)
        if (improved == policy).all():
            break
        policy = improved
    Q = r_enter + cont * V[T]
    V_check = Q.max(axis=1)
    V_check[terminal] = 0.0
    residual = float(np.max(np.abs(V - V_check)))
    if residual > tol:
        # fall back to plain iteration to the requested tolerance
        while residual > tol:
            V = np.where(terminal, 0.0, Q.max(axis=1))
            Q_new = r_enter + cont * V[T]
            residual = float(np.max(np.abs(Q_new - Q)))
            Q = Q_new
    policy = np.argmax(Q, axis=1)
    V = np.where(terminal, 0.0, Q.max(axis=1))
    return V, Q, policy


def policy_evaluation(mdp: GridMDP, policy: np.ndarray, reward: np.ndarray) -> np.ndarray:
    """Exact value of a deterministic policy under the given reward."""
    r = np.asarray(reward, dtype=np.float64)
    T = mdp.transitions
    n = mdp.n_states
    terminal = np.zeros(n, dtype=bool)
    for t in mdp.terminals:
        terminal[t] = True
    idx = np.arange(n)
    t_pi = T[idx, policy]
    cont = mdp.gamma * (~terminal[t_pi])
    A = np.eye(n)
    A[idx, t_pi] -= np.where(terminal, 0.0, cont)
    b = np.where(terminal, 0.0, r[t_pi])
    V = np.linalg.solve(A, b)
    V[terminal] = 0.0
    return V


def evd(mdp: GridMDP, true_reward: np.ndarray, learned_reward: np.ndarray) -> float:
    """Expected value difference at the start state, >= 0 up to solver noise."""
    _, _, pi_true = value_iteration(mdp, true_reward)
    _, _, pi_learned = value_iteration(mdp, learned_reward)
    v_true = policy_evaluation(mdp, pi_true, true_reward)
    v_learned = policy_evaluation(mdp, pi_learned, true_reward)
    return float(v_true[mdp.start] - v_learned[mdp.start])


# ------------------------------------------------------------ Bayesian IRL

@dataclass
class PolicyWalkConfig:
    samples: int = 5000
    burn_in: int = 1000
    delta: float = 0.05
    alpha: float = 10.0
    reward_min: float = -1.0
    reward_max: float = 1.0
    seed: int = 0


@dataclass
class PosteriorSamples:
    samples: list[np.ndarray]
    log_likelihoods: list[float]
    burn_in: int
    acceptance_rate: float

    def mean(self) -> np.ndarray:
        kept = self.samples[self.burn_in :]
        if not kept:
            raise IrlError("no samples after burn-in")
        return np.mean(kept, axis=0)


def bayesian_irl_policywalk(
    mdp: GridMDP, demos: Demonstrations, config: PolicyWalkConfig | None = None
) -> tuple[PosteriorSamples, LinearReward]:
    """Metropolis-Hastings over per-state rewards on a delta-grid.

    Proposals move one coordinate by +/-delta; the likelihood of a reward
    vector is exp(alpha * sum of optimal Q over demonstrated state-actions)
    under a uniform prior on the box.  Moves leaving the box are rejected.
    """
    cfg = config or PolicyWalkConfig()
    demos.validate(mdp)
    rng = np.random.default_rng(cfg.seed)
    pairs = demos.state_actions()
    if not pairs:
        raise IrlError("demonstrations contain no state-action pairs")
    s_idx = np.array([s for s, _ in pairs])
    a_idx = np.array([a for _, a in pairs])
    n = mdp.n_states

    def loglik(reward: np.ndarray) -> float:
        # Boltzmann choice likelihood: the per-state normalizer is what makes
        # a demonstrated action evidence about reward differences, rather
        # than about the overall reward level.
        if cfg.alpha == 0.0:
            return 0.0
        _, Q, _ = value_iteration(mdp, reward)
        z = cfg.alpha * Q
        m = z.max(axis=1)
        lse = m + np.log(np.exp(z - m[:, None]).sum(axis=1))
        value = float((z[s_idx, a_idx] - lse[s_idx]).sum())
        if not np.isfinite(value):
            raise IrlError("non-finite likelihood")
        return value

    reward = np.zeros(n)
    ll = loglik(reward)
    samples = [reward.copy()]
    lls = [ll]
    accepted = 0
    for _ in range(cfg.samples):
        k = int(rng.integers(n))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        proposal = reward.copy()
        proposal[k] += sign * cfg.delta
        if cfg.reward_min - 1e-12 <= proposal[k] <= cfg.reward_max + 1e-12:
            ll_new = loglik(proposal)
            if np.log(rng.random()) < ll_new - ll:
                reward, ll = proposal, ll_new
                accepted += 1
        samples.append(reward.copy())
        lls.append(ll)
    rate = accepted / cfg.samples if cfg.samples else 0.0
    posterior = PosteriorSamples(samples, lls, cfg.burn_in, rate)
    mean = posterior.mean() if cfg.samples > cfg.burn_in else reward.copy()
    # per-state rewards are linear in one-hot state features
    return posterior, LinearReward(mean)
