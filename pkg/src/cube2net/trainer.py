"""Policy training loop for query-driven cell selection.

One trajectory adds cells one at a time: the state is the sum of the
embeddings of the cells selected so far (zero at the start), the sampled
continuous action is snapped to the nearest not-yet-selected cell, and the
reward is the change in selection quality, so rewards telescope to the
final quality.  Training alternates batched rollouts with clipped
surrogate updates on shuffled minibatches, and the best selection ever
sampled is tracked so a lucky trajectory is never lost.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import AbstractSet, Optional, Sequence

import numpy as np

from .cube import DataCube
from .embedding import CellEmbeddingTable, nearest_cell
from .errors import ConfigError, NumericError
from .policy import (
    OptimizerState,
    PolicyParameters,
    adam_step,
    forward,
    gaussian_log_density,
    init_params,
    param_gradients,
    sample_action,
    zero_gradients,
)
from .relevance import EvalCounter, SelectionQuality

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Hyperparameters for training; defaults follow the reference setup."""

    trajectory_length: int = 20
    trajectories_per_iteration: int = 40
    iterations: int = 40
    discount: float = 0.99
    clip_epsilon: float = 0.2
    sgd_epochs: int = 4
    minibatch_size: int = 64
    learning_rate: float = 3e-4
    hidden_size: int = 256
    value_coef: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.trajectory_length < 1:
            raise ConfigError("trajectory_length must be >= 1")
        if self.trajectories_per_iteration < 1 or self.iterations < 1:
            raise ConfigError("trajectories_per_iteration and iterations must be >= 1")
        if not 0.0 <= self.discount <= 1.0:
            raise ConfigError("discount must be in [0, 1]")
        if self.clip_epsilon <= 0.0:
            raise ConfigError("clip_epsilon must be positive")
        if self.sgd_epochs < 1 or self.minibatch_size < 1:
            raise ConfigError("sgd_epochs and minibatch_size must be >= 1")
        if self.learning_rate <= 0.0:
            raise ConfigError("learning_rate must be positive")
        if self.hidden_size < 1:
            raise ConfigError("hidden_size must be >= 1")
        if self.value_coef < 0.0:
            raise ConfigError("value_coef must be >= 0")


@dataclass
class Transition:
    """One step: the state seen, the raw action, its snap, and the outcome."""

    state_vec: np.ndarray
    action_vec: np.ndarray
    cell: int
    reward: float
    logp_old: float


@dataclass
class Trajectory:
    """Ordered transitions plus the terminal state and final quality."""

    transitions: list[Transition]
    final_state_vec: np.ndarray
    q_final: float

    def selection(self) -> tuple[int, ...]:
        return tuple(sorted(t.cell for t in self.transitions))


@dataclass
class TrainReport:
    """Per-iteration quality statistics and the best selection ever sampled.

    ``wall_time_s`` is measured, so it is excluded from ``to_json`` to keep
    the serialized report identical across reruns with the same seed.
    """

    mean_q: list[float] = field(default_factory=list)
    max_q: list[float] = field(default_factory=list)
    best_q: float = 0.0
    best_selection: tuple[int, ...] = ()
    eval_count: int = 0
    wall_time_s: float = 0.0

    def to_json(self) -> dict:
        return {
            "iterations": [
                {"iteration": i + 1, "mean_q": m, "max_q": x}
                for i, (m, x) in enumerate(zip(self.mean_q, self.max_q))
            ],
            "best_q": self.best_q,
            "best_selection": list(self.best_selection),
            "eval_count": self.eval_count,
        }


def rollout(
    params: PolicyParameters,
    cube: DataCube,
    embeddings: CellEmbeddingTable,
    query: AbstractSet[str],
    length: int,
    rng: np.random.Generator,
    counter: Optional[EvalCounter] = None,
) -> Trajectory:
    """Sample one trajectory of at most ``length`` distinct cells.

    Exactly one quality evaluation is charged per step; the empty-selection
    quality is 0 by definition and costs nothing.  The rollout stops early
    only when every cell is already selected.
    """
    quality = SelectionQuality(cube, query, counter=counter)
    sigma = params.sigma
    state = np.zeros(embeddings.kappa)
    selected: list[int] = []
    transitions: list[Transition] = []
    q_prev = 0.0
    for _ in range(min(length, len(embeddings))):
        mu, _, _ = forward(params, state)
        action = sample_action(mu, sigma, rng)
        cell = nearest_cell(action, embeddings, excluded=selected)
        logp, _, _ = gaussian_log_density(action, mu, sigma)
        q_next = quality(selected + [cell])
        transitions.append(
            Transition(
                state_vec=state.copy(),
                action_vec=action,
                cell=cell,
                reward=q_next - q_prev,
                logp_old=logp,
            )
        )
        state = state + embeddings[cell]
        selected.append(cell)
        q_prev = q_next
    return Trajectory(transitions=transitions, final_state_vec=state, q_final=q_prev)


def compute_advantages(
    traj: Trajectory, params: PolicyParameters, discount: float
) -> tuple[np.ndarray, np.ndarray]:
    """Advantages and value targets over one trajectory.

    The return bootstraps from the critic at the terminal state:
    G_t = r_t + discount * G_{t+1} with G_T = value(terminal state), so the
    advantage is G_t - value(S_t) and the value target is G_t itself.
    """
    n = len(traj.transitions)
    values = np.array([forward(params, t.state_vec)[1] for t in traj.transitions])
    g = forward(params, traj.final_state_vec)[1]
    targets = np.empty(n)
    for t in range(n - 1, -1, -1):
        g = traj.transitions[t].reward + discount * g
        targets[t] = g
    return targets - values, targets


def _surrogate_pieces(
    ratio: float, advantage: float, clip_epsilon: float
) -> tuple[float, float]:
    """Per-sample surrogate value and its derivative w.r.t. the ratio."""
    clipped_ratio = min(max(ratio, 1.0 - clip_epsilon), 1.0 + clip_epsilon)
    unclipped = ratio * advantage
    clipped = clipped_ratio * advantage
    if unclipped <= clipped:
        return unclipped, advantage
    if 1.0 - clip_epsilon < ratio < 1.0 + clip_epsilon:
        return clipped, advantage
    return clipped, 0.0


def clipped_surrogate(
    params: PolicyParameters,
    states: Sequence[np.ndarray],
    actions: Sequence[np.ndarray],
    logp_old: np.ndarray,
    advantages: np.ndarray,
    clip_epsilon: float,
) -> float:
    """Mean clipped surrogate loss (the negated policy objective)."""
    sigma = params.sigma
    total = 0.0
    for state, action, lp_old, adv in zip(states, actions, logp_old, advantages):
        mu, _, _ = forward(params, state)
        logp, _, _ = gaussian_log_density(action, mu, sigma)
        surr, _ = _surrogate_pieces(math.exp(logp - lp_old), adv, clip_epsilon)
        total -= surr
    return total / len(states)


def value_loss(
    params: PolicyParameters, states: Sequence[np.ndarray], targets: np.ndarray
) -> float:
    """Mean squared error of the critic against fixed targets."""
    errs = [forward(params, s)[1] - t for s, t in zip(states, targets)]
    return float(np.mean(np.square(errs)))


def ppo_iteration(
    params: PolicyParameters,
    opt_state: OptimizerState,
    transitions: Sequence[Transition],
    advantages: np.ndarray,
    value_targets: np.ndarray,
    config: TrainConfig,
    rng: Optional[np.random.Generator] = None,
) -> tuple[PolicyParameters, OptimizerState]:
    """Several epochs of minibatch updates on one batch of transitions.

    Advantages are normalized once per batch.  Each minibatch gets one Adam
    step on the mean of the per-sample gradients of
    -min(ratio * A, clip(ratio) * A) + value_coef * (value - target)^2.
    """
    if len(transitions) == 0:
        return params, opt_state
    if rng is None:
        rng = np.random.default_rng(config.seed)
    advantages = np.asarray(advantages, dtype=np.float64)
    value_targets = np.asarray(value_targets, dtype=np.float64)
    if not (np.all(np.isfinite(advantages)) and np.all(np.isfinite(value_targets))):
        raise NumericError("non-finite advantage or value target in batch")
    std = float(advantages.std())
    advantages = (advantages - advantages.mean()) / (std + 1e-8)

    n = len(transitions)
    for _ in range(config.sgd_epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.minibatch_size):
            batch_idx = order[start : start + config.minibatch_size]
            sigma = params.sigma
            grads = zero_gradients(params)
            loss = 0.0
            for i in batch_idx:
                tr = transitions[i]
                mu, value, cache = forward(params, tr.state_vec)
                logp, g_mu_logp, g_sigma_logp = gaussian_log_density(
                    tr.action_vec, mu, sigma
                )
                ratio = math.exp(logp - tr.logp_old)
                surr, dsurr_dratio = _surrogate_pieces(
                    ratio, float(advantages[i]), config.clip_epsilon
                )
                verr = value - float(value_targets[i])
                loss += -surr + config.value_coef * verr * verr
                # d(-surr)/d logp, then chain into mu and log sigma.
                dloss_dlogp = -dsurr_dratio * ratio
                sample = param_gradients(
                    params, cache, dloss_dlogp * g_mu_logp, 2.0 * config.value_coef * verr
                )
                sample["log_sigma"] += dloss_dlogp * g_sigma_logp * sigma
                for name in grads:
                    grads[name] += sample[name]
            scale = 1.0 / len(batch_idx)
            loss *= scale
            if not math.isfinite(loss):
                raise NumericError(
                    f"non-finite loss {loss!r} in minibatch starting at {start}"
                )
            for name in grads:
                grads[name] *= scale
            params, opt_state = adam_step(
                params, grads, opt_state, lr=config.learning_rate
            )
    return params, opt_state


def train(
    cube: DataCube,
    embeddings: CellEmbeddingTable,
    query: AbstractSet[str],
    config: TrainConfig,
    counter: Optional[EvalCounter] = None,
) -> tuple[PolicyParameters, tuple[int, ...], TrainReport]:
    """Run the full training loop and return the best selection found.

    All randomness descends from ``config.seed``: parameter init, one RNG
    stream per trajectory, and the minibatch shuffles, so reruns with the
    same seed reproduce the report exactly.
    """
    config.validate()
    if len(embeddings) == 0:
        raise ConfigError("cannot train on an empty cube")
    counter = counter if counter is not None else EvalCounter()
    start = time.perf_counter()

    params, opt_state = init_params(
        embeddings.kappa, config.hidden_size, config.seed, embeddings
    )
    root = np.random.SeedSequence(config.seed)
    rollout_seeds, shuffle_seed = root.spawn(2)
    iteration_seeds = rollout_seeds.spawn(config.iterations)
    shuffle_rng = np.random.default_rng(shuffle_seed)

    report = TrainReport(best_q=-math.inf)
    for it in range(config.iterations):
        trajectory_seeds = iteration_seeds[it].spawn(config.trajectories_per_iteration)
        trajectories = [
            rollout(
                params,
                cube,
                embeddings,
                query,
                config.trajectory_length,
                np.random.default_rng(seed),
                counter,
            )
            for seed in trajectory_seeds
        ]
        qs = [t.q_final for t in trajectories]
        for traj in trajectories:
            if traj.q_final > report.best_q:
                report.best_q = traj.q_final
                report.best_selection = traj.selection()

        transitions: list[Transition] = []
        advantages: list[np.ndarray] = []
        targets: list[np.ndarray] = []
        for traj in trajectories:
            adv, tgt = compute_advantages(traj, params, config.discount)
            transitions.extend(traj.transitions)
            advantages.append(adv)
            targets.append(tgt)
        params, opt_state = ppo_iteration(
            params,
            opt_state,
            transitions,
            np.concatenate(advantages),
            np.concatenate(targets),
            config,
            shuffle_rng,
        )
        report.mean_q.append(float(np.mean(qs)))
        report.max_q.append(float(np.max(qs)))
        logger.info(
            "iteration %d/%d mean_q=%.4f best_q=%.4f",
            it + 1,
            config.iterations,
            report.mean_q[-1],
            report.best_q,
        )

    report.eval_count = counter.count
    report.wall_time_s = time.perf_counter() - start
    return params, report.best_selection, report


def plan(
    params: PolicyParameters,
    cube: DataCube,
    embeddings: CellEmbeddingTable,
    query: AbstractSet[str],
    length: int,
    best: Optional[tuple[tuple[int, ...], float]] = None,
) -> tuple[int, ...]:
    """Deterministic selection: follow the action mean, no sampling.

    When the best (selection, quality) seen during training is supplied,
    the better of the two selections is returned, so planning can only
    improve on what training already found.
    """
    quality = SelectionQuality(cube, query)
    state = np.zeros(embeddings.kappa)
    selected: list[int] = []
    for _ in range(min(length, len(embeddings))):
        mu, _, _ = forward(params, state)
        cell = nearest_cell(mu, embeddings, excluded=selected)
        state = state + embeddings[cell]
        selected.append(cell)
    deterministic = tuple(sorted(selected))
    if best is not None and selected and best[1] > quality(deterministic):
        return tuple(sorted(best[0]))
    if not selected and best is not None:
        return tuple(sorted(best[0]))
    return deterministic
