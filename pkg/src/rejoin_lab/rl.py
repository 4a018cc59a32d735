"""Policy-gradient training with a clipped surrogate objective.

Experience is collected per step (state vector, mask, action, old log-prob,
old value); episodes earn a single terminal reward, so with discount 1 every
step's return equals that reward and its advantage is the return minus the
stored value estimate. Updates run several epochs of minibatch Adam steps on
the clipped-ratio surrogate plus value and entropy terms, with advantages
normalized per batch.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import nn
from .baselines import DP_GUARD_MAX_RELATIONS, dp_optimal, greedy
from .catalog import Catalog
from .env import (
    EnvConfig,
    action_mask,
    apply_action,
    featurize,
    initial_state,
    is_terminal,
    reward,
    slot_to_action,
    state_vector_length,
)
from .jointree import JoinTree, cost
from .query import JoinQuery

RATIO_VS_DP_MAX_RELATIONS = 12


class TrainingError(RuntimeError):
    """Training aborted (non-finite loss or gradients)."""


@dataclass
class Step:
    state_vector: np.ndarray
    mask: np.ndarray
    action: int
    log_prob_old: float
    value_old: float


@dataclass
class Trajectory:
    steps: list[Step]
    terminal_reward: float
    query_id: str
    final_tree: JoinTree


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    The entropy bonus anneals linearly from entropy_coef to entropy_coef_final
    across the run's updates: exploration stays alive while plans are still
    being discovered, then the policy sharpens. Set both equal for a constant
    coefficient.
    """

    total_episodes: int = 5000
    clip_eps: float = 0.2
    lr: float = 3e-4
    epochs_per_update: int = 8
    episodes_per_batch: int = 32
    entropy_coef: float = 0.03
    entropy_coef_final: float = 0.0
    value_coef: float = 0.5
    discount: float = 1.0
    minibatch_size: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 < self.clip_eps < 1.0):
            raise ValueError(f"clip_eps must be in (0, 1), got {self.clip_eps}")
        if self.lr <= 0.0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.discount != 1.0:
            raise ValueError("discount is fixed at 1.0: episodes are short with terminal-only reward")
        if self.total_episodes < 0:
            raise ValueError("total_episodes must be >= 0")
        if self.epochs_per_update < 1 or self.episodes_per_batch < 1 or self.minibatch_size < 1:
            raise ValueError("epochs_per_update, episodes_per_batch, minibatch_size must be >= 1")
        if self.entropy_coef < 0.0 or self.entropy_coef_final < 0.0 or self.value_coef < 0.0:
            raise ValueError("entropy coefficients and value_coef must be non-negative")


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    query_id: str
    n_relations: int
    reward: float
    plan_cost: float
    ratio_greedy: float
    ratio_dp: float | None

    def to_json_obj(self) -> dict:
        return {
            "kind": "episode",
            "episode": self.episode,
            "query_id": self.query_id,
            "q": self.n_relations,
            "reward": self.reward,
            "plan_cost": self.plan_cost,
            "ratio_greedy": self.ratio_greedy,
            "ratio_dp": self.ratio_dp,
        }


@dataclass(frozen=True)
class UpdateRecord:
    update: int
    after_episode: int
    n_steps: int
    surrogate: float
    value_loss: float
    entropy: float
    wall_time_ms: float

    def to_json_obj(self, include_timing: bool = False) -> dict:
        obj = {
            "kind": "update",
            "update": self.update,
            "after_episode": self.after_episode,
            "n_steps": self.n_steps,
            "surrogate": self.surrogate,
            "value_loss": self.value_loss,
            "entropy": self.entropy,
        }
        if include_timing:
            obj["wall_time_ms"] = self.wall_time_ms
        return obj


@dataclass
class TrainMetrics:
    episodes: list[EpisodeRecord] = field(default_factory=list)
    updates: list[UpdateRecord] = field(default_factory=list)


def collect_episode(
    catalog: Catalog,
    query: JoinQuery,
    net: nn.DenseNet,
    env_config: EnvConfig,
    rng: np.random.Generator,
) -> Trajectory:
    """Roll out one episode, sampling actions from the current policy."""
    state = initial_state(query, env_config)
    steps: list[Step] = []
    while not is_terminal(state):
        vec = featurize(state, catalog, env_config).flatten()
        logits, value = nn.forward(net, vec)
        mask = action_mask(state, env_config.n_max)
        dist = nn.masked_softmax(logits, mask)
        slot = nn.sample(dist, rng)
        steps.append(
            Step(
                state_vector=vec,
                mask=mask,
                action=slot,
                log_prob_old=nn.log_prob(dist, slot),
                value_old=value,
            )
        )
        state = apply_action(state, slot_to_action(slot, env_config.n_max))
    return Trajectory(
        steps=steps,
        terminal_reward=reward(state, catalog, env_config),
        query_id=query.id,
        final_tree=state.forest[0],
    )


def returns_and_advantages(traj: Trajectory) -> list[tuple[float, float]]:
    """Per-step (return, advantage). With terminal-only reward and no
    discounting, every step's return is the terminal reward."""
    if not traj.steps:
        raise ValueError("trajectory has no steps")
    return [(traj.terminal_reward, traj.terminal_reward - s.value_old) for s in traj.steps]


def ppo_loss_and_grads(
    net: nn.DenseNet,
    states: np.ndarray,
    masks: np.ndarray,
    actions: np.ndarray,
    log_probs_old: np.ndarray,
    returns: np.ndarray,
    advantages: np.ndarray,
    config: TrainConfig,
):
    """Loss and analytic parameter gradients on one minibatch.

    loss = -mean(min(ratio * adv, clip(ratio) * adv))
           + value_coef * mean((value - return)^2)
           - entropy_coef * mean(entropy)
    """
    batch = states.shape[0]
    logits, values, activations = nn.forward_batch(net, states)
    probs = nn.masked_softmax_batch(logits, masks)
    rows = np.arange(batch)
    p_action = probs[rows, actions]
    log_p_action = np.log(p_action)
    ratio = np.exp(log_p_action - log_probs_old)

    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - config.clip_eps, 1.0 + config.clip_eps) * advantages
    take_unclipped = unclipped <= clipped
    surrogate = np.where(take_unclipped, unclipped, clipped).mean()

    value_err = values - returns
    value_loss = float((value_err**2).mean())

    with np.errstate(divide="ignore", invalid="ignore"):
        log_probs = np.where(probs > 0.0, np.log(probs), 0.0)
    entropies = -(probs * log_probs).sum(axis=1)
    mean_entropy = float(entropies.mean())

    loss = float(-surrogate + config.value_coef * value_loss - config.entropy_coef * mean_entropy)
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss ({loss}); aborting update")

    # d(-surrogate)/d(log p_a): the clipped branch is constant in the policy
    d_log_p = np.where(take_unclipped, ratio * advantages, 0.0) * (-1.0 / batch)
    # through softmax: d log p_a / d z = e_a - p
    d_logits = -d_log_p[:, None] * probs
    d_logits[rows, actions] += d_log_p
    # entropy bonus enters the loss as -entropy_coef * mean(H); dH/dz = -p * (log p + H)
    d_entropy_logits = -probs * (log_probs + entropies[:, None])
    d_logits -= (config.entropy_coef / batch) * d_entropy_logits

    d_values = config.value_coef * 2.0 * value_err / batch

    grads = nn.backward_batch(net, activations, d_logits, d_values)
    stats = {"surrogate": float(surrogate), "value_loss": value_loss, "entropy": mean_entropy}
    return loss, grads, stats


def _stack_batch(batch: list[Trajectory]):
    steps = [s for traj in batch for s in traj.steps]
    states = np.stack([s.state_vector for s in steps])
    masks = np.stack([s.mask for s in steps])
    actions = np.array([s.action for s in steps], dtype=np.intp)
    log_probs_old = np.array([s.log_prob_old for s in steps])
    rets = []
    advs = []
    for traj in batch:
        for ret, adv in returns_and_advantages(traj):
            rets.append(ret)
            advs.append(adv)
    return states, masks, actions, log_probs_old, np.array(rets), np.array(advs)


def ppo_update(
    net: nn.DenseNet,
    batch: list[Trajectory],
    config: TrainConfig,
    opt_state: nn.AdamState,
    rng: np.random.Generator,
) -> dict:
    """Run epochs_per_update minibatched passes over the batch's steps."""
    if not batch:
        raise ValueError("cannot update from an empty batch")
    started = time.perf_counter()
    states, masks, actions, log_probs_old, returns, advantages = _stack_batch(batch)
    advantages = advantages - advantages.mean()
    std = advantages.std()
    advantages = advantages / (std + 1e-8)

    n = states.shape[0]
    stat_sums = {"surrogate": 0.0, "value_loss": 0.0, "entropy": 0.0}
    n_minibatches = 0
    for _ in range(config.epochs_per_update):
        order = rng.permutation(n)
        for start in range(0, n, config.minibatch_size):
            idx = order[start : start + config.minibatch_size]
            _, grads, stats = ppo_loss_and_grads(
                net,
                states[idx],
                masks[idx],
                actions[idx],
                log_probs_old[idx],
                returns[idx],
                advantages[idx],
                config,
            )
            nn.adam_step(net, grads, opt_state, config.lr)
            for key in stat_sums:
                stat_sums[key] += stats[key]
            n_minibatches += 1
    for key in stat_sums:
        stat_sums[key] /= n_minibatches
    stat_sums["n_steps"] = n
    stat_sums["wall_time_ms"] = (time.perf_counter() - started) * 1e3
    return stat_sums


def train(
    catalog: Catalog,
    workload: list[JoinQuery],
    env_config: EnvConfig,
    train_config: TrainConfig,
    sink: Callable[[dict], None] | None = None,
) -> tuple[nn.DenseNet, TrainMetrics, nn.AdamState]:
    """Train a policy over the workload, one random query per episode.

    Fully deterministic for fixed inputs and seed. `sink`, when given, receives
    every episode/update record as a JSON-ready dict as soon as it is produced.
    """
    if not workload:
        raise ValueError("workload is empty")
    for query in workload:
        if query.n_relations > env_config.n_max:
            raise ValueError(
                f"query {query.id!r} joins {query.n_relations} relations, exceeding n_max={env_config.n_max}"
            )
    seeds = np.random.SeedSequence(train_config.seed).spawn(4)
    net_rng, order_rng, episode_rng, update_rng = (np.random.default_rng(s) for s in seeds)
    net = nn.DenseNet(
        input_dim=state_vector_length(catalog, env_config),
        n_actions=env_config.n_max * env_config.n_max,
        seed=net_rng,
    )
    opt_state = nn.init_adam(net)
    metrics = TrainMetrics()

    greedy_costs: dict[str, float] = {}
    dp_costs: dict[str, float | None] = {}

    def baseline_costs(query: JoinQuery) -> tuple[float, float | None]:
        if query.id not in greedy_costs:
            greedy_costs[query.id] = greedy(query, catalog).total_cost
            if query.n_relations <= min(RATIO_VS_DP_MAX_RELATIONS, DP_GUARD_MAX_RELATIONS):
                dp_costs[query.id] = dp_optimal(query, catalog).total_cost
            else:
                dp_costs[query.id] = None
        return greedy_costs[query.id], dp_costs[query.id]

    def emit(record) -> None:
        if sink is not None:
            sink(record.to_json_obj())

    buffer: list[Trajectory] = []
    n_updates = 0
    planned_updates = max(-(-train_config.total_episodes // train_config.episodes_per_batch), 1)

    def flush(after_episode: int) -> None:
        nonlocal n_updates
        frac = min(n_updates / max(planned_updates - 1, 1), 1.0)
        coef = train_config.entropy_coef + frac * (
            train_config.entropy_coef_final - train_config.entropy_coef
        )
        stats = ppo_update(
            net, buffer, replace(train_config, entropy_coef=coef), opt_state, update_rng
        )
        n_updates += 1
        record = UpdateRecord(
            update=n_updates,
            after_episode=after_episode,
            n_steps=stats["n_steps"],
            surrogate=stats["surrogate"],
            value_loss=stats["value_loss"],
            entropy=stats["entropy"],
            wall_time_ms=stats["wall_time_ms"],
        )
        metrics.updates.append(record)
        emit(record)
        buffer.clear()

    for episode in range(1, train_config.total_episodes + 1):
        query = workload[int(order_rng.integers(len(workload)))]
        traj = collect_episode(catalog, query, net, env_config, episode_rng)
        plan_cost = cost(traj.final_tree, query, catalog).total_cost
        greedy_cost, dp_cost = baseline_costs(query)
        record = EpisodeRecord(
            episode=episode,
            query_id=query.id,
            n_relations=query.n_relations,
            reward=traj.terminal_reward,
            plan_cost=plan_cost,
            ratio_greedy=plan_cost / greedy_cost,
            ratio_dp=plan_cost / dp_cost if dp_cost is not None else None,
        )
        metrics.episodes.append(record)
        emit(record)
        buffer.append(traj)
        if len(buffer) == train_config.episodes_per_batch:
            flush(episode)
    if buffer:
        flush(train_config.total_episodes)
    return net, metrics, opt_state
