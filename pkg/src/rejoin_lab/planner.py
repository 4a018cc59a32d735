"""Scikit-learn style facade over the trainable join-order planner.

`JoinOrderPlanner` follows the estimator conventions: hyperparameters are
plain constructor arguments echoed by `get_params`/`set_params` (so the class
works with `sklearn.clone` and grid-search style tooling), `fit` trains the
policy on a workload of queries, learned state lands in trailing-underscore
attributes, and `predict` maps queries to join trees.
"""

from __future__ import annotations

import inspect

import numpy as np

from . import nn, rl
from .bench import decode_plan
from .catalog import Catalog
from .env import EnvConfig
from .jointree import JoinTree, cost
from .query import JoinQuery
from .validation import check_is_fitted, check_query_against_catalog


class JoinOrderPlanner:
    """Learns a join-ordering policy from a workload and predicts plans.

    Parameters mirror the training configuration; see `rl.TrainConfig` and
    `env.EnvConfig` for semantics and defaults.
    """

    def __init__(
        self,
        n_max: int = 10,
        reward_mode: str = "normalized",
        total_episodes: int = 5000,
        episodes_per_batch: int = 32,
        epochs_per_update: int = 8,
        minibatch_size: int = 64,
        lr: float = 3e-4,
        clip_eps: float = 0.2,
        entropy_coef: float = 0.03,
        entropy_coef_final: float = 0.0,
        value_coef: float = 0.5,
        seed: int = 0,
    ):
        self.n_max = n_max
        self.reward_mode = reward_mode
        self.total_episodes = total_episodes
        self.episodes_per_batch = episodes_per_batch
        self.epochs_per_update = epochs_per_update
        self.minibatch_size = minibatch_size
        self.lr = lr
        self.clip_eps = clip_eps
        self.entropy_coef = entropy_coef
        self.entropy_coef_final = entropy_coef_final
        self.value_coef = value_coef
        self.seed = seed
        self.net_: nn.DenseNet | None = None
        self.metrics_: rl.TrainMetrics | None = None
        self.catalog_: Catalog | None = None

    @classmethod
    def _param_names(cls) -> list[str]:
        signature = inspect.signature(cls.__init__)
        return [name for name in signature.parameters if name != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params) -> "JoinOrderPlanner":
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise ValueError(f"invalid parameter {key!r} for {type(self).__name__}")
            setattr(self, key, value)
        return self

    def env_config(self) -> EnvConfig:
        return EnvConfig(n_max=self.n_max, reward_mode=self.reward_mode)

    def train_config(self) -> rl.TrainConfig:
        return rl.TrainConfig(
            total_episodes=self.total_episodes,
            episodes_per_batch=self.episodes_per_batch,
            epochs_per_update=self.epochs_per_update,
            minibatch_size=self.minibatch_size,
            lr=self.lr,
            clip_eps=self.clip_eps,
            entropy_coef=self.entropy_coef,
            entropy_coef_final=self.entropy_coef_final,
            value_coef=self.value_coef,
            seed=self.seed,
        )

    def fit(self, queries: list[JoinQuery], catalog: Catalog) -> "JoinOrderPlanner":
        """Train the policy on the given workload."""
        for query in queries:
            check_query_against_catalog(query, catalog)
        net, metrics, opt_state = rl.train(catalog, list(queries), self.env_config(), self.train_config())
        self.net_ = net
        self.metrics_ = metrics
        self.opt_state_ = opt_state
        self.catalog_ = catalog
        return self

    def predict(self, queries: JoinQuery | list[JoinQuery]) -> JoinTree | list[JoinTree]:
        """Greedy-decode a join tree per query (mode of the policy, no sampling)."""
        check_is_fitted(self, ("net_", "catalog_"))
        single = isinstance(queries, JoinQuery)
        batch = [queries] if single else list(queries)
        trees = []
        for query in batch:
            check_query_against_catalog(query, self.catalog_)
            tree, _ = decode_plan(self.catalog_, query, self.net_, self.env_config())
            trees.append(tree)
        return trees[0] if single else trees

    def score(self, queries: list[JoinQuery]) -> float:
        """Negated median cost ratio versus the greedy baseline (higher is better)."""
        from .baselines import greedy

        check_is_fitted(self, ("net_", "catalog_"))
        trees = self.predict(list(queries))
        ratios = [
            cost(tree, query, self.catalog_).total_cost / greedy(query, self.catalog_).total_cost
            for tree, query in zip(trees, queries)
        ]
        return -float(np.median(ratios))
