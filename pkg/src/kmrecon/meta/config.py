"""Training and adaptation configuration."""

from __future__ import annotations

from dataclasses import dataclass

from ..model.params import STRATEGIES

INNER_MODES = ("first_order", "unrolled")
ADAPT_MODES = ("on_the_fly", "adapt_base", "adapt_hypernet")


@dataclass(frozen=True)
class TrainConfig:
    strategy: str = "km_maml"
    outer_lr: float = 0.001
    inner_lr: float = 0.001
    inner_steps: int = 1
    task_batch: int = 3
    support_batch: int = 10
    query_batch: int = 10
    epochs: int = 200
    inner_mode: str = "first_order"
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy {self.strategy!r} not in {STRATEGIES}")
        if self.inner_mode not in INNER_MODES:
            raise ValueError(f"inner_mode {self.inner_mode!r} not in {INNER_MODES}")
        if self.outer_lr < 0 or self.inner_lr < 0:
            raise ValueError("learning rates must be non-negative")
        if self.inner_steps < 0:
            raise ValueError("inner_steps must be >= 0")
        if self.task_batch < 1:
            raise ValueError("task_batch must be >= 1")


@dataclass(frozen=True)
class AdaptConfig:
    mode: str = "on_the_fly"
    steps: int = 0
    lr: float = 0.001

    def __post_init__(self):
        if self.mode not in ADAPT_MODES:
            raise ValueError(f"adapt mode {self.mode!r} not in {ADAPT_MODES}")
        if self.steps < 0:
            raise ValueError("adapt steps must be >= 0")
        if self.lr < 0:
            raise ValueError("adapt lr must be non-negative")
