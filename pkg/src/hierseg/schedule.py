"""Teacher/student training schedule arithmetic.

Pure functions over iteration counts and parameter vectors: cosine
interpolation of the learning rate and of the two supervision-branch loss
weights, plus the exponential-moving-average teacher update. A burn-in
prefix holds the learning rate and label weight fixed with the teacher
branch inactive; afterwards all three follow a cosine from their start to
their end values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, IterOutOfRangeError, LengthMismatchError


@dataclass(frozen=True)
class ScheduleConfig:
    total_iters: int = 40_000
    burn_in_iters: int = 4_000
    lr_start: float = 0.01
    lr_end: float = 0.0
    label_weight_start: float = 1.0
    label_weight_end: float = 0.0
    teacher_weight_start: float = 2.0
    teacher_weight_end: float = 3.0
    ema_momentum: float = 0.9996

    def __post_init__(self) -> None:
        if not 0 <= self.burn_in_iters < self.total_iters:
            raise ConfigError(
                f"need 0 <= burn_in ({self.burn_in_iters}) < total ({self.total_iters})"
            )
        if not 0.0 <= self.ema_momentum <= 1.0:
            raise ConfigError(f"ema_momentum must lie in [0, 1], got {self.ema_momentum}")


def progress(iteration: int, cfg: ScheduleConfig) -> float:
    """Post-burn-in progress in [0, 1]; 0 throughout burn-in."""
    if not 0 <= iteration <= cfg.total_iters:
        raise IterOutOfRangeError(f"iteration {iteration} outside [0, {cfg.total_iters}]")
    if iteration <= cfg.burn_in_iters:
        return 0.0
    p = (iteration - cfg.burn_in_iters) / (cfg.total_iters - cfg.burn_in_iters)
    return min(1.0, max(0.0, p))


def cosine_interp(start: float, end: float, p: float) -> float:
    """Half-cosine from ``start`` (p=0) to ``end`` (p=1)."""
    return end + (start - end) * (1.0 + math.cos(math.pi * p)) / 2.0


def learning_rate(iteration: int, cfg: ScheduleConfig) -> float:
    """Held at ``lr_start`` during burn-in, then cosine-decayed to ``lr_end``."""
    return cosine_interp(cfg.lr_start, cfg.lr_end, progress(iteration, cfg))


def loss_weights(iteration: int, cfg: ScheduleConfig) -> tuple[float, float]:
    """(label branch weight, teacher branch weight) at ``iteration``.

    During burn-in the teacher branch is inactive and reported as 0; the
    teacher weight starts from its configured value the moment burn-in
    ends.
    """
    if not 0 <= iteration <= cfg.total_iters:
        raise IterOutOfRangeError(f"iteration {iteration} outside [0, {cfg.total_iters}]")
    if iteration < cfg.burn_in_iters:
        return cfg.label_weight_start, 0.0
    p = progress(iteration, cfg)
    return (
        cosine_interp(cfg.label_weight_start, cfg.label_weight_end, p),
        cosine_interp(cfg.teacher_weight_start, cfg.teacher_weight_end, p),
    )


def ema_update(teacher: np.ndarray, student: np.ndarray, momentum: float) -> np.ndarray:
    """Per-element ``momentum * teacher + (1 - momentum) * student``."""
    teacher = np.asarray(teacher, dtype=np.float64)
    student = np.asarray(student, dtype=np.float64)
    if teacher.shape != student.shape:
        raise LengthMismatchError(
            f"teacher shape {teacher.shape} != student shape {student.shape}"
        )
    if not 0.0 <= momentum <= 1.0:
        raise ConfigError(f"momentum must lie in [0, 1], got {momentum}")
    return momentum * teacher + (1.0 - momentum) * student


def schedule_rows(cfg: ScheduleConfig):
    """Yield (iteration, lr, label_weight, teacher_weight) for 0..total."""
    for it in range(cfg.total_iters + 1):
        label_w, teacher_w = loss_weights(it, cfg)
        yield it, learning_rate(it, cfg), label_w, teacher_w
