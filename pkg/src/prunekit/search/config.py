"""Search-side configuration: deployment subsets, level grid, acceptance."""

from __future__ import annotations

from dataclasses import dataclass

from prunekit.errors import ValidationError


@dataclass(frozen=True)
class SubsetSpec:
    """The deployment data distribution: a named subset of the training
    label space (classes seen after deployment are a subset of the classes
    trained on)."""

    name: str
    class_ids: frozenset[int]

    def __post_init__(self):
        if not self.class_ids:
            raise ValidationError(f"subset '{self.name}' has no classes")
        if any(c < 0 for c in self.class_ids):
            raise ValidationError(f"subset '{self.name}' has negative class ids")

    def sorted_ids(self) -> list[int]:
        return sorted(self.class_ids)


@dataclass
class SearchConfig:
    level_low: float = 5.0       # lowest pruning level on the grid
    level_high: float = 95.0     # highest pruning level on the grid
    level_step: float = 5.0      # grid increment
    level_start: float = 50.0    # first level searched
    finetune_epochs: int = 5     # epochs of subset finetuning before pruning
    retrain_epochs: int = 25     # epochs of subset retraining per searched level
    ranking_scope: str = "global"
    residual_policy: str = "tie_group"
    acceptance: str = "baseline"           # or "explicit_target"
    explicit_target: float | None = None   # used when acceptance == "explicit_target"

    def __post_init__(self):
        if not 0 <= self.level_low <= self.level_start <= self.level_high < 100:
            raise ValidationError("levels must satisfy low <= start <= high < 100")
        if self.level_step <= 0:
            raise ValidationError("level_step must be positive")
        span = (self.level_high - self.level_low) / self.level_step
        if abs(span - round(span)) > 1e-9:
            raise ValidationError("(level_high - level_low) must be divisible by level_step")
        offset = (self.level_start - self.level_low) / self.level_step
        if abs(offset - round(offset)) > 1e-9:
            raise ValidationError("level_start must lie on the grid")
        if self.acceptance not in ("baseline", "explicit_target"):
            raise ValidationError(f"unknown acceptance mode '{self.acceptance}'")
        if self.acceptance == "explicit_target" and self.explicit_target is None:
            raise ValidationError("explicit_target acceptance needs a target accuracy")
        if self.finetune_epochs < 0 or self.retrain_epochs < 0:
            raise ValidationError("epoch counts must be >= 0")

    def grid(self) -> list[float]:
        steps = round((self.level_high - self.level_low) / self.level_step)
        return [self.level_low + i * self.level_step for i in range(steps + 1)]


def round_up_to_grid(grid: list[float], value: float) -> float:
    candidates = [g for g in grid if g >= value - 1e-9]
    return candidates[0] if candidates else grid[-1]


def round_down_to_grid(grid: list[float], value: float) -> float:
    candidates = [g for g in grid if g <= value + 1e-9]
    return candidates[-1] if candidates else grid[0]
