"""
Schedule of the repulsion coefficient lambda_N.

lambda_N(h) = (1 + 10 h / H) ** -5 decays from 1 at h = 0 to 11 ** -5 at
h = H. FixedMax and FixedMin pin it to those two endpoints.
"""

from dataclasses import dataclass
from enum import Enum

from src.utils.errors import ContractError


class LambdaNMode(str, Enum):
    VARIABLE = "Variable"
    FIXED_MIN = "FixedMin"
    FIXED_MAX = "FixedMax"


@dataclass(frozen=True)
class LambdaNSchedule:
    total_epochs: int

    def __post_init__(self) -> None:
        if self.total_epochs < 1:
            raise ContractError(f"Schedule needs H >= 1, got {self.total_epochs}")

    def value(self, epoch: int) -> float:
        return lambda_n(self, epoch)


def lambda_n(schedule: LambdaNSchedule, epoch: int) -> float:
    """
    (1 + 10 * h / H) ** -5.

    Raises:
        ContractError: If h is outside [0, H]
    """
    if not 0 <= epoch <= schedule.total_epochs:
        raise ContractError(f"Epoch {epoch} outside [0, {schedule.total_epochs}]")
    return (1.0 + 10.0 * epoch / schedule.total_epochs) ** -5.0


def lambda_for_epoch(schedule: LambdaNSchedule, epoch: int, mode: LambdaNMode) -> float:
    """lambda_N used at ``epoch`` under the given mode."""
    mode = LambdaNMode(mode)
    if mode is LambdaNMode.FIXED_MAX:
        return lambda_n(schedule, 0)
    if mode is LambdaNMode.FIXED_MIN:
        return lambda_n(schedule, schedule.total_epochs)
    return lambda_n(schedule, epoch)
