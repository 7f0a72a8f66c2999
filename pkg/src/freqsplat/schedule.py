"""Iteration -> (kernel size, level) schedules for frequency modulation.

The continuous families are interpretations of plotted decay curves: every one
starts at ``initial_kernel`` on iteration 0 and reaches 1 (no filtering) at
``cutoff_iteration``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .freq_filter import FilterKind


class ScheduleFamily(str, enum.Enum):
    STEP = "step"
    LINEAR = "linear"
    COSINE = "cosine"
    COSINE_RESTART = "cosine_restart"
    EXPONENTIAL = "exponential"

    @classmethod
    def parse(cls, value) -> "ScheduleFamily":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower().replace("-", "_"))
        except ValueError:
            raise ValueError(
                f"unknown schedule family {value!r}; expected one of {[f.value for f in cls]}"
            ) from None


def odd_round(x: float) -> int:
    """Nearest integer, bumped to the next odd value if even, floored at 1."""
    n = int(math.floor(x + 0.5))
    if n % 2 == 0:
        n += 1
    return max(1, n)


def default_step_sizes(initial_kernel: int, plateaus: int) -> tuple[int, ...]:
    """Geometric decay from ``initial_kernel`` down to 3 over ``plateaus`` steps.

    For initial_kernel=15 and 4 plateaus this gives (15, 9, 5, 3).
    """
    if plateaus == 1:
        return (initial_kernel,)
    ratio = 3.0 / initial_kernel
    return tuple(
        min(initial_kernel, odd_round(initial_kernel * ratio ** (i / (plateaus - 1))))
        for i in range(plateaus)
    )


@dataclass(frozen=True)
class FrequencySchedule:
    family: ScheduleFamily = ScheduleFamily.STEP
    initial_kernel: int = 15
    cutoff_iteration: int = 12000
    level_boundaries: tuple[int, ...] = (3000, 6000, 9000, 12000)
    filter: FilterKind = FilterKind.MEAN
    # per-plateau sizes for STEP; derived from initial_kernel when empty
    step_sizes: tuple[int, ...] = field(default=())
    restarts: int = 2
    exp_rate: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "family", ScheduleFamily.parse(self.family))
        object.__setattr__(self, "filter", FilterKind.parse(self.filter))
        object.__setattr__(self, "level_boundaries", tuple(int(b) for b in self.level_boundaries))
        if self.initial_kernel < 3 or self.initial_kernel % 2 == 0:
            raise ValueError(f"initial_kernel must be odd and >= 3, got {self.initial_kernel}")
        if self.cutoff_iteration <= 0:
            raise ValueError("cutoff_iteration must be positive")
        b = self.level_boundaries
        if not b or any(x >= y for x, y in zip(b, b[1:])) or b[0] <= 0:
            raise ValueError(f"level_boundaries must be positive and strictly increasing: {b}")
        if b[-1] != self.cutoff_iteration:
            raise ValueError("last level boundary must equal cutoff_iteration")
        sizes = tuple(int(s) for s in self.step_sizes) or default_step_sizes(
            self.initial_kernel, len(b)
        )
        if len(sizes) != len(b):
            raise ValueError(f"need one step size per filtered level ({len(b)}), got {len(sizes)}")
        if sizes[0] != self.initial_kernel or any(s < 1 or s % 2 == 0 for s in sizes):
            raise ValueError(f"step sizes must be odd and start at initial_kernel: {sizes}")
        object.__setattr__(self, "step_sizes", sizes)
        if self.restarts < 0 or self.exp_rate <= 0:
            raise ValueError("restarts must be >= 0 and exp_rate > 0")

    @classmethod
    def evenly_spaced(cls, cutoff_iteration: int, levels: int = 5, **kw) -> "FrequencySchedule":
        filtered = levels - 1
        bounds = tuple(round(cutoff_iteration * (i + 1) / filtered) for i in range(filtered))
        return cls(cutoff_iteration=cutoff_iteration, level_boundaries=bounds, **kw)

    @property
    def level_count(self) -> int:
        return len(self.level_boundaries) + 1

    def curve(self, iteration: int) -> float:
        """Un-rounded kernel size of a continuous family."""
        k0 = float(self.initial_kernel)
        t = min(max(iteration, 0), self.cutoff_iteration) / self.cutoff_iteration
        fam = self.family
        if fam is ScheduleFamily.LINEAR:
            return k0 + (1.0 - k0) * t
        if fam is ScheduleFamily.COSINE:
            return 1.0 + (k0 - 1.0) * 0.5 * (1.0 + math.cos(math.pi * t))
        if fam is ScheduleFamily.COSINE_RESTART:
            cycles = self.restarts + 1
            phase = t * cycles
            frac = 1.0 if t >= 1.0 else phase - math.floor(phase)
            return 1.0 + (k0 - 1.0) * 0.5 * (1.0 + math.cos(math.pi * frac))
        if fam is ScheduleFamily.EXPONENTIAL:
            return k0 * math.exp(-self.exp_rate * t)
        raise ValueError(f"{fam} has no continuous curve")


def level_at(s: FrequencySchedule, iteration: int) -> int:
    """1-based level; ``level_count`` (unfiltered) from the cutoff onwards."""
    if iteration >= s.cutoff_iteration:
        return s.level_count
    return 1 + sum(1 for b in s.level_boundaries if iteration >= b)


def kernel_size_at(s: FrequencySchedule, iteration: int) -> int:
    if iteration >= s.cutoff_iteration:
        return 1
    if s.family is ScheduleFamily.STEP:
        return s.step_sizes[level_at(s, iteration) - 1]
    return min(s.initial_kernel, odd_round(s.curve(iteration)))


def snapshot_iterations(s: FrequencySchedule, total_iterations: int) -> list[int]:
    """Last iteration of every level, ending with the final training iteration."""
    if total_iterations < s.cutoff_iteration:
        raise ValueError("total_iterations must be >= cutoff_iteration")
    snaps = [b - 1 for b in s.level_boundaries if b < total_iterations]
    snaps.append(total_iterations - 1)
    return snaps
