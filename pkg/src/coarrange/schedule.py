"""Which microbatch distribution is active as training progresses.

Schedules are written as ``coo@0, ind@250000``: each segment names a
distribution and the update count at which it takes over.  Distribution
names:

* ``ind`` -- independent singletons
* ``coo`` -- coordinated microbatches
* ``coo+lsh:jaccard`` / ``coo+lsh:angular`` -- coordinated, refined by a
  precomputed LSH pool, adaptively capped at the minibatch size; a
  trailing ``:N`` (e.g. ``coo+lsh:jaccard:2``) applies N maps instead
* ``coo+optlsh`` -- coordinated, refined by ground-truth block labels
"""

from __future__ import annotations

from dataclasses import dataclass

from .arrangement import Designation
from .errors import ConfigError

KINDS = ("ind", "coo", "coo+lsh", "coo+optlsh")


@dataclass(frozen=True)
class Distribution:
    kind: str
    lsh: str | None = None
    n_maps: int | None = None  # None means adaptive capping

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown distribution {self.kind!r}")
        if self.kind == "coo+lsh":
            if self.lsh not in ("jaccard", "angular"):
                raise ConfigError("coo+lsh needs ':jaccard' or ':angular'")
            if self.n_maps is not None and self.n_maps < 0:
                raise ConfigError("map count must be nonnegative")
        elif self.lsh is not None or self.n_maps is not None:
            raise ConfigError(f"{self.kind} takes no LSH options")

    @classmethod
    def parse(cls, text: str) -> "Distribution":
        parts = text.strip().lower().split(":")
        if parts[0] != "coo+lsh":
            if len(parts) != 1:
                raise ConfigError(f"unexpected options in {text!r}")
            return cls(parts[0])
        if len(parts) not in (2, 3):
            raise ConfigError(f"bad LSH distribution {text!r}")
        n_maps = None
        if len(parts) == 3 and parts[2] != "adaptive":
            try:
                n_maps = int(parts[2])
            except ValueError:
                raise ConfigError(f"bad map count in {text!r}") from None
        return cls("coo+lsh", parts[1], n_maps)

    def __str__(self):
        if self.kind != "coo+lsh":
            return self.kind
        return f"coo+lsh:{self.lsh}" + ("" if self.n_maps is None else f":{self.n_maps}")


@dataclass(frozen=True)
class ArrangementSchedule:
    segments: tuple[tuple[int, Distribution], ...]

    def __post_init__(self):
        if not self.segments:
            raise ConfigError("schedule needs at least one segment")
        if self.segments[0][0] != 0:
            raise ConfigError("first schedule segment must start at 0")
        starts = [s for s, _ in self.segments]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigError("schedule start points must be strictly increasing")

    @classmethod
    def parse(cls, text: str) -> "ArrangementSchedule":
        segs = []
        for item in text.split(","):
            item = item.strip()
            if not item:
                continue
            name, at, start = item.rpartition("@")
            if not at:
                name, start = item, "0"
            try:
                start_i = int(float(start)) if "e" in start.lower() else int(start)
            except ValueError:
                raise ConfigError(f"bad start point in {item!r}") from None
            segs.append((start_i, Distribution.parse(name)))
        return cls(tuple(segs))

    @classmethod
    def constant(cls, name: str) -> "ArrangementSchedule":
        return cls(((0, Distribution.parse(name)),))

    def active(self, updates: int) -> Distribution:
        current = self.segments[0][1]
        for start, dist in self.segments:
            if updates >= start:
                current = dist
            else:
                break
        return current

    def distributions(self) -> list[Distribution]:
        seen = []
        for _, d in self.segments:
            if d not in seen:
                seen.append(d)
        return seen

    def __str__(self):
        return ", ".join(f"{d}@{s}" for s, d in self.segments)


@dataclass
class Counters:
    """Cumulative progress of a training run."""

    focus_positives: int = 0
    context_positives: int = 0
    updates: int = 0
    minibatches: int = 0


def schedule_next(sched: ArrangementSchedule, state: Counters) -> tuple[Distribution, Designation]:
    """Active distribution plus the designation that has seen fewer positives (ties: focus)."""
    if state.context_positives < state.focus_positives:
        designation = Designation.CONTEXT
    else:
        designation = Designation.FOCUS
    return sched.active(state.updates), designation
