"""Trial data containers: clusters of binary outcomes with an arm label."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Cluster:
    """One randomized cluster: an arm label and its binary outcome vector."""

    id: object
    arm: int
    outcomes: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.outcomes, dtype=float)
        if y.ndim != 1 or y.size < 1:
            raise DataError(f"cluster {self.id!r}: outcomes must be a nonempty vector")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise DataError(f"cluster {self.id!r}: outcomes must be exactly 0 or 1")
        if self.arm not in (0, 1):
            raise DataError(f"cluster {self.id!r}: arm must be 0 or 1, got {self.arm!r}")
        object.__setattr__(self, "outcomes", y)

    @property
    def size(self):
        return self.outcomes.size


@dataclass(frozen=True)
class TrialDataset:
    """A two-arm trial: N >= 2 clusters with at least one cluster per arm."""

    clusters: tuple = field(default_factory=tuple)

    def __post_init__(self):
        clusters = tuple(self.clusters)
        if len(clusters) < 2:
            raise DataError("a trial needs at least two clusters")
        arms = {c.arm for c in clusters}
        if arms != {0, 1}:
            raise DataError("both arms must be represented (arm effect inestimable)")
        object.__setattr__(self, "clusters", clusters)

    @property
    def n_clusters(self):
        return len(self.clusters)

    @property
    def n_obs(self):
        return sum(c.size for c in self.clusters)

    def arm_summary(self):
        """Per-arm (observations, events, proportion), keyed by arm label."""
        out = {}
        for arm in (0, 1):
            ys = [c.outcomes for c in self.clusters if c.arm == arm]
            n = sum(y.size for y in ys)
            events = float(sum(y.sum() for y in ys))
            out[arm] = {"n_obs": n, "events": events, "proportion": events / n}
        return out
