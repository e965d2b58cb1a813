import logging
from dataclasses import dataclass
from typing import Tuple, Union

from htgnn.data.graph import HTGraph
from htgnn.errors import SplitError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TemporalSplit:
    """Target snapshots for each split

    Target t predicts snapshots t .. t+horizon-1 from the window t-window .. t-1.
    """

    window: int
    horizon: int
    train: Tuple[int, ...]
    val: Tuple[int, ...]
    test: Tuple[int, ...]

    @property
    def targets(self) -> Tuple[int, ...]:
        return self.train + self.val + self.test

    def window_of(self, target: int) -> range:
        return range(target - self.window, target)

    def steps_of(self, target: int) -> range:
        return range(target, target + self.horizon)

    def to_dict(self):
        return {"window": self.window, "horizon": self.horizon,
                "train": list(self.train), "val": list(self.val), "test": list(self.test)}


def split_temporal(graph: Union[HTGraph, int], window: int, horizon: int, n_val: int = 1,
                   n_test: int = 1) -> TemporalSplit:
    """Last n_test targets go to test, the n_val before them to validation, the rest to training"""
    T = graph if isinstance(graph, int) else graph.T
    if window < 1 or horizon < 1:
        raise SplitError(f"window and horizon must be positive, got window={window}, horizon={horizon}")
    if n_val < 0 or n_test < 0:
        raise SplitError(f"n_val and n_test must be non-negative, got n_val={n_val}, n_test={n_test}")
    needed = window + horizon + n_val + n_test
    if T < needed:
        raise SplitError(
            f"insufficient snapshots: window {window} + horizon {horizon} + n_val {n_val} + n_test {n_test} "
            f"= {needed} > T = {T}"
        )
    targets = list(range(window, T - horizon + 1))
    n_train = len(targets) - n_val - n_test
    split = TemporalSplit(
        window=window,
        horizon=horizon,
        train=tuple(targets[:n_train]),
        val=tuple(targets[n_train:n_train + n_val]),
        test=tuple(targets[n_train + n_val:]),
    )
    logger.info(f"Temporal split over T={T}: train {list(split.train)}, val {list(split.val)}, test {list(split.test)}")
    return split
