"""Iteration stream driving the solver loops and the trajectory buffer
that records their snapshots.

Attributes:
    Snapshot (namedtuple): Solver state at one recorded step
"""
from collections import deque
from collections import namedtuple
from typing import Dict, Iterator

import numpy as np
from torch.utils.data.dataset import IterableDataset

from rieszEL.common.utils import write_csv_columns

Snapshot = namedtuple('Snapshot', ('step', 'time', 'energy', 'state'))


class TrajectoryBuffer:
    """
    Buffer of solver snapshots

    Args:
        record_every (int): Record one snapshot every this many steps, 0 for
        none

    Attributes:
        snapshots (deque): Recorded snapshots in step order
    """
    def __init__(self, record_every: int = 0) -> None:
        self.snapshots = deque()
        self.record_every = record_every

    def __len__(self) -> int:
        return len(self.snapshots)

    def wants(self, step: int) -> bool:
        """Whether the snapshot of the given step should be recorded."""
        return self.record_every > 0 and step % self.record_every == 0

    def append(self, snapshot: Snapshot) -> None:
        self.snapshots.append(snapshot)

    def stacked(self) -> Dict[str, np.ndarray]:
        """Snapshots as columns; the state of each snapshot becomes a row.

        Returns:
            Dict[str, np.ndarray]: step, time, energy and a 2-D state array
        """
        data = {k: [s[i] for s in self.snapshots]
                for i, k in enumerate(Snapshot._fields)}
        return {k: np.array(v) for k, v in data.items()}

    def to_csv(self, path: str) -> None:
        """Writes one row per snapshot: step, time, energy, then the state."""
        data = self.stacked()
        columns = {'step': data['step'], 'time': data['time'],
                   'energy': data['energy']}
        states = np.atleast_2d(data['state'])
        for i in range(states.shape[1] if len(self) else 0):
            columns[f's{i}'] = states[:, i]
        write_csv_columns(path, columns)

    def empty_buffer(self) -> None:
        self.snapshots.clear()


class IterationStream(IterableDataset):
    """
    Iterable dataset yielding the indices of solver steps

    Lightning pulls one index per training step; the module stops the loop
    early by returning -1 from ``on_train_batch_start``.

    Args:
        max_steps (int): Number of training steps available
    """
    def __init__(self, max_steps: int) -> None:
        self.max_steps = max_steps

    def __iter__(self) -> Iterator[int]:
        for step in range(self.max_steps):
            yield step
