"""Datasets of observed trajectories, discretization grids, and noise injection.

CSV schema (header required): ``traj_id,t,y1,...,yd`` with ``.`` as the
decimal separator; rows may appear in any order and are grouped by id and
sorted by time on load.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataFormatError

__all__ = [
    "Trajectory",
    "Dataset",
    "TimeGrid",
    "load_dataset",
    "save_dataset",
    "build_grid",
    "build_grids",
    "add_noise",
    "sample_weights",
]


@dataclass(frozen=True)
class Trajectory:
    """One time series: strictly ascending times and (m, d) observed values."""

    traj_id: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        y = np.atleast_2d(np.asarray(self.values, dtype=float))
        if y.shape[0] != t.shape[0]:
            raise DataFormatError(
                f"trajectory {self.traj_id!r}: {t.shape[0]} times but {y.shape[0]} values"
            )
        if t.shape[0] < 1:
            raise DataFormatError(f"trajectory {self.traj_id!r} is empty")
        if np.any(np.diff(t) <= 0):
            raise DataFormatError(f"trajectory {self.traj_id!r}: times must be strictly ascending")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise DataFormatError(f"trajectory {self.traj_id!r}: non-finite entry")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", y)

    @property
    def n_obs(self) -> int:
        return self.times.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Dataset:
    """A collection of trajectories sharing one state dimension."""

    trajectories: list
    horizon: float | None = None

    def __post_init__(self):
        if len(self.trajectories) < 1:
            raise DataFormatError("dataset needs at least one trajectory")
        dims = {tr.dim for tr in self.trajectories}
        if len(dims) != 1:
            raise DataFormatError(f"trajectories disagree on dimension: {sorted(dims)}")
        if self.horizon is None:
            object.__setattr__(self, "horizon", max(tr.times[-1] for tr in self.trajectories))

    @property
    def dim(self) -> int:
        return self.trajectories[0].dim

    @property
    def n_trajectories(self) -> int:
        return len(self.trajectories)


@dataclass(frozen=True)
class TimeGrid:
    """Regular grid s_l = t_start + l*h for l = 0..k, with observation indices.

    ``obs_index[j]`` is the node nearest to the j-th observation time of the
    trajectory the grid was built for; ties at half a step round down.
    """

    t_start: float
    h: float
    k: int
    obs_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def n_nodes(self) -> int:
        return self.k + 1

    def nodes(self) -> np.ndarray:
        return self.t_start + self.h * np.arange(self.k + 1)

    def node(self, l: int) -> float:
        return self.t_start + self.h * l


def build_grid(trajectory: Trajectory, h: float) -> TimeGrid:
    """Per-trajectory grid spanning [first, last] observation with step h."""
    if h <= 0:
        raise ConfigurationError(f"grid step must be positive, got {h}")
    t = trajectory.times
    q = (t - t[0]) / h
    # nearest node, exact half distances rounding to the lower index
    idx = np.ceil(q - 0.5).astype(int)
    idx = np.maximum(idx, 0)
    k = int(idx[-1])
    return TimeGrid(t_start=float(t[0]), h=float(h), k=k, obs_index=idx)


def build_grids(dataset: Dataset, h: float) -> list:
    """One grid per trajectory, all sharing the step h."""
    return [build_grid(tr, h) for tr in dataset.trajectories]


def sample_weights(trajectory: Trajectory, T: float, last_floor: float = 0.0) -> np.ndarray:
    """Data-term weights w_j = t_{j+1} - t_j with the convention t_{m+1} = T.

    The final weight is floored at ``last_floor`` (typically the grid step) so
    T coinciding with the last observation never zeroes that observation out.
    """
    t = trajectory.times
    if T < t[-1]:
        raise ConfigurationError(f"horizon T={T} is before the last observation t={t[-1]}")
    w = np.empty(t.shape[0])
    w[:-1] = np.diff(t)
    w[-1] = max(T - t[-1], last_floor)
    if np.any(w <= 0):
        raise ConfigurationError("sample weights must be positive; supply a last_floor > 0")
    return w


def add_noise(dataset: Dataset, sigma: float, seed: int = 0) -> Dataset:
    """Dataset with i.i.d. centered Normal noise of std sigma on every coordinate."""
    if sigma < 0:
        raise ConfigurationError("noise sigma must be >= 0")
    if sigma == 0:
        return dataset
    rng = np.random.default_rng(seed)
    noisy = [
        Trajectory(tr.traj_id, tr.times.copy(), tr.values + rng.normal(0.0, sigma, tr.values.shape))
        for tr in dataset.trajectories
    ]
    return Dataset(noisy, horizon=dataset.horizon)


# --------------------------------------------------------------------------
# CSV ingestion
# --------------------------------------------------------------------------


def load_dataset(path, fmt: str = "csv") -> Dataset:
    """Load ``traj_id,t,y1..yd`` CSV into a Dataset; parse errors carry line numbers."""
    if fmt != "csv":
        raise ConfigurationError(f"unsupported dataset format {fmt!r}")
    rows = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        header = [c.strip() for c in header]
        if len(header) < 3 or header[0] != "traj_id" or header[1] != "t":
            raise DataFormatError(f"{path}: header must be traj_id,t,y1,...,yd; got {header}")
        dim = len(header) - 2
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != dim + 2:
                raise DataFormatError(f"{path}:{lineno}: expected {dim + 2} fields, got {len(row)}")
            tid = row[0].strip()
            try:
                t = float(row[1])
                y = [float(c) for c in row[2:]]
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            if not (np.isfinite(t) and all(np.isfinite(v) for v in y)):
                raise DataFormatError(f"{path}:{lineno}: non-finite value")
            rows.setdefault(tid, []).append((t, y, lineno))

    trajectories = []
    for tid, entries in rows.items():
        entries.sort(key=lambda e: e[0])
        times = [e[0] for e in entries]
        for (t0, _, l0), (t1, _, l1) in zip(entries, entries[1:]):
            if t0 == t1:
                raise DataFormatError(f"{path}:{l1}: duplicate time {t1} for trajectory {tid!r}")
        trajectories.append(
            Trajectory(tid, np.asarray(times), np.asarray([e[1] for e in entries]))
        )
    return Dataset(trajectories)


def save_dataset(dataset: Dataset, path) -> None:
    """Write the CSV schema back out; floats use shortest round-trip repr."""
    d = dataset.dim
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["traj_id", "t"] + [f"y{i + 1}" for i in range(d)])
        for tr in dataset.trajectories:
            for t, y in zip(tr.times, tr.values):
                writer.writerow([tr.traj_id, repr(float(t))] + [repr(float(v)) for v in y])
