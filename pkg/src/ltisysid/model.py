"""LTI system representation, simulation and synthetic data generation."""

import csv
import enum
import io
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError
from .numkernel import as_matrix, mat_exp

__all__ = [
    "Dataset",
    "SystemParams",
    "TimeKind",
    "Trajectory",
    "generate_system",
    "make_dataset",
    "read_dataset",
    "simulate",
    "write_dataset",
]


class TimeKind(str, enum.Enum):
    """How the state is propagated: ``e^{At}`` or ``A^t``."""

    CONTINUOUS = "continuous"
    DISCRETE = "discrete"


@dataclass(frozen=True)
class SystemParams:
    """State transition ``A`` (n x n) and observation matrix ``C`` (m x n)."""

    A: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A", square=True)
        C = as_matrix(self.C, "C")
        if C.shape[1] != A.shape[0]:
            raise DimensionError(f"C has {C.shape[1]} columns but A is {A.shape[0]}x{A.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "C", C)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.C.shape[0]

    def propagator(self, t, kind):
        """``e^{At}`` for continuous time, ``A^t`` for discrete time."""
        if TimeKind(kind) is TimeKind.DISCRETE:
            return np.linalg.matrix_power(self.A, int(t))
        return mat_exp(self.A, t)


@dataclass(frozen=True)
class Trajectory:
    """Output samples of one trajectory.

    Attributes
    ----------
    index : int
        Position ``k`` of the trajectory in its dataset.
    times : (T,) ndarray
        Strictly increasing positive sample times.
    samples : (T, m) ndarray
        ``samples[i]`` is the output observed at ``times[i]``.
    true_initial_state : (n,) ndarray or None
        Ground-truth initial state, kept for evaluation only.
    """

    index: int
    times: np.ndarray
    samples: np.ndarray
    true_initial_state: np.ndarray = None

    def __post_init__(self):
        times = np.asarray(self.times)
        samples = np.asarray(self.samples, dtype=float)
        if times.ndim != 1 or len(times) == 0:
            raise DataError("a trajectory needs a non-empty 1-D array of times")
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.shape[0] != len(times):
            raise DataError(f"{len(times)} times but {samples.shape[0]} samples")
        if np.any(times <= 0):
            raise DataError("sample times must be strictly positive")
        if np.any(np.diff(times) <= 0):
            raise DataError("sample times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "samples", samples)
        if self.true_initial_state is not None:
            object.__setattr__(
                self, "true_initial_state", np.asarray(self.true_initial_state, dtype=float)
            )

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class Dataset:
    """A collection of trajectories sharing one time kind and dimensions."""

    trajectories: tuple
    time_kind: TimeKind
    n: int
    m: int
    true_params: SystemParams = None
    seed: int = None

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        if not trajs:
            raise DataError("dataset must contain at least one trajectory")
        kind = TimeKind(self.time_kind)
        for k, tr in enumerate(trajs):
            if tr.index != k:
                raise DataError(f"trajectory at position {k} has index {tr.index}")
            if tr.samples.shape[1] != self.m:
                raise DimensionError(f"trajectory {k} has output dim {tr.samples.shape[1]}, expected {self.m}")
            if tr.true_initial_state is not None and tr.true_initial_state.shape != (self.n,):
                raise DimensionError(f"trajectory {k} initial state has wrong dimension")
            if kind is TimeKind.DISCRETE and not np.all(np.equal(np.mod(tr.times, 1), 0)):
                raise DataError(f"trajectory {k}: discrete sample times must be integers")
        object.__setattr__(self, "trajectories", trajs)
        object.__setattr__(self, "time_kind", kind)

    def __len__(self):
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    @property
    def K(self):
        return len(self.trajectories)

    @property
    def sample_count(self):
        return sum(len(tr) for tr in self.trajectories)

    @property
    def sample_times(self):
        """Per-trajectory time arrays."""
        return [tr.times for tr in self.trajectories]

    def true_states(self):
        """(K, n) array of ground-truth initial states.

        Raises
        ------
        DataError
            If any trajectory lacks its ground-truth initial state.
        """
        if any(tr.true_initial_state is None for tr in self.trajectories):
            raise DataError("dataset does not carry true initial states")
        return np.stack([tr.true_initial_state for tr in self.trajectories])

    def subset(self, indices):
        """Dataset restricted to the given trajectory positions (re-indexed)."""
        trajs = []
        for new_k, k in enumerate(indices):
            tr = self.trajectories[k]
            trajs.append(Trajectory(new_k, tr.times, tr.samples, tr.true_initial_state))
        return Dataset(tuple(trajs), self.time_kind, self.n, self.m, self.true_params, self.seed)

    @cached_property
    def discrete_grid(self):
        """Dense layout of a discrete dataset on the time grid ``1..T_max``.

        Returns ``(X, mask)`` with ``X`` of shape (T_max, m, K) holding the
        samples (zero where absent) and boolean ``mask`` of shape (T_max, K).
        """
        tmax = int(max(tr.times[-1] for tr in self.trajectories))
        X = np.zeros((tmax, self.m, self.K))
        mask = np.zeros((tmax, self.K), dtype=bool)
        for k, tr in enumerate(self.trajectories):
            idx = tr.times.astype(int) - 1
            X[idx, :, k] = tr.samples
            mask[idx, k] = True
        return X, mask

    @cached_property
    def continuous_groups(self):
        """Samples grouped by distinct time: list of (t, ks, rows, samples)."""
        buckets = {}
        for k, tr in enumerate(self.trajectories):
            for i, t in enumerate(tr.times):
                buckets.setdefault(float(t), []).append((k, i))
        groups = []
        for t in sorted(buckets):
            ks = np.array([k for k, _ in buckets[t]])
            rows = np.array([i for _, i in buckets[t]])
            samples = np.stack([self.trajectories[k].samples[i] for k, i in buckets[t]])
            groups.append((t, ks, rows, samples))
        return groups


def generate_system(n, m, seed):
    """Random system ``A = I + dA``, ``dA ~ U[-0.5, 0.5]``, ``C ~ N(0, 1)``.

    Deterministic given ``seed``.
    """
    if n < 1 or m < 1:
        raise DimensionError("n and m must be positive")
    rng = np.random.default_rng(seed)
    A = np.eye(n) + rng.uniform(-0.5, 0.5, size=(n, n))
    C = rng.standard_normal((m, n))
    return SystemParams(A, C)


def simulate(params, s, times, kind, index=0):
    """Noise-free outputs ``C e^{At} s`` (or ``C A^t s``) at ``times``."""
    kind = TimeKind(kind)
    s = np.asarray(s, dtype=float)
    if s.shape != (params.n,):
        raise DimensionError(f"initial state must have shape ({params.n},), got {s.shape}")
    times = np.asarray(times)
    if kind is TimeKind.DISCRETE:
        times = times.astype(int)
        out = np.empty((len(times), params.m))
        z = s.copy()
        t_prev = 0
        for i, t in enumerate(times):
            for _ in range(t - t_prev):
                z = params.A @ z
            t_prev = t
            out[i] = params.C @ z
    else:
        times = times.astype(float)
        out = np.array([params.C @ (mat_exp(params.A, t) @ s) for t in times])
    return Trajectory(index, times, out, s)


def make_dataset(params, K, length, kind, init_scale=1.0, seed=0):
    """Generate ``K`` trajectories of ``length`` samples each.

    Initial states are i.i.d. standard normal scaled by ``init_scale``.
    Discrete trajectories are sampled at ``1..length``; continuous ones at
    sorted uniform times on ``(0, length]``, drawn per trajectory.
    """
    if K < 1 or length < 1:
        raise DataError("K and length must be positive")
    kind = TimeKind(kind)
    rng = np.random.default_rng(seed)
    states = init_scale * rng.standard_normal((K, params.n))
    trajs = []
    for k in range(K):
        if kind is TimeKind.DISCRETE:
            times = np.arange(1, length + 1)
        else:
            times = np.sort(length * (1.0 - rng.uniform(size=length)))
        trajs.append(simulate(params, states[k], times, kind, index=k))
    return Dataset(tuple(trajs), kind, params.n, params.m, params, seed)


def _fmt(x):
    return f"{x:.17g}"


def write_dataset(dataset, csv_path, meta_path=None):
    """Write ``dataset`` as CSV plus a JSON metadata sidecar.

    CSV columns are ``trajectory_id, time, y_1..y_m``.  The sidecar records
    ``n, m, time_kind, seed``, the true ``A`` and ``C`` (row-major) and the
    true initial states when available.  Numbers use 17 significant digits,
    so a round trip through :func:`read_dataset` is exact.
    """
    csv_path = Path(csv_path)
    meta_path = Path(meta_path) if meta_path else csv_path.with_suffix(".json")
    discrete = dataset.time_kind is TimeKind.DISCRETE
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["trajectory_id", "time"] + [f"y_{j + 1}" for j in range(dataset.m)])
    for k, tr in enumerate(dataset.trajectories):
        for t, y in zip(tr.times, tr.samples):
            t_str = str(int(t)) if discrete else _fmt(float(t))
            writer.writerow([k, t_str] + [_fmt(v) for v in y])
    csv_path.write_text(buf.getvalue())

    meta = {
        "n": dataset.n,
        "m": dataset.m,
        "time_kind": dataset.time_kind.value,
        "seed": dataset.seed,
        "A": None,
        "C": None,
        "initial_states": None,
    }
    if dataset.true_params is not None:
        meta["A"] = [float(v) for v in dataset.true_params.A.ravel()]
        meta["C"] = [float(v) for v in dataset.true_params.C.ravel()]
    try:
        meta["initial_states"] = [[float(v) for v in s] for s in dataset.true_states()]
    except DataError:
        pass
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return csv_path, meta_path


def read_dataset(csv_path, meta_path=None):
    """Inverse of :func:`write_dataset`."""
    csv_path = Path(csv_path)
    meta_path = Path(meta_path) if meta_path else csv_path.with_suffix(".json")
    meta = json.loads(meta_path.read_text())
    n, m = int(meta["n"]), int(meta["m"])
    kind = TimeKind(meta["time_kind"])
    rows = {}
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) != 2 + m:
            raise DataError(f"expected {2 + m} CSV columns, got {len(header)}")
        for line, row in enumerate(reader, start=2):
            try:
                k = int(row[0])
                t = int(row[1]) if kind is TimeKind.DISCRETE else float(row[1])
                y = [float(v) for v in row[2:]]
            except (ValueError, IndexError) as exc:
                raise DataError(f"{csv_path}:{line}: {exc}") from exc
            if len(y) != m:
                raise DataError(f"{csv_path}:{line}: expected {m} outputs, got {len(y)}")
            rows.setdefault(k, []).append((t, y))
    states = meta.get("initial_states")
    trajs = []
    for pos, k in enumerate(sorted(rows)):
        times = np.array([t for t, _ in rows[k]])
        samples = np.array([y for _, y in rows[k]])
        s0 = np.array(states[pos]) if states else None
        trajs.append(Trajectory(pos, times, samples, s0))
    params = None
    if meta.get("A") is not None:
        params = SystemParams(np.reshape(meta["A"], (n, n)), np.reshape(meta["C"], (m, n)))
    return Dataset(tuple(trajs), kind, n, m, params, meta.get("seed"))
