"""Sparse incremental maintenance of per-cell training dictionaries.

Each nonempty cell of the partition owns a dictionary of at most M samples.
A candidate sample is scored by its marginal gain

    gamma = k(z, z) - k_vec^T K^-1 k_vec

against the cell's jittered kernel matrix K. Non-full dictionaries admit any
candidate whose gain exceeds a small threshold; full dictionaries evict the
current lowest-gain sample when the candidate beats it. After every mutation
the kernel matrix is re-inverted directly (cheap at M x M) and all per-sample
leave-one-out gains are refreshed from it: with jitter j on the diagonal,

    gamma_i = 1 / [K^-1]_ii - j

is exactly the gain of sample i measured against the remaining samples.

Dictionaries are immutable after construction; mutations build a new instance
and swap it into the store, so concurrent readers always observe a complete
pre- or post-update dictionary. A failed factorization therefore rolls back
for free. The same mechanics applied to one undivided large dictionary give
the flat full-set baseline used for benchmarking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NumericalError, SchemaError
from .gp import JITTER_RATIO, N_OUTPUTS, Hyperparams, correlation
from .region import CellIndex, RegionSpec, cell_of, check_validity
from .vehicle import TireParams, VehicleParams

STORE_SCHEMA = "splitgp-store v1"


@dataclass(frozen=True)
class LearnerConfig:
    capacity: int = 10                 # max samples per dictionary (M)
    gain_threshold_ratio: float = 1e-4  # admission threshold as a fraction of sigma_f^2
    speed_gate: float = 5.0            # m/s; learning only above this speed

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if self.gain_threshold_ratio < 0:
            raise ValueError("gain_threshold_ratio must be >= 0")


@dataclass(frozen=True)
class UpdateOutcome:
    """Result of offering one sample to the learner. Exactly one kind applies."""

    kind: str  # added | replaced | rejected_low_gain | rejected_invalid | rejected_speed_gate
    cell: CellIndex | None = None
    gain: float | None = None
    evicted: int | None = None
    violations: tuple = ()

    ADDED = "added"
    REPLACED = "replaced"
    REJECTED_LOW_GAIN = "rejected_low_gain"
    REJECTED_INVALID = "rejected_invalid"
    REJECTED_SPEED_GATE = "rejected_speed_gate"

    @property
    def accepted(self) -> bool:
        return self.kind in (self.ADDED, self.REPLACED)


class LocalDictionary:
    """One cell's samples with cached kernel bookkeeping.

    Immutable by convention: `with_inserted` / `with_replaced` return new
    instances. All caches derive from the jittered kernel matrix K_jit, which
    is maintained incrementally (rows/columns appended or replaced) and
    re-inverted directly after each mutation.
    """

    def __init__(self, cell, Z, Y, order, hyp: Hyperparams,
                 K_jit: np.ndarray | None = None):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        order = np.asarray(order, dtype=np.int64)
        m = Z.shape[0]
        if m == 0 or Y.shape != (m, N_OUTPUTS) or order.shape != (m,):
            raise ValueError("inconsistent dictionary arrays")

        sf2 = hyp.sf2
        jitter0 = JITTER_RATIO * sf2[0]
        if K_jit is None:
            K_jit = sf2[0] * correlation(Z, Z, hyp.ls)
            K_jit[np.diag_indices(m)] += jitter0

        try:
            K_inv = np.linalg.inv(K_jit)
            diag = np.diag(K_inv)
            if np.any(diag <= 0):
                raise np.linalg.LinAlgError("non-positive inverse diagonal")
            chol = []
            alpha = np.empty((m, N_OUTPUTS))
            eye = np.eye(m)
            for d in range(N_OUTPUTS):
                A_d = (sf2[d] / sf2[0]) * K_jit + hyp.noise_var[d] * eye
                cho = scipy.linalg.cho_factor(A_d, lower=True)
                chol.append(cho)
                alpha[:, d] = scipy.linalg.cho_solve(cho, Y[:, d])
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
            raise NumericalError(f"dictionary factorization failed: {exc}") from exc

        self.cell = cell
        self.Z = Z
        self.Y = Y
        self.order = order
        self.hyp = hyp
        self.K_jit = K_jit
        self.K_inv = K_inv
        # leave-one-out marginal gain of every stored sample
        self.gains = 1.0 / diag - jitter0
        self._chol = chol
        self._alpha = alpha

    def __len__(self) -> int:
        return self.Z.shape[0]

    def kernel_vector(self, z) -> np.ndarray:
        """Kernel values between stored samples and one candidate, shape (m,)."""
        return self.hyp.sf2[0] * correlation(self.Z, np.atleast_2d(z), self.hyp.ls)[:, 0]

    def candidate_gain(self, z) -> float:
        """Marginal gain of a candidate against the full dictionary."""
        k = self.kernel_vector(z)
        return float(self.hyp.sf2[0] - k @ self.K_inv @ k)

    def loo_system(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Leave-one-out kernel matrix and vector for sample i (views for checks)."""
        mask = np.arange(len(self)) != i
        return self.K_jit[np.ix_(mask, mask)], self.K_jit[mask, i]

    def with_inserted(self, z, y, order_id: int) -> "LocalDictionary":
        """New dictionary with the sample appended; K_jit grows by one row/column."""
        z = np.asarray(z, dtype=float)
        m = len(self)
        k = self.kernel_vector(z)
        K_new = np.empty((m + 1, m + 1))
        K_new[:m, :m] = self.K_jit
        K_new[:m, m] = k
        K_new[m, :m] = k
        K_new[m, m] = self.hyp.sf2[0] * (1.0 + JITTER_RATIO)
        return LocalDictionary(
            self.cell,
            np.vstack([self.Z, z]),
            np.vstack([self.Y, np.asarray(y, dtype=float)]),
            np.append(self.order, order_id),
            self.hyp,
            K_jit=K_new,
        )

    def with_replaced(self, slot: int, z, y, order_id: int) -> "LocalDictionary":
        """New dictionary with the sample at `slot` replaced in place."""
        z = np.asarray(z, dtype=float)
        Z = self.Z.copy()
        Y = self.Y.copy()
        order = self.order.copy()
        Z[slot] = z
        Y[slot] = np.asarray(y, dtype=float)
        order[slot] = order_id
        K_new = self.K_jit.copy()
        k = self.hyp.sf2[0] * correlation(Z, z[None, :], self.hyp.ls)[:, 0]
        K_new[slot, :] = k
        K_new[:, slot] = k
        K_new[slot, slot] = self.hyp.sf2[0] * (1.0 + JITTER_RATIO)
        return LocalDictionary(self.cell, Z, Y, order, self.hyp, K_jit=K_new)

    def predict(self, Zq) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean/variance at query rows, shapes (n, 3), from cached factors."""
        Zq = np.atleast_2d(np.asarray(Zq, dtype=float))
        c_star = correlation(self.Z, Zq, self.hyp.ls)  # (m, n)
        sf2 = self.hyp.sf2
        mean = np.empty((Zq.shape[0], N_OUTPUTS))
        var = np.empty((Zq.shape[0], N_OUTPUTS))
        for d in range(N_OUTPUTS):
            k_d = sf2[d] * c_star
            mean[:, d] = k_d.T @ self._alpha[:, d]
            var[:, d] = sf2[d] - np.sum(k_d * scipy.linalg.cho_solve(self._chol[d], k_d), axis=0)
        return mean, np.maximum(var, 0.0)

    def rebuilt_from_scratch(self) -> "LocalDictionary":
        """Same samples, all caches recomputed from raw data (for validation)."""
        return LocalDictionary(self.cell, self.Z.copy(), self.Y.copy(),
                               self.order.copy(), self.hyp)


def _admit(dictionary: LocalDictionary | None, z, y, cell, capacity: int,
           gain_threshold: float, hyp: Hyperparams, counter: int):
    """Shared admission/eviction logic; returns (outcome, new dictionary or None)."""
    if dictionary is None:
        gain = float(hyp.sf2[0])
        if gain <= gain_threshold:
            return UpdateOutcome(UpdateOutcome.REJECTED_LOW_GAIN, cell=cell, gain=gain), None
        new = LocalDictionary(cell, np.asarray(z, dtype=float)[None, :],
                              np.asarray(y, dtype=float)[None, :], [counter], hyp)
        return UpdateOutcome(UpdateOutcome.ADDED, cell=cell, gain=gain), new

    gain = dictionary.candidate_gain(z)
    if len(dictionary) < capacity:
        if gain > gain_threshold:
            new = dictionary.with_inserted(z, y, counter)
            return UpdateOutcome(UpdateOutcome.ADDED, cell=cell, gain=gain), new
        return UpdateOutcome(UpdateOutcome.REJECTED_LOW_GAIN, cell=cell, gain=gain), None

    min_gain = dictionary.gains.min()
    if gain > min_gain:
        # ties on the minimum gain evict the oldest sample
        ties = np.flatnonzero(dictionary.gains <= min_gain)
        slot = int(ties[np.argmin(dictionary.order[ties])])
        new = dictionary.with_replaced(slot, z, y, counter)
        return UpdateOutcome(UpdateOutcome.REPLACED, cell=cell, gain=gain, evicted=slot), new
    return UpdateOutcome(UpdateOutcome.REJECTED_LOW_GAIN, cell=cell, gain=gain), None


class DictionaryStore:
    """Cell-indexed collection of local dictionaries with streaming admission."""

    def __init__(self, hyp: Hyperparams, region: RegionSpec,
                 params: VehicleParams, tires: TireParams,
                 cfg: LearnerConfig | None = None):
        self.hyp = hyp
        self.region = region
        self.params = params
        self.tires = tires
        self.cfg = cfg or LearnerConfig()
        self.cells: dict[CellIndex, LocalDictionary] = {}
        self._counter = 0

    @property
    def gain_threshold(self) -> float:
        return self.cfg.gain_threshold_ratio * float(self.hyp.sf2[0])

    def try_insert(self, z, y, speed: float | None = None) -> UpdateOutcome:
        """Offer one sample to the learner; at most one dictionary is touched."""
        if speed is not None and speed <= self.cfg.speed_gate:
            return UpdateOutcome(UpdateOutcome.REJECTED_SPEED_GATE)
        violations = check_validity(z, self.params, self.tires, self.region)
        if violations:
            return UpdateOutcome(UpdateOutcome.REJECTED_INVALID, violations=tuple(violations))
        cell = cell_of(z, self.region)
        outcome, new = _admit(self.cells.get(cell), z, y, cell, self.cfg.capacity,
                              self.gain_threshold, self.hyp, self._counter)
        if new is not None:
            self.cells[cell] = new
            self._counter += 1
        return outcome

    def nonempty_cells(self) -> list[CellIndex]:
        """Cells holding at least one sample, in deterministic (sorted) order."""
        return sorted(self.cells.keys())

    def dictionaries(self) -> list[LocalDictionary]:
        """Snapshot of all dictionaries in deterministic order."""
        return [self.cells[c] for c in self.nonempty_cells()]

    def total_samples(self) -> int:
        return sum(len(d) for d in self.cells.values())

    def all_data(self) -> tuple[np.ndarray, np.ndarray]:
        """Concatenation of every dictionary's samples (Z, Y) in cell order."""
        dicts = self.dictionaries()
        if not dicts:
            d = self.hyp.n_features
            return np.zeros((0, d)), np.zeros((0, N_OUTPUTS))
        return (np.vstack([d.Z for d in dicts]), np.vstack([d.Y for d in dicts]))


class FlatStore:
    """Full-set baseline: the same admission rule over one undivided dictionary.

    Every update re-scores the entire training set, so the per-update cost
    grows cubically with the set size. Used for benchmarking only.
    """

    def __init__(self, hyp: Hyperparams, region: RegionSpec,
                 params: VehicleParams, tires: TireParams,
                 capacity_total: int = 4000,
                 gain_threshold_ratio: float = 1e-4,
                 speed_gate: float = 5.0):
        self.hyp = hyp
        self.region = region
        self.params = params
        self.tires = tires
        self.capacity_total = capacity_total
        self.gain_threshold_ratio = gain_threshold_ratio
        self.speed_gate = speed_gate
        self.dictionary: LocalDictionary | None = None
        self._counter = 0

    @property
    def gain_threshold(self) -> float:
        return self.gain_threshold_ratio * float(self.hyp.sf2[0])

    def try_insert(self, z, y, speed: float | None = None) -> UpdateOutcome:
        if speed is not None and speed <= self.speed_gate:
            return UpdateOutcome(UpdateOutcome.REJECTED_SPEED_GATE)
        violations = check_validity(z, self.params, self.tires, self.region)
        if violations:
            return UpdateOutcome(UpdateOutcome.REJECTED_INVALID, violations=tuple(violations))
        outcome, new = _admit(self.dictionary, z, y, None, self.capacity_total,
                              self.gain_threshold, self.hyp, self._counter)
        if new is not None:
            self.dictionary = new
            self._counter += 1
        return outcome

    def total_samples(self) -> int:
        return 0 if self.dictionary is None else len(self.dictionary)

    def seed(self, Z, Y) -> None:
        """Bulk-load samples without admission logic (benchmark setup only)."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        n = Z.shape[0]
        if n > self.capacity_total:
            raise ValueError("seed exceeds capacity_total")
        self.dictionary = LocalDictionary(None, Z, np.atleast_2d(Y),
                                          np.arange(n), self.hyp)
        self._counter = n


def save_store(store: DictionaryStore, path) -> None:
    """Write one line per sample: cell index, features, label (full precision)."""
    with open(path, "w") as fh:
        fh.write(f"# {STORE_SCHEMA}\n")
        for cell in store.nonempty_cells():
            d = store.cells[cell]
            for i in range(len(d)):
                z = " ".join(repr(float(v)) for v in d.Z[i])
                y = " ".join(repr(float(v)) for v in d.Y[i])
                fh.write(f"{cell[0]} {cell[1]} {cell[2]} {z} {y}\n")


def load_store(path, hyp: Hyperparams, region: RegionSpec,
               params: VehicleParams, tires: TireParams,
               cfg: LearnerConfig | None = None) -> DictionaryStore:
    """Rebuild a store from a record file, restoring exact dictionary contents."""
    store = DictionaryStore(hyp, region, params, tires, cfg)
    per_cell: dict[CellIndex, list] = {}
    with open(path) as fh:
        header = fh.readline().strip()
        if header != f"# {STORE_SCHEMA}":
            raise SchemaError(f"unexpected store header {header!r}")
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3 + hyp.n_features + N_OUTPUTS:
                raise SchemaError(f"malformed store record: {line!r}")
            cell = (int(parts[0]), int(parts[1]), int(parts[2]))
            vals = [float(p) for p in parts[3:]]
            per_cell.setdefault(cell, []).append(vals)
    counter = 0
    d = hyp.n_features
    for cell in sorted(per_cell):
        rows = np.asarray(per_cell[cell])
        n = rows.shape[0]
        store.cells[cell] = LocalDictionary(
            cell, rows[:, :d], rows[:, d:], np.arange(counter, counter + n), hyp)
        counter += n
    store._counter = counter
    return store
