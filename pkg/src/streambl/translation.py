"""Least-squares translation from bug-report topic space to changeset topic space."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_RIDGE = 1e-6


class DimensionMismatch(ValueError):
    pass


class SingularSystem(np.linalg.LinAlgError):
    pass


class PairKind(str, Enum):
    BUG_FIX = "bug-fix"
    COMMIT_LOG = "commit-log"


@dataclass(frozen=True)
class ReadinessPolicy:
    omega: float = 1.5

    def __post_init__(self):
        if self.omega < 1:
            raise ValueError("omega must be >= 1")

    def threshold(self, k_br: int, k_cs: int) -> int:
        return math.ceil(self.omega * max(k_br, k_cs))


@dataclass
class PairStore:
    """Training rows (B, A) for the translation matrix.

    ``window`` caps retention to the most recent rows of each kind; None
    keeps everything.
    """

    k_br: int
    k_cs: int
    rows_b: list[np.ndarray] = field(default_factory=list)
    rows_a: list[np.ndarray] = field(default_factory=list)
    kinds: list[PairKind] = field(default_factory=list)
    window: int | None = None

    def __len__(self) -> int:
        return len(self.kinds)

    def count(self, kind: PairKind) -> int:
        return sum(1 for k in self.kinds if k == kind)

    def record(self, b, a, kind: PairKind = PairKind.BUG_FIX) -> None:
        b = np.asarray(b, dtype=np.float64)
        a = np.asarray(a, dtype=np.float64)
        if b.shape != (self.k_br,) or a.shape != (self.k_cs,):
            raise DimensionMismatch(
                f"expected b of length {self.k_br} and a of length {self.k_cs}, got {b.shape} and {a.shape}")
        self.rows_b.append(b)
        self.rows_a.append(a)
        self.kinds.append(PairKind(kind))
        if self.window is not None and self.count(PairKind(kind)) > self.window:
            drop = self.kinds.index(PairKind(kind))
            del self.rows_b[drop], self.rows_a[drop], self.kinds[drop]

    def training_rows(self, policy: ReadinessPolicy) -> tuple[np.ndarray, np.ndarray]:
        """Rows used for fitting.

        Commit-log pairs only pad the set while real bug-fix pairs are below
        the readiness threshold.
        """
        real = self.count(PairKind.BUG_FIX) >= policy.threshold(self.k_br, self.k_cs)
        idx = [i for i, k in enumerate(self.kinds) if not real or k == PairKind.BUG_FIX]
        if not idx:
            return np.empty((0, self.k_br)), np.empty((0, self.k_cs))
        return (np.vstack([self.rows_b[i] for i in idx]),
                np.vstack([self.rows_a[i] for i in idx]))

    def matrices(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.kinds:
            return np.empty((0, self.k_br)), np.empty((0, self.k_cs))
        return np.vstack(self.rows_b), np.vstack(self.rows_a)


def record_pair(store: PairStore, b, a, kind: PairKind = PairKind.BUG_FIX) -> PairStore:
    store.record(b, a, kind)
    return store


def is_ready(store: PairStore | int, policy: ReadinessPolicy, k_br: int, k_cs: int) -> bool:
    n = store if isinstance(store, int) else len(store)
    return n >= policy.threshold(k_br, k_cs)


@dataclass
class TranslationMatrix:
    T: np.ndarray
    fitted_on: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.T.shape


def fit(B: np.ndarray, A: np.ndarray, ridge: float = DEFAULT_RIDGE) -> TranslationMatrix:
    """Solve ``(B'B + ridge I) T = B'A``."""
    B = np.asarray(B, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    if B.ndim != 2 or A.ndim != 2 or B.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"B {B.shape} and A {A.shape} need the same number of rows")
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    gram = B.T @ B
    if ridge > 0:
        gram[np.diag_indices_from(gram)] += ridge
    elif np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise SingularSystem(f"B'B is rank deficient ({B.shape[0]} rows, {B.shape[1]} columns)")
    try:
        T = np.linalg.solve(gram, B.T @ A)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    return TranslationMatrix(T, fitted_on=B.shape[0])


def fit_store(store: PairStore, policy: ReadinessPolicy, ridge: float = DEFAULT_RIDGE) -> TranslationMatrix:
    B, A = store.training_rows(policy)
    try:
        return fit(B, A, ridge)
    except SingularSystem:
        if ridge > 0:
            raise
        log.warning("rank-deficient pair matrix, refitting with ridge %g", DEFAULT_RIDGE)
        return fit(B, A, DEFAULT_RIDGE)


def residual(B: np.ndarray, A: np.ndarray, T: np.ndarray) -> float:
    r = B @ T - A
    return float(np.sum(r * r))


def translate(tm: TranslationMatrix | np.ndarray, b) -> tuple[np.ndarray, bool]:
    """Map a bug-report distribution into changeset topic space.

    Negative entries are clamped before renormalizing. Returns the
    distribution and a flag that is True when everything clamped to zero
    and the uniform fallback was used.
    """
    T = tm.T if isinstance(tm, TranslationMatrix) else np.asarray(tm)
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (T.shape[0],):
        raise DimensionMismatch(f"b has length {b.shape}, T expects {T.shape[0]}")
    out = np.clip(b @ T, 0.0, None)
    total = out.sum()
    if total <= 0 or not np.isfinite(total):
        log.warning("translated distribution degenerate, using uniform")
        return np.full(T.shape[1], 1.0 / T.shape[1]), True
    return out / total, False
