"""Basis conventions, observable eigenvalues, Hamming geometry, and
permutation algebra for an n-qubit register measured in the logical basis.

A basis index i in [0, 2^n) encodes the bit string |q1 q2 ... qn> with
qubit 1 stored in the most significant bit, so qubit r sits at bit
position n - r.  Register states handled by this package stay diagonal
in the logical basis and are represented by their probability vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# Basis states are plain integers in [0, 2**n).
BasisIndex = int

NORMALIZATION_TOL = 1e-10


def hamming_distance(a: BasisIndex, b: BasisIndex) -> int:
    """Number of bit flips separating two basis indices."""
    if a < 0 or b < 0:
        raise ValueError("basis indices must be nonnegative")
    return (a ^ b).bit_count()


def hamming_weight(i: BasisIndex) -> int:
    """Number of set bits (qubits in state 1)."""
    return i.bit_count()


@dataclass(frozen=True)
class ZObservable:
    """z observable of one qubit in an n-qubit register.

    Unshifted eigenvalues are +1 (bit 0) and -1 (bit 1); the shifted
    variant subtracts the identity, giving {0, -2}.  The conditional
    dynamics are invariant under the shift, but several closed forms are
    simplest in the shifted convention.
    """

    n: int
    qubit: int
    shifted: bool = False

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("register needs at least one qubit")
        if not 1 <= self.qubit <= self.n:
            raise ValueError(
                f"qubit {self.qubit} out of range for an n={self.n} register"
            )


def z_eigenvalue(obs: ZObservable, i: BasisIndex) -> float:
    """Eigenvalue of the observable on basis index i."""
    if not 0 <= i < (1 << obs.n):
        raise ValueError(f"basis index {i} out of range for n={obs.n}")
    bit = (i >> (obs.n - obs.qubit)) & 1
    value = 1.0 - 2.0 * bit
    return value - 1.0 if obs.shifted else value


@lru_cache(maxsize=None)
def z_table(n: int, shifted: bool = False) -> np.ndarray:
    """(n, 2^n) eigenvalue table; row r-1 belongs to qubit r. Read-only."""
    d = 1 << n
    bits = (np.arange(d)[None, :] >> (n - 1 - np.arange(n)[:, None])) & 1
    table = 1.0 - 2.0 * bits
    if shifted:
        table = table - 1.0
    table.setflags(write=False)
    return table


@dataclass(frozen=True)
class DiagonalState:
    """Register state diagonal in the logical basis: 2^n probabilities."""

    n: int
    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=float)  # copy: value semantics
        object.__setattr__(self, "probs", probs)
        d = 1 << self.n
        if probs.shape != (d,):
            raise ValueError(f"expected {d} probabilities, got shape {probs.shape}")
        if not np.all(np.isfinite(probs)):
            raise ValueError("probabilities must be finite")
        if np.any(probs < 0.0):
            raise ValueError("probabilities must be nonnegative")
        if abs(float(probs.sum()) - 1.0) > NORMALIZATION_TOL:
            raise ValueError("probabilities must sum to 1 within 1e-10")
        probs.setflags(write=False)

    @classmethod
    def maximally_mixed(cls, n: int) -> "DiagonalState":
        d = 1 << n
        return cls(n, np.full(d, 1.0 / d))

    @classmethod
    def pure(cls, n: int, index: BasisIndex) -> "DiagonalState":
        d = 1 << n
        if not 0 <= index < d:
            raise ValueError(f"basis index {index} out of range for n={n}")
        probs = np.zeros(d)
        probs[index] = 1.0
        return cls(n, probs)

    def argmax_index(self) -> BasisIndex:
        return int(np.argmax(self.probs))

    def infidelity(self) -> float:
        """One minus the largest probability.

        Computed as the sum of the non-maximal entries rather than as
        1 - max, so it stays accurate when the maximum is within rounding
        of 1 and the remainder is far below machine epsilon.
        """
        rest = self.probs.copy()
        rest[int(np.argmax(rest))] = 0.0
        return float(rest.sum())


def expectation_z(state: DiagonalState, obs: ZObservable) -> float:
    """Expectation value of a single-qubit z observable."""
    if obs.n != state.n:
        raise ValueError("observable and state act on different register sizes")
    row = z_table(state.n, obs.shifted)[obs.qubit - 1]
    return float(row @ state.probs)


@dataclass(frozen=True)
class Permutation:
    """Bijection on basis indices stored as an explicit image array.

    image[i] is the destination slot of the population currently at
    index i, so applying p to a state gives out.probs[p.image[i]] =
    state.probs[i].
    """

    image: np.ndarray

    def __post_init__(self) -> None:
        image = np.array(self.image, dtype=np.int64)
        object.__setattr__(self, "image", image)
        d = image.size
        if image.ndim != 1 or d == 0:
            raise ValueError("image must be a nonempty 1-d integer array")
        counts = np.bincount(image, minlength=d) if image.min() >= 0 else None
        if counts is None or image.max() >= d or np.any(counts != 1):
            raise ValueError("image must be a bijection on [0, d)")
        image.setflags(write=False)

    @property
    def dimension(self) -> int:
        return int(self.image.size)

    @classmethod
    def identity(cls, d: int) -> "Permutation":
        return cls(np.arange(d))


def compose(p: Permutation, q: Permutation) -> Permutation:
    """Permutation acting as q first, then p."""
    if p.dimension != q.dimension:
        raise ValueError("cannot compose permutations of different dimensions")
    return Permutation(p.image[q.image])


def invert(p: Permutation) -> Permutation:
    inv = np.empty(p.dimension, dtype=np.int64)
    inv[p.image] = np.arange(p.dimension)
    return Permutation(inv)


def apply_permutation(state: DiagonalState, p: Permutation) -> DiagonalState:
    """Relabel the register populations according to p."""
    if p.dimension != state.probs.size:
        raise ValueError("permutation dimension does not match the state")
    out = np.empty_like(state.probs)
    out[p.image] = state.probs
    return DiagonalState(state.n, out)


def sample_uniform_permutation(rng: np.random.Generator, d: int) -> Permutation:
    """Uniformly random permutation of d slots (Fisher-Yates, unbiased)."""
    if d < 1:
        raise ValueError("dimension must be positive")
    return Permutation(rng.permutation(d))


def leading_rotation(d: int, k: int = 3) -> Permutation:
    """Cycle the populations of the first k basis slots, identity elsewhere.

    The population at slot j moves to slot j - 1 (mod k) for j < k, so for
    d=4, k=3 the image array is [2, 0, 1, 3]: a state diag(a, b, c, e)
    becomes diag(b, c, a, e).
    """
    if not 2 <= k <= d:
        raise ValueError("need 2 <= k <= d")
    image = np.arange(d)
    image[:k] = (image[:k] - 1) % k
    return Permutation(image)
