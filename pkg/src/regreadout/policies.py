"""Control strategies for rapid register readout.

Three families of permutation control are supported on top of the trivial
no-control baseline: closed-loop Hamming ordering (sort the populations
onto the hypercube so measurement distinguishes the leading candidates as
fast as possible), open-loop uniformly random permutations resampled every
step, and user-supplied deterministic cycles.  The module also provides
retrodiction: undoing the accumulated control frame to name the basis
state the uncontrolled register would have collapsed to.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .registers import (
    BasisIndex,
    DiagonalState,
    Permutation,
    invert,
)

POLICY_KINDS = ("none", "h_ordering", "random_permutation", "fixed_cycle")


@dataclass(frozen=True)
class ControlPolicy:
    """Named control protocol, plus the cycle for kind 'fixed_cycle'."""

    kind: str
    cycle: tuple[Permutation, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "fixed_cycle":
            if not self.cycle:
                raise ValueError("fixed_cycle policy needs at least one permutation")
            dims = {p.dimension for p in self.cycle}
            if len(dims) != 1:
                raise ValueError("cycle permutations must share one dimension")
        elif self.cycle:
            raise ValueError(f"policy kind {self.kind!r} takes no cycle")


def no_control() -> ControlPolicy:
    return ControlPolicy("none")


def h_ordering_policy() -> ControlPolicy:
    return ControlPolicy("h_ordering")


def random_permutation_policy() -> ControlPolicy:
    return ControlPolicy("random_permutation")


def fixed_cycle_policy(cycle) -> ControlPolicy:
    return ControlPolicy("fixed_cycle", tuple(cycle))


@lru_cache(maxsize=None)
def h_order_targets(n: int) -> np.ndarray:
    """Vertex visit order for Hamming ordering on n qubits.

    The largest population goes to |0...0>, the second largest to |1...1>,
    and the rest to vertices of increasing Hamming distance from |1...1>,
    ties broken by ascending index.  Read-only array of length 2^n.
    """
    d = 1 << n
    rest = sorted(range(1, d), key=lambda v: (n - v.bit_count(), v))
    targets = np.array([0] + rest, dtype=np.int64)
    targets.setflags(write=False)
    return targets


def h_order(state: DiagonalState) -> Permutation:
    """Permutation that Hamming-orders the state.

    Populations are ranked in descending order (ties by current index,
    ascending) and sent to h_order_targets(n) in rank order.  A state that
    is already Hamming-ordered with distinct populations maps to the
    identity.
    """
    order = np.argsort(-state.probs, kind="stable")
    image = np.empty_like(order)
    image[order] = h_order_targets(state.n)
    return Permutation(image)


def policy_step(
    policy: ControlPolicy,
    state: DiagonalState,
    step_index: int,
    rng: np.random.Generator,
) -> Permutation:
    """Permutation the policy applies at the start of this step.

    Only 'h_ordering' looks at the state; 'random_permutation' consumes
    the control stream; 'fixed_cycle' indexes its cycle by step number.
    The permutation sequence of the open-loop policies is therefore
    independent of the measurement record.
    """
    d = state.probs.size
    if policy.kind == "none":
        return Permutation.identity(d)
    if policy.kind == "h_ordering":
        return h_order(state)
    if policy.kind == "random_permutation":
        return Permutation(rng.permutation(d))
    perms = policy.cycle
    if perms[0].dimension != d:
        raise ValueError("cycle permutation dimension does not match the state")
    return perms[step_index % len(perms)]


@dataclass(frozen=True)
class ControlLog:
    """Accumulated control frame: composition of all applied permutations,
    most recent outermost."""

    cumulative: Permutation


def retrodict(final_index: BasisIndex, log: ControlLog) -> BasisIndex:
    """Undo the control frame to recover the uncontrolled outcome.

    If the register ends up concentrated at final_index after the logged
    permutations, the population started (and, absent control, would have
    collapsed) at invert(cumulative).image[final_index].
    """
    return int(invert(log.cumulative).image[final_index])


def read_cycle_file(path, dimension: int | None = None) -> list[Permutation]:
    """Parse a cycle file: one permutation per line, space-separated image.

    Blank lines and lines starting with '#' are skipped.  Raises
    ValueError naming the offending line on malformed input.
    """
    perms: list[Permutation] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                image = np.array([int(tok) for tok in line.split()], dtype=np.int64)
                perm = Permutation(image)
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
            if dimension is not None and perm.dimension != dimension:
                raise ValueError(
                    f"{path}: line {lineno}: permutation has dimension "
                    f"{perm.dimension}, expected {dimension}"
                )
            perms.append(perm)
    if not perms:
        raise ValueError(f"{path}: no permutations found")
    return perms
