"""Optical orthogonal codes for incoherent OOK-CDMA.

A code is a set of ``weight`` mark positions on a ring of ``length`` chips.
Families are built so that every cyclic auto-correlation sidelobe and every
cyclic cross-correlation value stays at or below ``max_correlation``, which
is what lets many transmitters share one wavelength with chip-level
detection.  The module also covers spreading/despreading, synchronous
offset assignment for interference-free downlinks, code-subset coloring of
a cellular grid, and the resulting network capacity bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InfeasibleError, ParameterError

__all__ = [
    "OocCode",
    "OocFamily",
    "ChipSequence",
    "CapacityPlan",
    "johnson_bound",
    "correlation",
    "correlation_spectrum",
    "generate_family",
    "spread",
    "despread_chip_level",
    "synchronous_offsets",
    "assign_code_subsets",
    "hex_grid",
    "network_capacity",
]


def johnson_bound(length: int, weight: int, max_correlation: int) -> int:
    """Upper bound on family size, as nested floors.

    floor((1/W) * floor((F-1)/(W-1) * ... * floor((F-rho)/(W-rho)) ...))
    """
    _check_code_params(length, weight, max_correlation)
    value = 1
    for i in range(max_correlation, 0, -1):
        value = (length - i) * value // (weight - i)
    return value // weight


def _check_code_params(length, weight, max_correlation):
    if length < 2 or weight < 1 or weight > length:
        raise ParameterError(f"invalid code shape: length={length} weight={weight}")
    if not 1 <= max_correlation < weight:
        raise ParameterError(
            f"max_correlation must be in [1, weight-1], got {max_correlation}"
        )


@dataclass(frozen=True)
class OocCode:
    """A single signature: sorted mark positions with correlation budget."""

    length: int
    weight: int
    max_correlation: int
    marks: tuple[int, ...]

    def __post_init__(self):
        _check_code_params(self.length, self.weight, self.max_correlation)
        marks = tuple(sorted(int(m) for m in self.marks))
        if len(marks) != self.weight or len(set(marks)) != self.weight:
            raise ParameterError("marks must be distinct and match the weight")
        if marks[0] < 0 or marks[-1] >= self.length:
            raise ParameterError("marks must lie in [0, length)")
        object.__setattr__(self, "marks", marks)
        peak = max_autocorrelation(self)
        if peak > self.max_correlation:
            raise ParameterError(
                f"autocorrelation sidelobe {peak} exceeds budget {self.max_correlation}"
            )

    def chip_vector(self) -> np.ndarray:
        chips = np.zeros(self.length, dtype=np.int8)
        chips[list(self.marks)] = 1
        return chips

    def shifted_marks(self, shift: int) -> tuple[int, ...]:
        return tuple(sorted((m + shift) % self.length for m in self.marks))


def correlation_spectrum(a: OocCode, b: OocCode) -> np.ndarray:
    """Cyclic correlation of b against a for every shift, via mark differences.

    spectrum[s] = |{(i, j): (b.marks[j] - a.marks[i]) mod F == s}|
    """
    if a.length != b.length:
        raise ParameterError("codes must share the chip-frame length")
    am = np.asarray(a.marks)
    bm = np.asarray(b.marks)
    diffs = (bm[None, :] - am[:, None]) % a.length
    return np.bincount(diffs.ravel(), minlength=a.length)


def correlation(a: OocCode, b: OocCode, shift: int) -> int:
    """Overlap count between a and b cyclically shifted by ``shift`` chips."""
    return int(correlation_spectrum(a, b)[shift % a.length])


def max_autocorrelation(code: OocCode) -> int:
    """Largest off-peak cyclic autocorrelation value."""
    marks = np.asarray(code.marks)
    diffs = (marks[None, :] - marks[:, None]) % code.length
    spectrum = np.bincount(diffs.ravel(), minlength=code.length)
    spectrum[0] = 0  # zero shift is the main peak, not a sidelobe
    return int(spectrum.max())


def max_crosscorrelation(a: OocCode, b: OocCode) -> int:
    return int(correlation_spectrum(a, b).max())


@dataclass
class OocFamily:
    """A set of mutually compatible codes plus the search outcome flag."""

    codes: list[OocCode]
    shortfall: bool = False

    def __post_init__(self):
        if not self.codes:
            raise ParameterError("family must hold at least one code")
        first = self.codes[0]
        for c in self.codes:
            if (c.length, c.weight, c.max_correlation) != (
                first.length,
                first.weight,
                first.max_correlation,
            ):
                raise ParameterError("family members must share (length, weight, budget)")

    def __len__(self):
        return len(self.codes)

    def __iter__(self):
        return iter(self.codes)

    def __getitem__(self, i):
        return self.codes[i]

    @property
    def length(self) -> int:
        return self.codes[0].length

    @property
    def weight(self) -> int:
        return self.codes[0].weight

    @property
    def max_correlation(self) -> int:
        return self.codes[0].max_correlation

    def validate(self) -> None:
        """Exhaustive pairwise check of every shift; raises on any violation."""
        rho = self.max_correlation
        for c in self.codes:
            if max_autocorrelation(c) > rho:
                raise ParameterError(f"autocorrelation violation in {c.marks}")
        for i in range(len(self.codes)):
            for j in range(i + 1, len(self.codes)):
                peak = max_crosscorrelation(self.codes[i], self.codes[j])
                if peak > rho:
                    raise ParameterError(
                        f"crosscorrelation {peak} > {rho} between codes {i} and {j}"
                    )

    def to_text(self) -> str:
        """Header line 'F W rho', then one code per line as mark indices."""
        lines = [f"{self.length} {self.weight} {self.max_correlation}"]
        for c in self.codes:
            lines.append(" ".join(str(m) for m in c.marks))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "OocFamily":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ParameterError("empty family text")
        try:
            length, weight, rho = (int(tok) for tok in lines[0].split())
        except ValueError as exc:
            raise ParameterError(f"bad family header: {lines[0]!r}") from exc
        codes = []
        for ln in lines[1:]:
            marks = tuple(int(tok) for tok in ln.split())
            codes.append(OocCode(length, weight, rho, marks))
        family = cls(codes)
        family.validate()
        return family


def generate_family(
    length: int,
    weight: int,
    max_correlation: int,
    max_count: int,
    seed: int = 0,
    attempt_budget: int = 20000,
) -> OocFamily:
    """Greedy randomized family search with backtracking.

    Random candidate codes (first mark pinned at chip 0, the rest drawn
    without replacement) are accepted when they clear the auto budget and
    every pairwise cross budget against the accepted set.  After a run of
    rejections the most recent acceptance is dropped and the search
    continues, so a bad early pick cannot wedge the family.  Deterministic
    for a given seed.  If the budget runs out short of ``max_count`` the
    partial family is returned with ``shortfall=True``.
    """
    _check_code_params(length, weight, max_correlation)
    if max_count < 1:
        raise ParameterError("max_count must be positive")
    rng = np.random.default_rng(seed)
    accepted: list[OocCode] = []
    stall = 0
    stall_limit = max(200, attempt_budget // 50)
    attempts = 0
    while len(accepted) < max_count and attempts < attempt_budget:
        attempts += 1
        rest = rng.choice(np.arange(1, length), size=weight - 1, replace=False)
        marks = (0, *sorted(int(m) for m in rest))
        try:
            cand = OocCode(length, weight, max_correlation, marks)
        except ParameterError:
            stall += 1
        else:
            if all(
                max_crosscorrelation(cand, prev) <= max_correlation
                for prev in accepted
            ):
                accepted.append(cand)
                stall = 0
                continue
            stall += 1
        if stall > stall_limit and accepted:
            # backtrack: the newest member is the most likely blocker
            accepted.pop()
            stall = 0
    if not accepted:
        raise InfeasibleError(
            f"no ({length},{weight},{max_correlation}) code found within budget"
        )
    return OocFamily(accepted, shortfall=len(accepted) < max_count)


@dataclass(frozen=True)
class ChipSequence:
    """Chip-rate binary frame stream produced by spreading."""

    chips: np.ndarray
    chip_time: float

    def __post_init__(self):
        object.__setattr__(self, "chips", np.asarray(self.chips, dtype=np.int8))


def spread(bits: Sequence[int], code: OocCode, bit_time: float = 1.0) -> ChipSequence:
    """OOK spreading: bit 1 emits the code's marks, bit 0 stays dark."""
    bits = np.asarray(bits, dtype=np.int8)
    if bits.ndim != 1 or np.any((bits != 0) & (bits != 1)):
        raise ParameterError("bits must be a flat 0/1 sequence")
    frames = np.zeros((bits.size, code.length), dtype=np.int8)
    frames[bits == 1] = code.chip_vector()
    return ChipSequence(frames.ravel(), chip_time=bit_time / code.length)


def despread_chip_level(frame: np.ndarray, code: OocCode, threshold: float) -> int:
    """AND-rule chip-level decision: 1 iff every mark chip exceeds threshold."""
    frame = np.asarray(frame, dtype=float)
    if frame.shape != (code.length,):
        raise ParameterError("frame must hold exactly one code period")
    return int(np.all(frame[list(code.marks)] > threshold))


def synchronous_offsets(family: OocFamily, count: int | None = None) -> list[int]:
    """Cyclic shifts making the first ``count`` codes chip-disjoint at lag zero.

    A greedy first-fit over shifts succeeds whenever
    count < length/weight**2 + 1, because each already-placed mark can
    collide with each mark of the next code at exactly one shift.  This is
    what removes multiple-access interference on a synchronized downlink.
    """
    count = len(family) if count is None else count
    if count > len(family):
        raise ParameterError("not enough codes in the family")
    length = family.length
    used: set[int] = set()
    offsets = []
    for code in family.codes[:count]:
        placed = False
        for shift in range(length):
            marks = set(code.shifted_marks(shift))
            if not (marks & used):
                used |= marks
                offsets.append(shift)
                placed = True
                break
        if not placed:
            raise InfeasibleError(
                "no chip-disjoint shift assignment exists; need "
                f"count < length/weight^2 + 1 = {length / family.weight**2 + 1:.2f}, "
                f"got count={count}"
            )
    return offsets


def hex_grid(rings: int) -> tuple[list[tuple[int, int]], dict[tuple[int, int], set]]:
    """Axial-coordinate hexagonal cell cluster with its adjacency map.

    rings=0 is a single cell, rings=1 the 7-cell flower, and so on.
    """
    if rings < 0:
        raise ParameterError("rings must be nonnegative")
    cells = [
        (q, r)
        for q in range(-rings, rings + 1)
        for r in range(max(-rings, -q - rings), min(rings, -q + rings) + 1)
    ]
    cell_set = set(cells)
    steps = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)]
    adjacency = {
        c: {(c[0] + dq, c[1] + dr) for dq, dr in steps if (c[0] + dq, c[1] + dr) in cell_set}
        for c in cells
    }
    return cells, adjacency


def assign_code_subsets(adjacency: dict, n_subsets: int = 3) -> dict:
    """Proper coloring of the cell graph so neighbors never share a subset.

    Exact backtracking in sorted node order, preferring the lowest subset
    index, so the assignment is deterministic.  Raises InfeasibleError when
    the graph is not ``n_subsets``-colorable.
    """
    if n_subsets < 1:
        raise ParameterError("need at least one subset")
    nodes = sorted(adjacency)
    assignment: dict = {}

    def place(i: int) -> bool:
        if i == len(nodes):
            return True
        node = nodes[i]
        taken = {assignment[m] for m in adjacency[node] if m in assignment}
        for color in range(n_subsets):
            if color not in taken:
                assignment[node] = color
                if place(i + 1):
                    return True
                del assignment[node]
        return False

    if not place(0):
        raise InfeasibleError(f"cell graph is not {n_subsets}-colorable")
    return assignment


@dataclass(frozen=True)
class CapacityPlan:
    """Inputs of the cell-capacity computation.

    scheme 'ocdma-reuse' splits one code family over a 3-coloring of the
    cells; 'wdm-ocdma' gives every cell in a 3-colored cluster its own
    wavelength out of ``n_wavelengths``, reusing the full family per cell.
    """

    n_cells: int
    obts_per_cell: int
    scheme: str = "ocdma-reuse"
    n_wavelengths: int = 1

    def __post_init__(self):
        if self.n_cells < 1 or self.obts_per_cell < 1:
            raise ParameterError("cell counts must be positive")
        if self.scheme not in ("ocdma-reuse", "wdm-ocdma"):
            raise ParameterError(f"unknown scheme {self.scheme!r}")
        if self.n_wavelengths < 1:
            raise ParameterError("n_wavelengths must be positive")


def network_capacity(plan: CapacityPlan, family_size: int) -> int:
    """Number of simultaneous users supportable under the reuse plan."""
    if family_size < 0:
        raise ParameterError("family_size must be nonnegative")
    if plan.scheme == "ocdma-reuse":
        return (family_size // 3) * plan.obts_per_cell
    return (plan.n_wavelengths // 3) * family_size * plan.obts_per_cell
