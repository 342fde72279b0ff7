"""Judgment-free comparison of two rankings.

MED is computed for weighted-precision metrics, whose score is a sum of
per-position weights over relevant positions.  The score difference between
two rankings is then linear in the binary judgments, so each document can be
judged independently: relevant exactly when doing so widens the gap.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

from filtereval.metrics import MetricSpec

MAX_BRUTEFORCE_UNIVERSE = 20


class WeightProfile:
    """Per-rank weights w(i), i >= 1, of a weighted-precision metric."""

    def __init__(self, kind: str, p: float | None = None, cutoff: int | None = None):
        kind = kind.upper()
        if kind == "RBP":
            if p is None or not 0.0 < p < 1.0:
                raise ValueError("RBP needs p in (0, 1)")
        elif kind in ("DCG", "P"):
            if cutoff is None or cutoff < 1:
                raise ValueError(f"{kind} needs a positive cutoff")
        else:
            raise ValueError(f"MED supports RBP, DCG and P, not {kind}")
        self.kind = kind
        self.p = p
        self.cutoff = cutoff

    @classmethod
    def from_metric(cls, spec: MetricSpec) -> "WeightProfile":
        return cls(spec.kind, p=spec.p, cutoff=spec.cutoff)

    @classmethod
    def parse(cls, text: str) -> "WeightProfile":
        return cls.from_metric(MetricSpec.parse(text))

    def weight(self, i: int) -> float:
        if i < 1:
            raise ValueError("ranks start at 1")
        if self.kind == "RBP":
            return (1.0 - self.p) * self.p ** (i - 1)
        if i > self.cutoff:
            return 0.0
        if self.kind == "DCG":
            return 1.0 / math.log2(i + 1)
        return 1.0 / self.cutoff

    def weights(self, n: int) -> list[float]:
        return [self.weight(i) for i in range(1, n + 1)]

    def score(self, ranking: Sequence[Hashable], relevant: set) -> float:
        return sum(self.weight(i) for i, d in enumerate(ranking, 1) if d in relevant)

    def label(self) -> str:
        return f"RBP{self.p:g}" if self.kind == "RBP" else f"{self.kind}@{self.cutoff}"

    def __repr__(self):
        return f"WeightProfile({self.label()})"


@dataclass(frozen=True)
class MedConstraints:
    forced_relevant: frozenset = frozenset()
    forced_nonrelevant: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "forced_relevant", frozenset(self.forced_relevant))
        object.__setattr__(self, "forced_nonrelevant", frozenset(self.forced_nonrelevant))
        clash = self.forced_relevant & self.forced_nonrelevant
        if clash:
            raise ValueError(f"documents forced both relevant and non-relevant: {sorted(map(str, clash))}")


@dataclass(frozen=True)
class MedResult:
    value: float
    direction: str  # "a_over_b" or "b_over_a"
    witness: frozenset = field(default_factory=frozenset)


def _check_unique(seq: Sequence, name: str) -> None:
    if len(set(seq)) != len(seq):
        raise ValueError(f"ranking {name} contains duplicates")


def _weight_map(ranking: Sequence, profile: WeightProfile) -> dict:
    return {d: profile.weight(i) for i, d in enumerate(ranking, 1)}


def med(a: Sequence[Hashable], b: Sequence[Hashable], profile: WeightProfile,
        constraints: MedConstraints | None = None) -> MedResult:
    """Maximized effectiveness difference between rankings ``a`` and ``b``."""
    constraints = constraints or MedConstraints()
    _check_unique(a, "a")
    _check_unique(b, "b")
    wa = _weight_map(a, profile)
    wb = _weight_map(b, profile)
    forced_rel = constraints.forced_relevant
    forced_non = constraints.forced_nonrelevant

    universe = list(dict.fromkeys(itertools.chain(a, b)))
    base = 0.0  # M(a) - M(b) contributed by documents forced relevant
    witness_a, witness_b = set(), set()
    gain_a = gain_b = 0.0
    for d in universe:
        delta = wa.get(d, 0.0) - wb.get(d, 0.0)
        if d in forced_rel:
            base += delta
            witness_a.add(d)
            witness_b.add(d)
        elif d in forced_non:
            continue
        elif delta > 0:
            gain_a += delta
            witness_a.add(d)
        elif delta < 0:
            gain_b -= delta
            witness_b.add(d)
    # forced-relevant documents outside either ranking still belong to the judgment set
    extra = forced_rel - set(universe)
    witness_a |= extra
    witness_b |= extra
    a_over_b = base + gain_a
    b_over_a = gain_b - base
    if a_over_b >= b_over_a:
        return MedResult(max(a_over_b, 0.0), "a_over_b", frozenset(witness_a))
    return MedResult(max(b_over_a, 0.0), "b_over_a", frozenset(witness_b))


def med_bruteforce(a: Sequence[Hashable], b: Sequence[Hashable], profile: WeightProfile,
                   constraints: MedConstraints | None = None) -> float:
    """Enumerate every admissible judgment set; exponential, for testing only."""
    constraints = constraints or MedConstraints()
    universe = list(dict.fromkeys(itertools.chain(a, b)))
    if len(universe) > MAX_BRUTEFORCE_UNIVERSE:
        raise ValueError(f"universe of {len(universe)} documents is too large to enumerate")
    free = [d for d in universe if d not in constraints.forced_relevant and d not in constraints.forced_nonrelevant]
    fixed = set(constraints.forced_relevant)
    best = 0.0
    for mask in range(1 << len(free)):
        relevant = fixed | {d for j, d in enumerate(free) if mask >> j & 1}
        diff = abs(profile.score(a, relevant) - profile.score(b, relevant))
        if diff > best:
            best = diff
    return best


@dataclass(frozen=True)
class RboResult:
    base: float
    residual: float
    ext: float


def rbo(a: Sequence[Hashable], b: Sequence[Hashable], p: float) -> RboResult:
    """Rank-biased overlap evaluated to the depth of the shorter list.

    ``base`` is the truncated sum, ``residual`` the weight of unseen depths
    and ``ext`` extrapolates the agreement at the last evaluated depth.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    _check_unique(a, "a")
    _check_unique(b, "b")
    depth = min(len(a), len(b))
    seen_a, seen_b = set(), set()
    overlap_size = 0
    total = 0.0
    weight = 1.0
    for i in range(depth):
        x, y = a[i], b[i]
        if x == y:
            overlap_size += 1
        else:
            overlap_size += (x in seen_b) + (y in seen_a)
            seen_a.add(x)
            seen_b.add(y)
        total += weight * overlap_size / (i + 1)
        weight *= p
    base = (1.0 - p) * total
    residual = p ** depth
    ext = base + residual * (overlap_size / depth) if depth else 0.0
    return RboResult(base, residual, ext)


OVERLAP_VARIANTS = ("jaccard", "min_denominator", "coverage_a_in_b")


def overlap(a: Iterable[Hashable], b: Iterable[Hashable], variant: str = "jaccard") -> float:
    a, b = set(a), set(b)
    common = len(a & b)
    if variant == "jaccard":
        denom = len(a | b)
    elif variant == "min_denominator":
        denom = min(len(a), len(b))
    elif variant == "coverage_a_in_b":
        denom = len(a)
    else:
        raise ValueError(f"unknown overlap variant {variant!r}; expected one of {OVERLAP_VARIANTS}")
    if denom == 0:
        raise ValueError(f"empty-set: {variant} overlap undefined for these inputs")
    return common / denom
