"""Indexing collections and their measure arithmetic.

Two concrete collections are supported: axis-aligned rectangles anchored at
the origin of R^N_+ under Lebesgue measure, and lower sets of a finite
weighted grid.  Both are immutable; every operation here is a pure function,
so values can be shared freely across threads.

All measures are finite by construction (bounded rectangles, finite grids),
which is exactly the regime in which the fractional kernel built on the
symmetric-difference pseudo-metric is positive semidefinite for H <= 1/2.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

# Relative tolerance for clamping small negative measures produced by
# floating cancellation; anything more negative is a real bug.
NEG_MEASURE_TOL = 1e-12

REGION_MAX_SUBTRACTED = 20
EXPANSION_MAX_SUBTRACTED = 12


class ContextError(ValueError):
    """Sets from different kinds or measure contexts were combined."""


class SchemaError(ValueError):
    """A family/flow JSON document does not match the documented schema."""


class ComplexityError(ValueError):
    """An operation would enumerate too many subset intersections."""


class MeasureConsistencyError(ArithmeticError):
    """A derived measure came out negative beyond floating noise."""


def _clamp(value: float, scale: float) -> float:
    if value >= 0.0:
        return float(value)
    if value >= -NEG_MEASURE_TOL * max(scale, 1.0):
        return 0.0
    raise MeasureConsistencyError(
        f"derived measure {value!r} is negative beyond tolerance (scale {scale!r})"
    )


@dataclass(frozen=True)
class Rectangle:
    """The rectangle [0, corner] in R^N_+ with Lebesgue measure."""

    corner: tuple

    def __post_init__(self):
        corner = tuple(float(c) for c in self.corner)
        if not corner:
            raise ValueError("rectangle needs at least one coordinate")
        if any(c < 0 or not np.isfinite(c) for c in corner):
            raise ValueError(f"rectangle corner must be finite and nonnegative: {corner}")
        object.__setattr__(self, "corner", corner)

    @property
    def dim(self) -> int:
        return len(self.corner)

    @property
    def measure(self) -> float:
        return float(np.prod(self.corner))

    def intersection(self, other: "Rectangle") -> "Rectangle":
        _check_context(self, other)
        return Rectangle(tuple(min(a, b) for a, b in zip(self.corner, other.corner)))

    def contains(self, other: "Rectangle") -> bool:
        _check_context(self, other)
        return all(b <= a for a, b in zip(self.corner, other.corner))

    def scaled(self, g: float) -> "Rectangle":
        if g < 0:
            raise ValueError("scale factor must be nonnegative")
        return Rectangle(tuple(g * c for c in self.corner))

    def key(self) -> bytes:
        return np.asarray(self.corner, dtype=np.float64).tobytes()

    def context_key(self) -> bytes:
        return b"rect:%d" % self.dim


class GridLowerSet:
    """A lower set of a finite weighted grid.

    The ground is a grid of cells with nonnegative weights (a finite
    measure); membership is a boolean mask that must be closed downward in
    the componentwise cell order: if a cell is in, every cell dominated by
    it is in.
    """

    __slots__ = ("weights", "mask", "_ctx")

    def __init__(self, weights, mask):
        weights = np.ascontiguousarray(weights, dtype=np.float64)
        mask = np.ascontiguousarray(mask, dtype=bool)
        if weights.shape != mask.shape:
            raise ValueError(
                f"weights shape {weights.shape} and mask shape {mask.shape} differ"
            )
        if weights.ndim == 0:
            raise ValueError("grid must have at least one axis")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("grid weights must be finite and nonnegative")
        for axis in range(mask.ndim):
            lead = [slice(None)] * mask.ndim
            lag = [slice(None)] * mask.ndim
            lead[axis] = slice(1, None)
            lag[axis] = slice(None, -1)
            if np.any(mask[tuple(lead)] & ~mask[tuple(lag)]):
                raise ValueError(
                    f"mask is not a lower set: a cell's predecessor along axis {axis} is missing"
                )
        weights.setflags(write=False)
        mask.setflags(write=False)
        self.weights = weights
        self.mask = mask
        self._ctx = b"grid:" + hashlib.sha256(
            repr(weights.shape).encode() + weights.tobytes()
        ).digest()

    @property
    def dim(self) -> int:
        return self.weights.ndim

    @property
    def measure(self) -> float:
        return float(self.weights[self.mask].sum())

    def intersection(self, other: "GridLowerSet") -> "GridLowerSet":
        _check_context(self, other)
        return GridLowerSet(self.weights, self.mask & other.mask)

    def contains(self, other: "GridLowerSet") -> bool:
        _check_context(self, other)
        return bool(np.all(other.mask <= self.mask))

    def key(self) -> bytes:
        return np.packbits(self.mask.reshape(-1)).tobytes()

    def context_key(self) -> bytes:
        return self._ctx

    def __eq__(self, other):
        return (
            isinstance(other, GridLowerSet)
            and self._ctx == other._ctx
            and np.array_equal(self.mask, other.mask)
        )

    def __hash__(self):
        return hash((self._ctx, self.key()))

    def __repr__(self):
        return f"GridLowerSet(shape={self.weights.shape}, measure={self.measure:.6g})"


IndexedSet = Union[Rectangle, GridLowerSet]


def _check_context(a: IndexedSet, b: IndexedSet) -> None:
    if type(a) is not type(b) or a.context_key() != b.context_key():
        raise ContextError(f"sets do not share a measure context: {a!r} vs {b!r}")


def measure(s: IndexedSet) -> float:
    return s.measure


def intersection(a: IndexedSet, b: IndexedSet) -> IndexedSet:
    return a.intersection(b)


def intersection_measure(a: IndexedSet, b: IndexedSet) -> float:
    return a.intersection(b).measure


def difference_measure(a: IndexedSet, b: IndexedSet) -> float:
    """m(a \\ b)."""
    return _clamp(a.measure - intersection_measure(a, b), a.measure)


def symdiff_measure(a: IndexedSet, b: IndexedSet) -> float:
    """m(a symdiff b) = m(a) + m(b) - 2 m(a & b), clamped against noise."""
    ma, mb = a.measure, b.measure
    return _clamp(ma + mb - 2.0 * intersection_measure(a, b), ma + mb)


@dataclass(frozen=True)
class SetFamily:
    """An ordered family of sets sharing one kind and measure context."""

    sets: tuple
    labels: Optional[tuple] = None
    allow_duplicates: bool = False

    def __post_init__(self):
        sets = tuple(self.sets)
        if not sets:
            raise ValueError("family must contain at least one set")
        for s in sets[1:]:
            _check_context(sets[0], s)
        if not self.allow_duplicates:
            seen = set()
            for i, s in enumerate(sets):
                k = s.key()
                if k in seen:
                    raise ValueError(
                        f"duplicate set at position {i}; pass allow_duplicates=True to permit"
                    )
                seen.add(k)
        labels = self.labels
        if labels is not None:
            labels = tuple(str(x) for x in labels)
            if len(labels) != len(sets):
                raise ValueError("labels length must match family size")
        object.__setattr__(self, "sets", sets)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.sets)

    def __iter__(self):
        return iter(self.sets)

    def __getitem__(self, i):
        return self.sets[i]

    @property
    def kind(self) -> str:
        return "rectangles" if isinstance(self.sets[0], Rectangle) else "grid"

    @property
    def dim(self) -> int:
        return self.sets[0].dim

    def label(self, i: int) -> str:
        return self.labels[i] if self.labels else f"s{i}"

    def family_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.sets[0].context_key())
        for s in self.sets:
            h.update(s.key())
        return h.hexdigest()

    def index_of(self, s: IndexedSet) -> Optional[int]:
        k = s.key()
        for i, t in enumerate(self.sets):
            if t.key() == k:
                return i
        return None

    def scaled(self, g: float) -> "SetFamily":
        if self.kind != "rectangles":
            raise ContextError("scaling is defined for rectangle families only")
        return SetFamily(
            tuple(s.scaled(g) for s in self.sets),
            labels=self.labels,
            allow_duplicates=self.allow_duplicates,
        )


@dataclass(frozen=True)
class IncrementSpec:
    """C = outer \\ (U_1 | ... | U_n), stored in normalized form.

    Normalization clips every subtracted set to the outer set and drops any
    subtracted set contained in another one; neither step changes C or the
    increment built on it.  n = 0 encodes C = outer.
    """

    outer: IndexedSet
    subtracted: tuple = ()

    def __post_init__(self):
        subs = []
        for s in self.subtracted:
            _check_context(self.outer, s)
            subs.append(self.outer.intersection(s))
        # Deduplicate, then drop sets contained in a surviving other set.
        unique = []
        seen = set()
        for s in subs:
            k = s.key()
            if k not in seen:
                seen.add(k)
                unique.append(s)
        kept = [
            s
            for i, s in enumerate(unique)
            if not any(j != i and unique[j].contains(s) for j in range(len(unique)))
        ]
        object.__setattr__(self, "subtracted", tuple(kept))

    @property
    def n_subtracted(self) -> int:
        return len(self.subtracted)


def subset_intersections(spec: IncrementSpec, max_subtracted: int = EXPANSION_MAX_SUBTRACTED):
    """All sets U & (U_i1 & ... & U_ik) with alternating signs (-1)^k.

    Yields (subset_indices, set, sign) over every subset of the subtracted
    list, starting with the empty subset (the outer set itself, sign +1).
    """
    n = spec.n_subtracted
    if n > max_subtracted:
        raise ComplexityError(
            f"{n} subtracted sets would need 2^{n} intersections (limit {max_subtracted})"
        )
    for k in range(n + 1):
        for idx in itertools.combinations(range(n), k):
            current = spec.outer
            for i in idx:
                current = current.intersection(spec.subtracted[i])
            yield idx, current, (-1) ** k


def expansion(spec: IncrementSpec):
    """Increment expansion of C as (sets, signs) over subset intersections."""
    sets, signs = [], []
    for _, s, sign in subset_intersections(spec):
        sets.append(s)
        signs.append(sign)
    return sets, np.asarray(signs, dtype=np.float64)


def region_measure(spec: IncrementSpec) -> float:
    """m(C) by inclusion-exclusion over the subset intersections."""
    total = 0.0
    scale = spec.outer.measure
    for _, s, sign in subset_intersections(spec, max_subtracted=REGION_MAX_SUBTRACTED):
        total += sign * s.measure
    return _clamp(total, scale)


def discretize(rect: Rectangle, resolution, bound) -> GridLowerSet:
    """Grid approximation of a rectangle inside a bounding box.

    Cells are half-open boxes that partition [0, bound); a cell belongs to
    the mask iff it is fully covered by the rectangle, so the grid measure
    approaches the rectangle's from below and is exact whenever each corner
    coordinate is an integer multiple of the cell size.
    """
    bound = tuple(float(b) for b in bound)
    if len(bound) != rect.dim:
        raise ValueError("bounding corner dimension mismatch")
    if isinstance(resolution, (int, np.integer)):
        resolution = (int(resolution),) * rect.dim
    resolution = tuple(int(r) for r in resolution)
    if any(r <= 0 for r in resolution):
        raise ValueError("resolution must be positive along every axis")
    if any(c > b for c, b in zip(rect.corner, bound)):
        raise ValueError(f"rectangle {rect.corner} exceeds bounding corner {bound}")
    if any(b <= 0 for b in bound):
        raise ValueError("bounding corner must be strictly positive")
    steps = [b / r for b, r in zip(bound, resolution)]
    cell_volume = float(np.prod(steps))
    weights = np.full(resolution, cell_volume)
    # Covered cell count per axis, tolerant of one-ulp noise in c/h.
    counts = [
        min(int(np.floor(c / h + 1e-9)), r)
        for c, h, r in zip(rect.corner, steps, resolution)
    ]
    mask = np.zeros(resolution, dtype=bool)
    mask[tuple(slice(0, k) for k in counts)] = True
    return GridLowerSet(weights, mask)


# ---------------------------------------------------------------------------
# JSON schemas
#
# rectangles: {"kind": "rectangles", "dim": N, "sets": [[t1..tN], ...],
#              "labels": [...]?}
# grid:       {"kind": "grid", "shape": [...], "weights": [row-major flat],
#              "masks": [[0/1 row-major flat], ...], "labels": [...]?}
# Unknown fields are rejected.
# ---------------------------------------------------------------------------

def family_from_json(doc: dict) -> SetFamily:
    if not isinstance(doc, dict):
        raise SchemaError("family document must be a JSON object")
    kind = doc.get("kind")
    if kind == "rectangles":
        allowed = {"kind", "dim", "sets", "labels"}
        required = {"kind", "dim", "sets"}
    elif kind == "grid":
        allowed = {"kind", "shape", "weights", "masks", "labels"}
        required = {"kind", "shape", "weights", "masks"}
    else:
        raise SchemaError(f"unknown family kind: {kind!r}")
    unknown = set(doc) - allowed
    if unknown:
        raise SchemaError(f"unknown fields in family document: {sorted(unknown)}")
    missing = required - set(doc)
    if missing:
        raise SchemaError(f"missing fields in family document: {sorted(missing)}")
    labels = doc.get("labels")
    try:
        if kind == "rectangles":
            dim = int(doc["dim"])
            sets = []
            for corner in doc["sets"]:
                if len(corner) != dim:
                    raise SchemaError(
                        f"corner {corner} does not have declared dimension {dim}"
                    )
                sets.append(Rectangle(tuple(corner)))
        else:
            shape = tuple(int(x) for x in doc["shape"])
            weights = np.asarray(doc["weights"], dtype=np.float64)
            if weights.size != int(np.prod(shape)):
                raise SchemaError("weights length does not match shape")
            weights = weights.reshape(shape)
            sets = []
            for flat in doc["masks"]:
                m = np.asarray(flat)
                if m.size != int(np.prod(shape)):
                    raise SchemaError("mask length does not match shape")
                sets.append(GridLowerSet(weights, m.reshape(shape).astype(bool)))
        return SetFamily(tuple(sets), labels=tuple(labels) if labels else None)
    except SchemaError:
        raise
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"invalid family document: {exc}") from exc


def family_to_json(family: SetFamily) -> dict:
    if family.kind == "rectangles":
        doc = {
            "kind": "rectangles",
            "dim": family.dim,
            "sets": [list(s.corner) for s in family.sets],
        }
    else:
        first = family.sets[0]
        doc = {
            "kind": "grid",
            "shape": list(first.weights.shape),
            "weights": [float(w) for w in first.weights.reshape(-1)],
            "masks": [[int(v) for v in s.mask.reshape(-1)] for s in family.sets],
        }
    if family.labels:
        doc["labels"] = list(family.labels)
    return doc


def load_family(path) -> SetFamily:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON: {exc}") from exc
    return family_from_json(doc)


def dump_family(family: SetFamily, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(family_to_json(family), fh, indent=2, sort_keys=True)
        fh.write("\n")
