"""Finitely supported measures on R^d and their basic operations.

A :class:`DiscreteMeasure` is a nonnegative combination of point masses,
``sum_i w_i * delta_{x_i}``; a :class:`SignedDiscreteMeasure` allows the
weights to carry either sign.  Atoms sitting at bitwise-identical positions
are merged (weights added) and exact zero weights are dropped, so equality,
the sub-measure order and the total-variation norm are all well defined
without epsilon comparisons.  Instances are immutable and safe to share.

The JSON schema used across the package is::

    {"dim": d, "atoms": [{"x": [...d floats...], "w": weight}, ...]}

with an optional ``"signed": true`` flag when negative weights are allowed.
Serialization formats floats with 17 significant digits, which round-trips
IEEE doubles exactly.
"""

from __future__ import annotations

import json
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "MeasureError",
    "SchemaError",
    "NegativeWeightError",
    "DimensionMismatchError",
    "DiscreteMeasure",
    "SignedDiscreteMeasure",
    "total_mass",
    "tv_norm",
    "push_forward",
    "sub_measure_check",
    "parse_measure",
    "serialize_measure",
    "format_float",
    "canonical_json",
]


class MeasureError(ValueError):
    """Base class for malformed-measure diagnostics."""


class SchemaError(MeasureError):
    """The document does not match the measure JSON schema."""


class NegativeWeightError(MeasureError):
    """A weight is negative where only nonnegative mass is allowed."""


class DimensionMismatchError(MeasureError):
    """An atom's coordinate count disagrees with the declared dimension."""


def format_float(x: float) -> str:
    """Render a float with 17 significant digits (exact double round-trip)."""
    return format(float(x), ".17g")


def _json_fragment(obj) -> str:
    if isinstance(obj, dict):
        items = ",".join(f"{json.dumps(k)}:{_json_fragment(v)}" for k, v in obj.items())
        return "{" + items + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_json_fragment(v) for v in obj) + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    return json.dumps(obj)


def canonical_json(obj) -> str:
    """Deterministic JSON text: insertion-ordered keys, 17-digit floats."""
    return _json_fragment(obj)


def _as_positions(positions, dim: int) -> np.ndarray:
    arr = np.asarray(positions, dtype=np.float64)
    if arr.size == 0:
        arr = arr.reshape(0, dim)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DimensionMismatchError(
            f"positions have shape {arr.shape}, expected (*, {dim})"
        )
    if not np.all(np.isfinite(arr)):
        raise MeasureError("positions must be finite")
    # normalize -0.0 to +0.0 so bitwise merging agrees with ==
    return arr + 0.0


def _merge_atoms(positions: np.ndarray, weights: np.ndarray):
    """Sort atoms lexicographically, merge coincident positions, drop zeros."""
    if len(weights) == 0:
        return positions, weights
    order = np.lexsort(positions.T[::-1])
    positions = positions[order]
    weights = weights[order]
    keep_start = np.ones(len(weights), dtype=bool)
    keep_start[1:] = np.any(positions[1:] != positions[:-1], axis=1)
    group = np.cumsum(keep_start) - 1
    merged_w = np.zeros(group[-1] + 1)
    np.add.at(merged_w, group, weights)
    merged_x = positions[keep_start]
    nonzero = merged_w != 0.0
    return merged_x[nonzero], merged_w[nonzero]


class SignedDiscreteMeasure:
    """Finitely supported signed measure; weights of either sign."""

    __slots__ = ("dim", "positions", "weights")

    def __init__(self, dim: int, positions=(), weights=()):
        if dim < 1:
            raise MeasureError(f"dimension must be >= 1, got {dim}")
        positions = _as_positions(positions, dim)
        weights = np.asarray(weights, dtype=np.float64).reshape(-1)
        if len(weights) != len(positions):
            raise MeasureError("positions and weights disagree in length")
        if not np.all(np.isfinite(weights)):
            raise MeasureError("weights must be finite")
        positions, weights = _merge_atoms(positions, weights)
        positions.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "dim", int(dim))
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "weights", weights)

    def __setattr__(self, name, value):  # pragma: no cover - guard
        raise AttributeError("measures are immutable")

    @property
    def atom_count(self) -> int:
        return len(self.weights)

    def tv_norm(self) -> float:
        return float(np.sum(np.abs(self.weights)))

    def positive_part(self) -> "DiscreteMeasure":
        keep = self.weights > 0
        return DiscreteMeasure(self.dim, self.positions[keep], self.weights[keep])

    def negative_part(self) -> "DiscreteMeasure":
        keep = self.weights < 0
        return DiscreteMeasure(self.dim, self.positions[keep], -self.weights[keep])

    def scale(self, factor: float) -> "SignedDiscreteMeasure":
        return SignedDiscreteMeasure(self.dim, self.positions, self.weights * factor)

    def __add__(self, other: "SignedDiscreteMeasure") -> "SignedDiscreteMeasure":
        # an empty measure acts as the neutral element in any dimension
        if other.atom_count == 0:
            return SignedDiscreteMeasure(self.dim, self.positions, self.weights)
        if self.atom_count == 0:
            return SignedDiscreteMeasure(other.dim, other.positions, other.weights)
        if self.dim != other.dim:
            raise DimensionMismatchError("cannot add measures of different dimension")
        return SignedDiscreteMeasure(
            self.dim,
            np.concatenate([self.positions, other.positions]),
            np.concatenate([self.weights, other.weights]),
        )

    def __sub__(self, other: "SignedDiscreteMeasure") -> "SignedDiscreteMeasure":
        return self + other.scale(-1.0)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SignedDiscreteMeasure)
            and self.dim == other.dim
            and self.positions.shape == other.positions.shape
            and bool(np.all(self.positions == other.positions))
            and bool(np.all(self.weights == other.weights))
        )

    def __hash__(self):
        return hash((self.dim, self.positions.tobytes(), self.weights.tobytes()))

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim}, atoms={self.atom_count})"

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """Integral of a scalar function, ``sum_i w_i f(x_i)``."""
        if self.atom_count == 0:
            return 0.0
        values = np.asarray(f(self.positions), dtype=np.float64).reshape(-1)
        return float(np.dot(self.weights, values))

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "signed": True,
            "atoms": [
                {"x": [float(c) for c in x], "w": float(w)}
                for x, w in zip(self.positions, self.weights)
            ],
        }


class DiscreteMeasure(SignedDiscreteMeasure):
    """Finitely supported nonnegative measure."""

    def __init__(self, dim: int, positions=(), weights=()):
        weights = np.asarray(weights, dtype=np.float64).reshape(-1)
        if np.any(weights < 0):
            raise NegativeWeightError("nonnegative measure given a negative weight")
        super().__init__(dim, positions, weights)

    @classmethod
    def from_atoms(cls, dim: int, atoms: Iterable[tuple[Sequence[float], float]]):
        atoms = list(atoms)
        positions = [a[0] for a in atoms]
        weights = [a[1] for a in atoms]
        return cls(dim, positions, weights)

    @classmethod
    def dirac(cls, position: Sequence[float], weight: float = 1.0):
        position = np.atleast_1d(np.asarray(position, dtype=np.float64))
        return cls(len(position), position[None, :], [weight])

    @classmethod
    def empty(cls, dim: int):
        return cls(dim)

    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def scale(self, factor: float) -> "DiscreteMeasure":
        if factor < 0:
            raise NegativeWeightError("scale factor must be nonnegative")
        return DiscreteMeasure(self.dim, self.positions, self.weights * factor)

    def signed(self) -> SignedDiscreteMeasure:
        return SignedDiscreteMeasure(self.dim, self.positions, self.weights)

    def push_forward(self, f: Callable[[np.ndarray], np.ndarray]) -> "DiscreteMeasure":
        """Image measure under a point map; merges collided atoms."""
        if self.atom_count == 0:
            return DiscreteMeasure(self.dim)
        new_positions = np.asarray(f(self.positions), dtype=np.float64)
        if new_positions.shape != self.positions.shape:
            raise MeasureError("point map must preserve the (n, dim) shape")
        if not np.all(np.isfinite(new_positions)):
            raise MeasureError("point map produced non-finite coordinates")
        return DiscreteMeasure(self.dim, new_positions, self.weights)

    def weight_at(self, position: np.ndarray) -> float:
        """Mass carried by a single point (0 when it is not an atom)."""
        if self.atom_count == 0:
            return 0.0
        hit = np.all(self.positions == np.asarray(position, dtype=np.float64), axis=1)
        return float(np.sum(self.weights[hit]))

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "atoms": [
                {"x": [float(c) for c in x], "w": float(w)}
                for x, w in zip(self.positions, self.weights)
            ],
        }


def total_mass(m: DiscreteMeasure) -> float:
    """Total mass ``sum_i w_i`` of a nonnegative measure."""
    return m.total_mass()


def tv_norm(m: SignedDiscreteMeasure) -> float:
    """Total variation: mass of the positive plus the negative part."""
    return m.tv_norm()


def push_forward(m: DiscreteMeasure, f: Callable[[np.ndarray], np.ndarray]) -> DiscreteMeasure:
    """Push a measure through a point map (mass preserved exactly)."""
    return m.push_forward(f)


def sub_measure_check(a: DiscreteMeasure, b: DiscreteMeasure) -> bool:
    """Whether ``a <= b`` pointwise: at every position, a's weight <= b's."""
    if a.dim != b.dim:
        raise DimensionMismatchError("sub-measure check needs a common dimension")
    for x, w in zip(a.positions, a.weights):
        if w > b.weight_at(x):
            return False
    return True


def _parse_atoms(doc: dict, dim: int, allow_negative: bool):
    atoms = doc["atoms"]
    if not isinstance(atoms, list):
        raise SchemaError('"atoms" must be a list')
    positions = np.zeros((len(atoms), dim))
    weights = np.zeros(len(atoms))
    for idx, atom in enumerate(atoms):
        if not isinstance(atom, dict) or set(atom) != {"x", "w"}:
            raise SchemaError(f'atom #{idx} must be an object with keys "x" and "w"')
        x = atom["x"]
        if not isinstance(x, list) or not all(isinstance(c, (int, float)) for c in x):
            raise SchemaError(f'atom #{idx}: "x" must be a list of numbers')
        if len(x) != dim:
            raise DimensionMismatchError(
                f"atom #{idx} has {len(x)} coordinates, expected {dim}"
            )
        w = atom["w"]
        if not isinstance(w, (int, float)):
            raise SchemaError(f'atom #{idx}: "w" must be a number')
        if w < 0 and not allow_negative:
            raise NegativeWeightError(f"atom #{idx} has negative weight {w}")
        positions[idx] = x
        weights[idx] = w
    return positions, weights


def parse_measure(text: str) -> DiscreteMeasure | SignedDiscreteMeasure:
    """Parse the JSON measure schema; raises a specific MeasureError subclass."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("top-level value must be an object")
    allowed = {"dim", "atoms", "signed"}
    if not {"dim", "atoms"} <= set(doc) or not set(doc) <= allowed:
        raise SchemaError(f'expected keys "dim" and "atoms", got {sorted(doc)}')
    dim = doc["dim"]
    if not isinstance(dim, int) or dim < 1:
        raise SchemaError(f'"dim" must be a positive integer, got {dim!r}')
    signed = bool(doc.get("signed", False))
    positions, weights = _parse_atoms(doc, dim, allow_negative=signed)
    if signed:
        return SignedDiscreteMeasure(dim, positions, weights)
    return DiscreteMeasure(dim, positions, weights)


def serialize_measure(m: SignedDiscreteMeasure) -> str:
    """Canonical JSON for a measure (sorted atoms, 17-digit floats)."""
    return canonical_json(m.to_json_dict())
