# lattice/boxes.py
"""Finite boxes of Z^d, their neighbour structure, and nested Følner sequences."""

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import cached_property
import logging

import numpy as np

from core.exceptions import DomainError, InvalidScheduleError

logger = logging.getLogger(__name__)

MAX_DIMENSION = 3


@dataclass(frozen=True)
class LatticeBox:
    """
    The sites x with offset[k] <= x[k] < offset[k] + sides[k].

    Sites are indexed row-major (last axis fastest), which is also the bit
    order of serialized configurations.
    """

    sides: tuple
    offset: tuple = None

    def __post_init__(self):
        sides = tuple(int(s) for s in self.sides)
        if not 1 <= len(sides) <= MAX_DIMENSION:
            raise DomainError(f"dimension must be 1..{MAX_DIMENSION}, got {len(sides)}")
        if any(s < 1 for s in sides):
            raise DomainError(f"side lengths must be positive, got {sides}")
        offset = tuple(int(o) for o in self.offset) if self.offset is not None else (0,) * len(sides)
        if len(offset) != len(sides):
            raise DomainError("offset and sides must have the same dimension")
        object.__setattr__(self, 'sides', sides)
        object.__setattr__(self, 'offset', offset)

    @classmethod
    def centered(cls, sides):
        sides = tuple(int(s) for s in sides)
        return cls(sides, tuple(-(s // 2) for s in sides))

    @property
    def dimension(self):
        return len(self.sides)

    @property
    def site_count(self):
        return int(np.prod(self.sides))

    def index_of(self, coordinate):
        local = np.asarray(coordinate, dtype=np.int64) - np.asarray(self.offset)
        if not self.contains(coordinate):
            raise DomainError(f"{tuple(coordinate)} is outside {self}")
        return int(np.ravel_multi_index(tuple(local), self.sides))

    def coordinate_of(self, index):
        if not 0 <= index < self.site_count:
            raise DomainError(f"site index {index} out of range for {self.site_count} sites")
        local = np.unravel_index(int(index), self.sides)
        return tuple(int(c) + o for c, o in zip(local, self.offset))

    def contains(self, coordinate):
        c = np.asarray(coordinate)
        lo = np.asarray(self.offset)
        return bool(np.all(c >= lo) and np.all(c < lo + np.asarray(self.sides)))

    def contains_box(self, other):
        lo, hi = np.asarray(self.offset), np.asarray(self.offset) + np.asarray(self.sides)
        olo = np.asarray(other.offset)
        ohi = olo + np.asarray(other.sides)
        return other.dimension == self.dimension and bool(np.all(olo >= lo) and np.all(ohi <= hi))

    def mask(self, coordinates):
        """Boolean row mask of the (n, d) coordinate array inside this box."""
        coords = np.atleast_2d(np.asarray(coordinates))
        lo = np.asarray(self.offset)
        return np.all((coords >= lo) & (coords < lo + np.asarray(self.sides)), axis=1)

    @cached_property
    def coordinates(self):
        """(site_count, d) integer array of site coordinates in index order."""
        grids = np.indices(self.sides).reshape(self.dimension, -1).T
        coords = grids + np.asarray(self.offset, dtype=np.int64)
        coords.setflags(write=False)
        return coords

    def shifted(self, shift):
        return LatticeBox(self.sides, tuple(o + int(s) for o, s in zip(self.offset, shift)))

    def grown(self, padding):
        """The box enlarged by `padding` sites on every side."""
        padding = int(padding)
        return LatticeBox(tuple(s + 2 * padding for s in self.sides), tuple(o - padding for o in self.offset))

    def neighbour_pairs(self, periodic=False):
        """
        Nearest-neighbour index pairs (i, j), i < j.

        With `periodic=True` the box is a discrete torus; axes of length 1
        contribute no pairs and axes of length 2 contribute each pair once.
        """
        index = np.arange(self.site_count).reshape(self.sides)
        pairs = []
        for axis, side in enumerate(self.sides):
            if side == 1:
                continue
            if periodic and side > 2:
                a, b = index, np.roll(index, -1, axis=axis)
            else:
                a = np.take(index, range(side - 1), axis=axis)
                b = np.take(index, range(1, side), axis=axis)
            pairs.append(np.stack([a.ravel(), b.ravel()], axis=1))
        if not pairs:
            return np.zeros((0, 2), dtype=np.int64)
        stacked = np.concatenate(pairs)
        return np.sort(stacked, axis=1)

    def boundary_site_count(self):
        """Sites with at least one lattice neighbour outside the box."""
        inner = [max(s - 2, 0) for s in self.sides]
        return self.site_count - int(np.prod(inner))

    def boundary_ratio(self):
        return self.boundary_site_count() / self.site_count

    def as_dict(self):
        return {'d': self.dimension, 'sides': list(self.sides), 'offset': list(self.offset)}

    def __str__(self):
        ranges = ' x '.join(f"[{o}..{o + s - 1}]" for o, s in zip(self.offset, self.sides))
        return f"LatticeBox({ranges})"


@dataclass(frozen=True)
class FolnerSequence:
    """
    Nested centered boxes I_1 ⊂ I_2 ⊂ ... of the translation group Z^d.

    `cell` is the rectangular fundamental domain D; the exhausting regions
    of the lattice are A_n = ∪_{γ ∈ I_n} (γ·cell + D), i.e. boxes of
    sides I_n.sides * cell.
    """

    dimension: int
    boxes: tuple
    cell: tuple = field(default=None)

    def __post_init__(self):
        cell = tuple(int(c) for c in self.cell) if self.cell is not None else (1,) * self.dimension
        if len(cell) != self.dimension or any(c < 1 for c in cell):
            raise DomainError(f"fundamental domain {cell} does not fit dimension {self.dimension}")
        object.__setattr__(self, 'cell', cell)
        object.__setattr__(self, 'boxes', tuple(self.boxes))

    @property
    def cell_size(self):
        """|D|, the number of sites in the fundamental domain."""
        return int(np.prod(self.cell))

    def __len__(self):
        return len(self.boxes)

    def region(self, scale):
        """The lattice box A_n for scale index `scale`."""
        box = self.boxes[scale]
        return LatticeBox(
            tuple(s * c for s, c in zip(box.sides, self.cell)),
            tuple(o * c for o, c in zip(box.offset, self.cell)),
        )

    @property
    def regions(self):
        return [self.region(n) for n in range(len(self.boxes))]

    def volume(self, scale):
        """|I_n|·|D|, the volume normalization of the counting functions."""
        return self.boxes[scale].site_count * self.cell_size

    @property
    def largest_region(self):
        return self.region(len(self.boxes) - 1)

    def as_dict(self):
        return {
            'd': self.dimension,
            'sides': [list(b.sides) for b in self.boxes],
            'cell': list(self.cell),
        }


def folner_boxes(d, count, growth, aspect=None, cell=None):
    """
    Nested centered boxes with strictly increasing side lengths.

    `growth` is either a sequence of side lengths (at least `count` long) or
    a callable n -> side for n = 0..count-1. `aspect` scales each axis
    (e.g. (2, 1) for 2:1 rectangles).
    """
    if not 1 <= int(d) <= MAX_DIMENSION:
        raise DomainError(f"dimension must be 1..{MAX_DIMENSION}, got {d}")
    if int(count) < 1:
        raise InvalidScheduleError("count must be at least 1")
    if isinstance(growth, Callable):
        sides = [int(growth(n)) for n in range(count)]
    elif isinstance(growth, Sequence):
        if len(growth) < count:
            raise InvalidScheduleError(f"schedule has {len(growth)} sides, {count} requested")
        sides = [int(s) for s in growth[:count]]
    else:
        raise InvalidScheduleError(f"unsupported growth schedule {growth!r}")

    if any(s < 1 for s in sides):
        raise InvalidScheduleError(f"side lengths must be positive, got {sides}")
    if any(b <= a for a, b in zip(sides, sides[1:])):
        raise InvalidScheduleError(f"side-length schedule must be strictly increasing, got {sides}")

    aspect = tuple(int(a) for a in aspect) if aspect is not None else (1,) * d
    if len(aspect) != d or any(a < 1 for a in aspect):
        raise InvalidScheduleError(f"aspect {aspect} does not fit dimension {d}")

    boxes = [LatticeBox.centered(tuple(s * a for a in aspect)) for s in sides]
    for inner, outer in zip(boxes, boxes[1:]):
        if not outer.contains_box(inner):
            raise InvalidScheduleError(f"{outer} does not contain {inner}")
    ratios = [b.boundary_ratio() for b in boxes]
    # Boxes with a side of at most 2 are all boundary, so their ratios tie at 1.
    if any(r2 > r1 or (r2 == r1 and r1 < 1.0) for r1, r2 in zip(ratios, ratios[1:])):
        raise InvalidScheduleError(f"boundary ratios {ratios} are not strictly decreasing")

    logger.info(f"Følner sequence d={d}: sides {sides}, aspect {aspect}")
    return FolnerSequence(dimension=int(d), boxes=tuple(boxes), cell=cell)
