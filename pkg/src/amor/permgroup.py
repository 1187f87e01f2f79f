"""Finite groups of coordinate permutations acting on R^d.

A permutation is stored as an index map ``image`` with ``(P x)[i] = x[image[i]]``.
Matrices are only built on request (tests, ``U_P`` in the penalty terms).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DEFAULT_MAX_ORDER = 10080


class GroupError(ValueError):
    pass


@dataclass(frozen=True)
class Permutation:
    image: tuple[int, ...]

    def __post_init__(self):
        image = tuple(int(i) for i in self.image)
        if sorted(image) != list(range(len(image))):
            raise GroupError(f"not a bijection on 0..{len(image) - 1}: {image}")
        object.__setattr__(self, "image", image)

    @classmethod
    def identity(cls, d: int) -> "Permutation":
        return cls(tuple(range(d)))

    @classmethod
    def swap(cls, d: int, i: int, j: int) -> "Permutation":
        image = list(range(d))
        image[i], image[j] = image[j], image[i]
        return cls(tuple(image))

    @property
    def dim(self) -> int:
        return len(self.image)

    @property
    def index(self) -> np.ndarray:
        return np.asarray(self.image, dtype=np.intp)

    def is_identity(self) -> bool:
        return self.image == tuple(range(self.dim))

    def compose(self, other: "Permutation") -> "Permutation":
        """Return ``self @ other``, i.e. apply ``other`` first then ``self``."""
        if other.dim != self.dim:
            raise GroupError("dimension mismatch in composition")
        # (P Q x)_i = (Q x)_{p[i]} = x_{q[p[i]]}
        return Permutation(tuple(other.image[k] for k in self.image))

    def inverse(self) -> "Permutation":
        inv = [0] * self.dim
        for i, k in enumerate(self.image):
            inv[k] = i
        return Permutation(tuple(inv))

    def matrix(self) -> np.ndarray:
        m = np.zeros((self.dim, self.dim))
        m[np.arange(self.dim), self.index] = 1.0
        return m

    def __call__(self, x):
        return apply_perm(self, x)


def apply_perm(perm: Permutation, x) -> np.ndarray:
    """Permute the coordinates of ``x`` (last axis, so batches work too)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != perm.dim:
        raise GroupError(f"vector of length {x.shape[-1]} does not match permutation of dimension {perm.dim}")
    return x[..., perm.index]


def conjugate_state(perm: Permutation, theta):
    """Transport ``theta = (mu, Sigma)`` to ``(P mu, P Sigma P^T)``."""
    from .relabel import AdaptiveState

    if theta.dim != perm.dim:
        raise GroupError("dimension mismatch between permutation and state")
    idx = perm.index
    return AdaptiveState(theta.mu[idx], theta.sigma[np.ix_(idx, idx)])


class PermutationGroup:
    """An explicitly enumerated finite permutation group.

    ``elements[0]`` is always the identity; the remaining order is the order in
    which the closure discovered them, so tie-breaking draws are reproducible.
    """

    def __init__(self, elements: Sequence[Permutation], validate: bool = True):
        elements = list(elements)
        if not elements:
            raise GroupError("a group needs at least the identity")
        self.dim = elements[0].dim
        self.elements: tuple[Permutation, ...] = tuple(elements)
        self._lookup = {p.image: i for i, p in enumerate(self.elements)}
        self._stack = np.array([p.image for p in self.elements], dtype=np.intp)
        self._inv_stack = np.array([p.inverse().image for p in self.elements], dtype=np.intp)
        self._u_stack = None
        if validate:
            self.validate()

    def validate(self) -> None:
        if any(p.dim != self.dim for p in self.elements):
            raise GroupError("elements of mixed dimension")
        if len(self._lookup) != len(self.elements):
            raise GroupError("duplicate group elements")
        if not self.elements[0].is_identity():
            raise GroupError("first element must be the identity")
        for p in self.elements:
            if p.inverse().image not in self._lookup:
                raise GroupError(f"not closed under inverse: {p.image}")
            for q in self.elements:
                if p.compose(q).image not in self._lookup:
                    raise GroupError(f"not closed under composition: {p.image} o {q.image}")

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __getitem__(self, i: int) -> Permutation:
        return self.elements[i]

    def __contains__(self, perm: Permutation) -> bool:
        return perm.image in self._lookup

    def __repr__(self) -> str:
        return f"PermutationGroup(dim={self.dim}, order={len(self)})"

    def index_of(self, perm: Permutation) -> int:
        return self._lookup[perm.image]

    @property
    def index_stack(self) -> np.ndarray:
        """Array of shape ``(|P|, d)`` holding every element's index map."""
        return self._stack

    @property
    def inverse_stack(self) -> np.ndarray:
        """Index maps of the inverses, aligned with ``index_stack``."""
        return self._inv_stack

    @property
    def u_stack(self) -> np.ndarray:
        """U_P = (I - P)^T (I - P) for every non-identity element, shape (|P|-1, d, d)."""
        if self._u_stack is None:
            eye = np.eye(self.dim)
            ms = [eye - p.matrix() for p in self.elements[1:]]
            self._u_stack = np.array([m.T @ m for m in ms]).reshape(-1, self.dim, self.dim)
        return self._u_stack

    def non_identity(self) -> tuple[Permutation, ...]:
        return self.elements[1:]

    def orbit(self, x) -> np.ndarray:
        """All permuted copies of ``x``, shape ``(|P|, d)``."""
        x = np.asarray(x, dtype=float)
        return x[self._stack]

    @classmethod
    def trivial(cls, d: int) -> "PermutationGroup":
        return cls([Permutation.identity(d)], validate=False)

    @classmethod
    def full_symmetric(cls, d: int) -> "PermutationGroup":
        if d > 7:
            raise GroupError("full_symmetric is limited to d <= 7")
        elements = [Permutation(p) for p in itertools.permutations(range(d))]
        # itertools yields the identity first
        return cls(elements, validate=False)


def group_from_generators(gens: Iterable[Permutation], d: int,
                          max_order: int = DEFAULT_MAX_ORDER) -> PermutationGroup:
    """Close a set of generators under composition.

    Breadth-first: the identity comes first, then elements in the order they
    are first reached by right-multiplying by generators.
    """
    gens = [g if isinstance(g, Permutation) else Permutation(tuple(g)) for g in gens]
    for g in gens:
        if g.dim != d:
            raise GroupError(f"generator {g.image} is not a permutation of dimension {d}")
    ident = Permutation.identity(d)
    seen = {ident.image}
    elements = [ident]
    frontier = [ident]
    while frontier:
        nxt = []
        for p in frontier:
            for g in gens:
                q = p.compose(g)
                if q.image in seen:
                    continue
                seen.add(q.image)
                elements.append(q)
                nxt.append(q)
                if len(elements) > max_order:
                    raise GroupError(
                        f"group closure exceeds {max_order} elements; relabeling over every "
                        "element would be impractical")
        frontier = nxt
    assert len(elements) <= math.factorial(d)
    return PermutationGroup(elements, validate=False)


def parse_group_spec(spec, d: int) -> PermutationGroup:
    """Build a group from ``"full_symmetric"``, ``"trivial"`` or a list of index arrays."""
    if isinstance(spec, str):
        key = spec.strip().lower()
        if key == "full_symmetric":
            return PermutationGroup.full_symmetric(d)
        if key == "trivial":
            return PermutationGroup.trivial(d)
        raise GroupError(f"unknown group spec {spec!r}")
    return group_from_generators([Permutation(tuple(g)) for g in spec], d)
