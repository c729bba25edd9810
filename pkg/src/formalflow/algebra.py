"""Truncated formal mappings: dense multilinear tensors and their composition algebra.

A formal mapping of order N from R^dY to R^dZ is a sequence of k-linear maps
(k = 1..N), each stored as a dense tensor of shape (dZ, dY, ..., dY) with the
output index slowest and the k argument indices following in argument order.
Composition is the Faa-di-Bruno-type double sum over ordered integer
compositions of the target degree.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np


class ShapeError(ValueError):
    """Operands have incompatible degrees, orders or dimensions."""


class NonFiniteError(ShapeError):
    """A tensor contains NaN or Inf entries."""

    def __init__(self, degree: int, message: str | None = None):
        self.degree = degree
        super().__init__(message or f"non-finite entries in degree-{degree} tensor")


@dataclass(frozen=True)
class MultilinearMap:
    """A k-linear map R^dy x ... x R^dy -> R^dz as a dense tensor.

    entries has shape (dz, dy, ..., dy) with k trailing dy-axes; flattening is
    row-major, so the output index varies slowest and the last argument index
    fastest.
    """

    degree: int
    dy: int
    dz: int
    entries: np.ndarray

    def __post_init__(self):
        if self.degree < 1:
            raise ShapeError(f"degree must be >= 1, got {self.degree}")
        if self.dy < 1 or self.dz < 1:
            raise ShapeError(f"dimensions must be >= 1, got dy={self.dy}, dz={self.dz}")
        arr = np.asarray(self.entries, dtype=np.float64)
        expected = (self.dz,) + (self.dy,) * self.degree
        if arr.size != self.dz * self.dy**self.degree:
            raise ShapeError(
                f"entry count {arr.size} != dz*dy^k = {self.dz * self.dy**self.degree}"
            )
        arr = arr.reshape(expected).copy()
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(self.degree)
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @cached_property
    def is_zero(self) -> bool:
        return not self.entries.any()

    @classmethod
    def zero(cls, degree: int, dy: int, dz: int) -> "MultilinearMap":
        return cls(degree, dy, dz, np.zeros((dz,) + (dy,) * degree))

    def apply(self, *vectors: np.ndarray) -> np.ndarray:
        """Value on k vectors, contracting argument slots in order."""
        if len(vectors) != self.degree:
            raise ShapeError(f"expected {self.degree} vectors, got {len(vectors)}")
        out = self.entries
        for v in vectors:
            v = np.asarray(v, dtype=np.float64)
            if v.shape != (self.dy,):
                raise ShapeError(f"argument vector has shape {v.shape}, expected ({self.dy},)")
            out = np.tensordot(out, v, axes=([1], [0]))
        return out

    def to_dict(self) -> dict:
        return {
            "degree": self.degree,
            "dy": self.dy,
            "dz": self.dz,
            "entries": self.entries.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MultilinearMap":
        return cls(d["degree"], d["dy"], d["dz"], np.asarray(d["entries"], dtype=np.float64))


@dataclass(frozen=True)
class FormalMapping:
    """A truncated formal mapping: components of degrees 1..order."""

    order: int
    dy: int
    dz: int
    components: tuple[MultilinearMap, ...]

    def __post_init__(self):
        if self.order < 1:
            raise ShapeError(f"order must be >= 1, got {self.order}")
        comps = tuple(self.components)
        if len(comps) != self.order:
            raise ShapeError(f"expected {self.order} components, got {len(comps)}")
        for k, c in enumerate(comps, start=1):
            if c.degree != k:
                raise ShapeError(f"component {k} has degree {c.degree}")
            if c.dy != self.dy or c.dz != self.dz:
                raise ShapeError(
                    f"component {k} dims ({c.dy},{c.dz}) != mapping dims ({self.dy},{self.dz})"
                )
        object.__setattr__(self, "components", comps)

    def component(self, k: int) -> MultilinearMap:
        """1-based access to the degree-k component."""
        if not 1 <= k <= self.order:
            raise ShapeError(f"degree {k} out of range 1..{self.order}")
        return self.components[k - 1]

    @classmethod
    def zero(cls, order: int, dy: int, dz: int) -> "FormalMapping":
        return cls(order, dy, dz, tuple(MultilinearMap.zero(k, dy, dz) for k in range(1, order + 1)))

    @classmethod
    def from_scalar_coeffs(cls, coeffs: Sequence[float]) -> "FormalMapping":
        """Scalar (dy = dz = 1) mapping with the given degree-1.. coefficients."""
        comps = tuple(
            MultilinearMap(k, 1, 1, np.array(float(c)).reshape((1,) * (k + 1)))
            for k, c in enumerate(coeffs, start=1)
        )
        return cls(len(comps), 1, 1, comps)

    def scalar_coeffs(self) -> np.ndarray:
        if self.dy != 1 or self.dz != 1:
            raise ShapeError("scalar_coeffs requires dy = dz = 1")
        return np.array([c.entries.ravel()[0] for c in self.components])

    def to_dict(self) -> dict:
        return {"order": self.order, "components": [c.to_dict() for c in self.components]}

    @classmethod
    def from_dict(cls, d: dict) -> "FormalMapping":
        comps = tuple(MultilinearMap.from_dict(c) for c in d["components"])
        if not comps:
            raise ShapeError("a formal mapping needs at least one component")
        return cls(d["order"], comps[0].dy, comps[0].dz, comps)


@dataclass(frozen=True)
class CompositionIndex:
    """One term of the composition double sum: n split into k ordered parts."""

    n: int
    k: int
    parts: tuple[int, ...]


def enumerate_compositions(n: int, k: int) -> list[CompositionIndex]:
    """All ordered tuples of k positive integers summing to n, lexicographic.

    There are exactly C(n-1, k-1) of them.
    """
    if n < 1 or k < 1 or k > n:
        raise ShapeError(f"need 1 <= k <= n, got n={n}, k={k}")
    out: list[tuple[int, ...]] = []

    def rec(prefix: tuple[int, ...], remaining: int, slots: int):
        if slots == 1:
            out.append(prefix + (remaining,))
            return
        for j in range(1, remaining - slots + 2):
            rec(prefix + (j,), remaining - j, slots - 1)

    rec((), n, k)
    return [CompositionIndex(n, k, p) for p in out]


def apply_to_tuple(b_k: MultilinearMap, args: Sequence[MultilinearMap]) -> MultilinearMap:
    """Plug the maps a_{j_1}..a_{j_k} into the k slots of b_k.

    The result is an n-linear map (n = sum of argument degrees) whose inputs
    are distributed to the argument maps in order.
    """
    if len(args) != b_k.degree:
        raise ShapeError(f"b_k has {b_k.degree} slots, got {len(args)} argument maps")
    dy = args[0].dy
    for a in args:
        if a.dz != b_k.dy:
            raise ShapeError(f"argument codomain {a.dz} != b_k domain {b_k.dy}")
        if a.dy != dy:
            raise ShapeError("argument maps must share a common domain dimension")
    t = _contract(b_k.entries, [a.entries for a in args])
    n = sum(a.degree for a in args)
    return MultilinearMap(n, dy, b_k.dz, t)


def _contract(b_entries: np.ndarray, arg_entries: list[np.ndarray]) -> np.ndarray:
    # Each tensordot consumes the leading remaining slot of b and appends the
    # argument's input axes at the end, so inputs land in argument order.
    t = b_entries
    for a in arg_entries:
        t = np.tensordot(t, a, axes=([1], [0]))
    return t


def compose(b: FormalMapping, a: FormalMapping) -> FormalMapping:
    """Composition b after a, truncated to min(a.order, b.order).

    Component n is the double sum over k = 1..n and over ordered compositions
    (j_1..j_k) of n, of b_k plugged with a_{j_1}..a_{j_k}.  Terms with an
    all-zero operand are skipped, so component n depends only on nonzero
    components of degree <= n of both operands.
    """
    if a.dz != b.dy:
        raise ShapeError(f"a codomain {a.dz} != b domain {b.dy}")
    order = min(a.order, b.order)
    # Prefix contractions are shared between compositions with a common
    # leading part sequence; memoize them per (k, prefix).
    cache: dict[tuple[int, tuple[int, ...]], np.ndarray] = {}

    def term(bk: MultilinearMap, parts: tuple[int, ...]) -> np.ndarray:
        t = bk.entries
        start = 0
        for i in range(len(parts) - 1, 0, -1):
            key = (bk.degree, parts[:i])
            if key in cache:
                t, start = cache[key], i
                break
        for i in range(start, len(parts)):
            t = np.tensordot(t, a.components[parts[i] - 1].entries, axes=([1], [0]))
            cache[(bk.degree, parts[: i + 1])] = t
        return t

    comps = []
    for n in range(1, order + 1):
        acc = np.zeros((b.dz,) + (a.dy,) * n)
        for k in range(1, n + 1):
            bk = b.components[k - 1]
            if bk.is_zero:
                continue
            for ci in enumerate_compositions(n, k):
                if any(a.components[j - 1].is_zero for j in ci.parts):
                    continue
                acc += term(bk, ci.parts)
        comps.append(MultilinearMap(n, a.dy, b.dz, acc))
    return FormalMapping(order, a.dy, b.dz, tuple(comps))


def identity(order: int, d: int) -> FormalMapping:
    """Identity formal mapping: id in degree 1, zero above."""
    if order < 1 or d < 1:
        raise ShapeError(f"need order >= 1 and d >= 1, got {order}, {d}")
    comps = [MultilinearMap(1, d, d, np.eye(d))]
    comps += [MultilinearMap.zero(k, d, d) for k in range(2, order + 1)]
    return FormalMapping(order, d, d, tuple(comps))


def evaluate(a: FormalMapping, y: np.ndarray) -> np.ndarray:
    """Truncated power-series value: sum over k of a_k(y, ..., y)."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (a.dy,):
        raise ShapeError(f"y has shape {y.shape}, expected ({a.dy},)")
    out = np.zeros(a.dz)
    for comp in a.components:
        if comp.is_zero:
            continue
        t = comp.entries
        for _ in range(comp.degree):
            t = np.tensordot(t, y, axes=([1], [0]))
        out += t
    return out


def add(a: FormalMapping, b: FormalMapping) -> FormalMapping:
    if (a.order, a.dy, a.dz) != (b.order, b.dy, b.dz):
        raise ShapeError("add requires identical orders and dimensions")
    comps = tuple(
        MultilinearMap(ca.degree, ca.dy, ca.dz, ca.entries + cb.entries)
        for ca, cb in zip(a.components, b.components)
    )
    return FormalMapping(a.order, a.dy, a.dz, comps)


def scale(a: FormalMapping, c: float) -> FormalMapping:
    comps = tuple(
        MultilinearMap(ca.degree, ca.dy, ca.dz, c * ca.entries) for ca in a.components
    )
    return FormalMapping(a.order, a.dy, a.dz, comps)


def symmetrize(a_k: MultilinearMap) -> MultilinearMap:
    """Average over all permutations of the argument slots.

    Idempotent, and evaluation on equal arguments is unchanged.
    """
    if a_k.degree == 1:
        return a_k
    acc = np.zeros_like(a_k.entries)
    for perm in itertools.permutations(range(a_k.degree)):
        acc += np.transpose(a_k.entries, (0,) + tuple(p + 1 for p in perm))
    acc /= float(math.factorial(a_k.degree))
    return MultilinearMap(a_k.degree, a_k.dy, a_k.dz, acc)
