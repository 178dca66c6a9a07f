"""Exact rational bookkeeping for collapsing Kähler-class trajectories.

Along the flow the Kähler class moves on the straight line
``[omega_t] = [omega_0] - t*c1``, and the geometry degenerates at the
first time ``T`` at which the class reaches the boundary of the Kähler
cone.  Everything on this cohomology side is linear or multilinear with
rational inputs, so this module works in `fractions.Fraction` arithmetic
throughout: the collapsing-limit residual of a well-posed configuration
is exactly zero, not merely small, and repeated evaluation is
bit-identical.

The fibration structure enters through the intersection table: powers of
a class pulled back from the base vanish above the base dimension, which
forces the volume polynomial of the interpolating reference metric to
start at order ``(T - t)^r`` in the collapsing direction, ``r`` being
the fiber dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product as _iterprod
from math import comb
from typing import Iterable, Mapping, Sequence, Union

from .errors import ConfigurationError

RationalLike = Union[Fraction, int, str]

__all__ = [
    "GeneratorBasis",
    "KahlerClass",
    "IntersectionTable",
    "PositivityCone",
    "VolumePolynomial",
    "class_at",
    "singular_time",
    "collapsing_condition_residual",
    "reference_volume_polynomial",
]


def _frac(x: RationalLike) -> Fraction:
    """Coerce ints, strings like '3/2', and Fractions to Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):  # bool is an int subclass; reject explicitly
        raise ConfigurationError(f"not a rational number: {x!r}")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigurationError(f"not a rational number: {x!r}") from exc
    raise ConfigurationError(f"not a rational number: {x!r}")


@dataclass(frozen=True)
class GeneratorBasis:
    """A fixed generator basis of the (1,1)-classes, plus the dimensions
    of the total space (``dim_complex``) and of the fiber (``fiber_dim``).
    """

    labels: tuple[str, ...]
    dim_complex: int
    fiber_dim: int

    def __post_init__(self):
        if not self.labels:
            raise ConfigurationError("generator basis needs at least one label")
        if len(set(self.labels)) != len(self.labels):
            raise ConfigurationError(f"duplicate generator labels: {self.labels}")
        n, r = self.dim_complex, self.fiber_dim
        if not (isinstance(n, int) and isinstance(r, int) and 0 < r < n):
            raise ConfigurationError(
                f"need integer dimensions with 0 < fiber_dim < dim_complex, "
                f"got n={n!r}, r={r!r}"
            )

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ConfigurationError(
                f"unknown generator {label!r}; basis has {self.labels}"
            ) from None


def _same_basis(x: "KahlerClass", y: "KahlerClass") -> GeneratorBasis:
    if x.basis != y.basis:
        raise ConfigurationError(
            f"basis mismatch: {x.basis.labels} vs {y.basis.labels}"
        )
    return x.basis


@dataclass(frozen=True)
class KahlerClass:
    """Rational coefficient vector over a GeneratorBasis."""

    basis: GeneratorBasis
    coeffs: tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.coeffs) != len(self.basis.labels):
            raise ConfigurationError(
                f"class has {len(self.coeffs)} coefficients for "
                f"{len(self.basis.labels)} generators"
            )
        object.__setattr__(self, "coeffs", tuple(_frac(c) for c in self.coeffs))

    @classmethod
    def make(cls, basis: GeneratorBasis, coeffs: Sequence[RationalLike]) -> "KahlerClass":
        return cls(basis, tuple(_frac(c) for c in coeffs))

    def coeff(self, label: str) -> Fraction:
        return self.coeffs[self.basis.index(label)]

    def __add__(self, other: "KahlerClass") -> "KahlerClass":
        _same_basis(self, other)
        return KahlerClass(self.basis, tuple(a + b for a, b in zip(self.coeffs, other.coeffs)))

    def __sub__(self, other: "KahlerClass") -> "KahlerClass":
        _same_basis(self, other)
        return KahlerClass(self.basis, tuple(a - b for a, b in zip(self.coeffs, other.coeffs)))

    def scaled(self, factor: RationalLike) -> "KahlerClass":
        f = _frac(factor)
        return KahlerClass(self.basis, tuple(f * c for c in self.coeffs))


@dataclass(frozen=True)
class IntersectionTable:
    """Top intersection pairings of basis generators.

    Keys are degree-``n`` monomials in the generators, stored as sorted
    label tuples so the pairing is symmetric by construction.  Products
    of classes are evaluated by multilinear expansion over the table.
    """

    basis: GeneratorBasis
    pairings: Mapping[tuple[str, ...], Fraction]

    @classmethod
    def from_entries(
        cls,
        basis: GeneratorBasis,
        entries: Mapping[Sequence[str], RationalLike],
    ) -> "IntersectionTable":
        n = basis.dim_complex
        norm: dict[tuple[str, ...], Fraction] = {}
        for key, val in entries.items():
            key_t = tuple(sorted(key))
            if len(key_t) != n:
                raise ConfigurationError(
                    f"intersection monomial {key_t} has degree {len(key_t)}, expected {n}"
                )
            for lab in key_t:
                basis.index(lab)
            if key_t in norm and norm[key_t] != _frac(val):
                raise ConfigurationError(f"conflicting entries for monomial {key_t}")
            norm[key_t] = _frac(val)
        return cls(basis, norm)

    def entry(self, monomial: Sequence[str]) -> Fraction:
        key = tuple(sorted(monomial))
        try:
            return self.pairings[key]
        except KeyError:
            raise ConfigurationError(
                f"intersection table is missing the monomial {'.'.join(key)}"
            ) from None

    def pair(self, *classes: KahlerClass) -> Fraction:
        """Top intersection number of ``n`` classes (multilinear expansion)."""
        n = self.basis.dim_complex
        if len(classes) != n:
            raise ConfigurationError(f"pairing takes {n} classes, got {len(classes)}")
        for c in classes:
            if c.basis != self.basis:
                raise ConfigurationError("basis mismatch between class and table")
        labels = self.basis.labels
        total = Fraction(0)
        for combo in _iterprod(range(len(labels)), repeat=n):
            coeff = Fraction(1)
            for cls_i, gen_i in zip(classes, combo):
                coeff *= cls_i.coeffs[gen_i]
                if coeff == 0:
                    break
            if coeff == 0:
                continue
            total += coeff * self.entry(tuple(labels[g] for g in combo))
        return total

    def power_pair(self, x: KahlerClass, k: int, y: KahlerClass) -> Fraction:
        """Pairing of ``x^k . y^(n-k)``."""
        n = self.basis.dim_complex
        if not 0 <= k <= n:
            raise ConfigurationError(f"power {k} outside 0..{n}")
        return self.pair(*([x] * k + [y] * (n - k)))


@dataclass(frozen=True)
class PositivityCone:
    """An open cone cut out by named linear functionals that must all be
    strictly positive (fiber pairing, base pairing, section pairings...).
    Model-specific data, not a general ampleness test.
    """

    basis: GeneratorBasis
    functionals: tuple[tuple[str, tuple[Fraction, ...]], ...]

    @classmethod
    def from_rows(
        cls,
        basis: GeneratorBasis,
        rows: Mapping[str, Sequence[RationalLike]] | Iterable[tuple[str, Sequence[RationalLike]]],
    ) -> "PositivityCone":
        items = rows.items() if isinstance(rows, Mapping) else rows
        packed = []
        for name, row in items:
            row_t = tuple(_frac(v) for v in row)
            if len(row_t) != len(basis.labels):
                raise ConfigurationError(
                    f"cone functional {name!r} has {len(row_t)} entries for "
                    f"{len(basis.labels)} generators"
                )
            packed.append((str(name), row_t))
        if not packed:
            raise ConfigurationError("positivity cone needs at least one functional")
        return cls(basis, tuple(packed))

    def evaluate(self, cls_: KahlerClass) -> tuple[tuple[str, Fraction], ...]:
        if cls_.basis != self.basis:
            raise ConfigurationError("basis mismatch between class and cone")
        return tuple(
            (name, sum((r * c for r, c in zip(row, cls_.coeffs)), Fraction(0)))
            for name, row in self.functionals
        )

    def contains(self, cls_: KahlerClass) -> bool:
        """Strict interior membership."""
        return all(v > 0 for _, v in self.evaluate(cls_))


def class_at(omega0: KahlerClass, c1: KahlerClass, t: RationalLike) -> KahlerClass:
    """The class at time t: omega0 - t*c1, exact."""
    _same_basis(omega0, c1)
    return omega0 - c1.scaled(_frac(t))


def singular_time(
    omega0: KahlerClass, c1: KahlerClass, cone: PositivityCone
) -> Fraction | float:
    """First time a cone functional of omega0 - t*c1 vanishes.

    Returns +inf when no functional ever decreases to zero.  Requires
    omega0 strictly inside the cone.
    """
    _same_basis(omega0, c1)
    if not cone.contains(omega0):
        vals = dict(cone.evaluate(omega0))
        bad = [name for name, v in vals.items() if v <= 0]
        raise ConfigurationError(
            f"initial class is not strictly inside the cone; "
            f"nonpositive functionals: {bad}"
        )
    hits = []
    for (name, v0), (_, rate) in zip(cone.evaluate(omega0), cone.evaluate(c1)):
        if rate > 0:
            hits.append(v0 / rate)
    if not hits:
        return math.inf
    return min(hits)


def collapsing_condition_residual(
    omega0: KahlerClass,
    c1: KahlerClass,
    T: RationalLike,
    target: KahlerClass,
) -> tuple[Fraction, ...]:
    """Coefficient vector of (omega0 - T*c1) - target; all-zero exactly
    when the configured limit class is the declared base pullback."""
    Tq = _frac(T)
    limit = class_at(omega0, c1, Tq)
    _same_basis(limit, target)
    return (limit - target).coeffs


@dataclass(frozen=True)
class VolumePolynomial:
    """Total volume of the interpolating reference metric as an exact
    polynomial ``sum_k mixed[k] * (T-t)^k * t^(n-k)``.

    ``degenerate`` flags a configuration whose initial volume already
    vanishes (the top self-intersection of the initial class is zero),
    which cannot come from a Kähler metric.
    """

    T: Fraction
    n: int
    mixed: tuple[Fraction, ...]
    degenerate: bool

    def coefficient(self, k: int, t: RationalLike) -> Fraction:
        """Coefficient of (T-t)^k, a monomial in t."""
        tq = _frac(t)
        return self.mixed[k] * tq ** (self.n - k)

    def gap_series(self) -> tuple[Fraction, ...]:
        """Re-expansion as sum_j p[j] * (T-t)^j with constant p[j]."""
        p = [Fraction(0)] * (self.n + 1)
        for j in range(self.n + 1):
            for k in range(j + 1):
                p[j] += (
                    self.mixed[k]
                    * comb(self.n - k, j - k)
                    * self.T ** (self.n - j)
                    * (-1) ** (j - k)
                )
        return tuple(p)

    def __call__(self, t: RationalLike) -> Fraction:
        tq = _frac(t)
        s = self.T - tq
        return sum(
            (c * s**k * tq ** (self.n - k) for k, c in enumerate(self.mixed)),
            Fraction(0),
        )


def reference_volume_polynomial(
    omega0: KahlerClass,
    sigma_pullback: KahlerClass,
    table: IntersectionTable,
    T: RationalLike,
) -> VolumePolynomial:
    """Expand the total volume of (1/T)((T-t)*omega0 + t*sigma_pullback).

    The binomial expansion pairs ``omega0^k . sigma_pullback^(n-k)``;
    every monomial with more than ``n - r`` pullback factors vanishes,
    so the coefficients of (T-t)^k are identically zero for k < r
    whenever the table carries the fibration vanishing pattern.
    """
    basis = _same_basis(omega0, sigma_pullback)
    Tq = _frac(T)
    if Tq <= 0:
        raise ConfigurationError(f"need a positive finite collapse time, got {Tq}")
    n = basis.dim_complex
    mixed = tuple(
        comb(n, k) * table.power_pair(omega0, k, sigma_pullback) / Tq**n
        for k in range(n + 1)
    )
    return VolumePolynomial(T=Tq, n=n, mixed=mixed, degenerate=(mixed[n] == 0))
