"""Lattice geometry and external-field specifications for the 2D Ising model.

Sites are integer pairs ``(x, y)``. Distances are graph distances
``|dx| + |dy|``, so a box's boundary is the set of outside sites at distance
exactly 1 and diagonal corner neighbors (distance 2) are not boundary sites.

Field specifications are restricted to a small closed set of families
(uniform level, inverse-power decay, finite tables with an optional analytic
tail, constant-shifted decay) so that the l1 norm over the infinite lattice
is computable with a certified tail bound that never underestimates.

Everything here is immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property, lru_cache
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .errors import InvalidRegionError

Site = tuple[int, int]
DualSite = tuple[int, int]

_STEPS: tuple[Site, ...] = ((1, 0), (-1, 0), (0, 1), (0, -1))

#: Largest shell radius the certified powerlaw tail solver will sum over.
POWERLAW_SHELL_CAP = 1 << 25


def neighbors(site: Site) -> tuple[Site, ...]:
    """The four nearest neighbors of a site, in a fixed (E, W, N, S) order."""
    x, y = site
    return ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1))


def graph_distance(a: Site, b: Site) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


@dataclass(frozen=True)
class Region:
    """An axis-aligned square box of sites.

    ``boundary`` is the set of outside sites at graph distance 1.
    ``dual_sites`` is the (side+1) x (side+1) grid of plaquette corners,
    stored in an integer encoding: the dual corner ``(u, v)`` stands for the
    half-integer point ``(u - 1/2, v - 1/2)``, so the plaquette centered on
    site ``(x, y)`` has corners ``(x, y), (x+1, y), (x, y+1), (x+1, y+1)``.
    """

    x0: int
    y0: int
    side: int

    def __post_init__(self) -> None:
        if self.side < 1:
            raise InvalidRegionError(f"box side must be >= 1, got {self.side}")

    @property
    def x1(self) -> int:
        return self.x0 + self.side - 1

    @property
    def y1(self) -> int:
        return self.y0 + self.side - 1

    @cached_property
    def sites(self) -> frozenset[Site]:
        return frozenset(
            (x, y)
            for y in range(self.y0, self.y1 + 1)
            for x in range(self.x0, self.x1 + 1)
        )

    @cached_property
    def boundary(self) -> frozenset[Site]:
        inside = self.sites
        out: set[Site] = set()
        for site in inside:
            for nbr in neighbors(site):
                if nbr not in inside:
                    out.add(nbr)
        return frozenset(out)

    @cached_property
    def dual_sites(self) -> frozenset[DualSite]:
        return frozenset(
            (u, v)
            for v in range(self.y0, self.y1 + 2)
            for u in range(self.x0, self.x1 + 2)
        )

    @cached_property
    def raster_sites(self) -> tuple[Site, ...]:
        """Sites in row-major raster order (y outer, x inner)."""
        return tuple(
            (x, y)
            for y in range(self.y0, self.y1 + 1)
            for x in range(self.x0, self.x1 + 1)
        )

    @cached_property
    def raster_index(self) -> dict[Site, int]:
        """Raster position of every site of the box."""
        return {s: k for k, s in enumerate(self.raster_sites)}

    def contains(self, site: Site) -> bool:
        return self.x0 <= site[0] <= self.x1 and self.y0 <= site[1] <= self.y1

    def site_index(self, site: Site) -> int:
        if not self.contains(site):
            raise ValueError(f"site {site} is not in the box")
        return (site[1] - self.y0) * self.side + (site[0] - self.x0)

    @cached_property
    def bonds(self) -> tuple[tuple[Site, Site], ...]:
        """All unordered nearest-neighbor bonds with at least one endpoint inside.

        Interior bonds are listed as (site, east/north neighbor); crossing
        bonds as (inside site, outside site). The order is deterministic.
        """
        inside = self.sites
        out: list[tuple[Site, Site]] = []
        for site in self.raster_sites:
            x, y = site
            for nbr in ((x + 1, y), (x, y + 1)):
                if nbr in inside:
                    out.append((site, nbr))
            for nbr in neighbors(site):
                if nbr not in inside:
                    out.append((site, nbr))
        return tuple(out)

    @property
    def center(self) -> Site:
        return (self.x0 + (self.side - 1) // 2, self.y0 + (self.side - 1) // 2)


def make_box(center: Site, side: int) -> Region:
    """Square box of the given side, placed so that ``center`` is its center.

    For even sides the center falls on the lower-left of the four middle
    sites. Consecutive sides around a fixed center produce nested boxes.
    """
    if side < 1:
        raise InvalidRegionError(f"box side must be >= 1, got {side}")
    half = (side - 1) // 2
    return Region(x0=center[0] - half, y0=center[1] - half, side=side)


class FieldNorms(NamedTuple):
    l1: float
    sup: float
    inf_outside_every_box: float


@dataclass(frozen=True)
class FieldSpec:
    """A per-site external field h on the whole lattice.

    Families:
      uniform   h_i = level
      powerlaw  h_i = amplitude / (1 + |x| + |y|)**exponent
      shifted   h_i = level + amplitude / (1 + |x| + |y|)**exponent
      table     h_i = entries[i] on the finite support, tail elsewhere
                (tail None means zero outside the support)

    A table with a tail is how a finite-window modification of an analytic
    field is expressed; ``zeroed_on`` builds the common case of erasing the
    field on a window.
    """

    kind: str
    level: float = 0.0
    amplitude: float = 0.0
    exponent: float = 0.0
    entries: tuple[tuple[Site, float], ...] = ()
    tail: "FieldSpec | None" = None

    @classmethod
    def uniform(cls, h: float) -> "FieldSpec":
        return cls(kind="uniform", level=float(h))

    @classmethod
    def zero(cls) -> "FieldSpec":
        return cls(kind="uniform", level=0.0)

    @classmethod
    def power_law(cls, amplitude: float, exponent: float) -> "FieldSpec":
        if exponent <= 0:
            raise ValueError("powerlaw exponent must be positive")
        return cls(kind="powerlaw", amplitude=float(amplitude), exponent=float(exponent))

    @classmethod
    def shifted(cls, base: float, amplitude: float, exponent: float) -> "FieldSpec":
        if exponent <= 0:
            raise ValueError("shifted decay exponent must be positive")
        return cls(
            kind="shifted",
            level=float(base),
            amplitude=float(amplitude),
            exponent=float(exponent),
        )

    @classmethod
    def table(
        cls, values: Mapping[Site, float], tail: "FieldSpec | None" = None
    ) -> "FieldSpec":
        if tail is not None and tail.kind == "table" and tail.tail is not None:
            pass  # nested tables are allowed; value() resolves outermost first
        entries = tuple(sorted(((int(x), int(y)), float(v)) for (x, y), v in values.items()))
        return cls(kind="table", entries=entries, tail=tail)

    def zeroed_on(self, sites: Iterable[Site]) -> "FieldSpec":
        """The field with its values replaced by 0 on the given finite window."""
        return FieldSpec.table({s: 0.0 for s in sites}, tail=self)

    @cached_property
    def _entry_map(self) -> dict[Site, float]:
        return dict(self.entries)

    def value(self, site: Site) -> float:
        if self.kind == "uniform":
            return self.level
        if self.kind == "powerlaw":
            d = abs(site[0]) + abs(site[1])
            return self.amplitude / (1.0 + d) ** self.exponent
        if self.kind == "shifted":
            d = abs(site[0]) + abs(site[1])
            return self.level + self.amplitude / (1.0 + d) ** self.exponent
        v = self._entry_map.get((site[0], site[1]))
        if v is not None:
            return v
        if self.tail is not None:
            return self.tail.value(site)
        return 0.0

    def values(self, sites: Iterable[Site]) -> dict[Site, float]:
        return {s: self.value(s) for s in sites}


@dataclass(frozen=True)
class ModelParams:
    """Coupling J > 0, inverse temperature beta >= 0, and the external field."""

    J: float
    beta: float
    field: FieldSpec = dc_field(default_factory=FieldSpec.zero)

    def __post_init__(self) -> None:
        if not self.J > 0:
            raise ValueError(f"ferromagnetic coupling requires J > 0, got {self.J}")
        if self.beta < 0:
            raise ValueError(f"inverse temperature must be >= 0, got {self.beta}")


def _powerlaw_shell_radius(amplitude: float, exponent: float, tol: float) -> int:
    # Tail over shells n > R: sum 4n*A*(1+n)^-p <= 4A * (1+R)^(2-p) / (p-2),
    # since n(1+n)^-p <= (1+n)^(1-p) and the integral dominates the sum.
    a = abs(amplitude)
    if a == 0.0:
        return 1
    target = (4.0 * a / ((exponent - 2.0) * tol)) ** (1.0 / (exponent - 2.0))
    radius = max(8, int(math.ceil(target)))
    if radius > POWERLAW_SHELL_CAP:
        raise ValueError(
            f"tail_tolerance={tol} needs summation radius {radius}, above the "
            f"cap {POWERLAW_SHELL_CAP}; loosen the tolerance"
        )
    return radius


def _powerlaw_l1(amplitude: float, exponent: float, tol: float) -> float:
    """Certified overestimate of sum_i |A|(1+|i|_1)^-p over all of Z^2."""
    a = abs(amplitude)
    if a == 0.0:
        return 0.0
    if exponent <= 2.0:
        return math.inf
    radius = _powerlaw_shell_radius(amplitude, exponent, tol)
    total = a  # origin shell
    chunk = 1 << 22
    for lo in range(1, radius + 1, chunk):
        hi = min(radius, lo + chunk - 1)
        n = np.arange(lo, hi + 1, dtype=np.float64)
        total += float(np.sum(4.0 * n * a * (1.0 + n) ** (-exponent)))
    tail_bound = 4.0 * a * (1.0 + radius) ** (2.0 - exponent) / (exponent - 2.0)
    return total + tail_bound


def _norms(spec: FieldSpec, tol: float) -> FieldNorms:
    if spec.kind == "uniform":
        h = spec.level
        return FieldNorms(l1=(0.0 if h == 0.0 else math.inf), sup=h, inf_outside_every_box=h)
    if spec.kind == "powerlaw":
        a, p = spec.amplitude, spec.exponent
        return FieldNorms(l1=_powerlaw_l1(a, p, tol), sup=max(a, 0.0), inf_outside_every_box=0.0)
    if spec.kind == "shifted":
        c, a = spec.level, spec.amplitude
        if c == 0.0:
            l1 = _powerlaw_l1(a, spec.exponent, tol)
        else:
            l1 = math.inf
        return FieldNorms(l1=l1, sup=max(c, c + a), inf_outside_every_box=c)
    # table: exact over the support, tail handled recursively.  The support
    # values of the tail are subtracted exactly, so the certified-overestimate
    # property of the tail's l1 is preserved.
    tail = spec.tail
    support = [s for s, _ in spec.entries]
    own = sum(abs(v) for _, v in spec.entries)
    if tail is None:
        sup = max([0.0] + [v for _, v in spec.entries])
        return FieldNorms(l1=own, sup=sup, inf_outside_every_box=0.0)
    tail_norms = _norms(tail, tol)
    if math.isinf(tail_norms.l1):
        l1 = math.inf
    else:
        l1 = own + tail_norms.l1 - sum(abs(tail.value(s)) for s in support)
    # sup of the tail is evaluated over the whole lattice, which can only
    # overestimate the supremum of the overlaid field.
    sup = max([tail_norms.sup] + [v for _, v in spec.entries])
    return FieldNorms(l1=l1, sup=sup, inf_outside_every_box=tail_norms.inf_outside_every_box)


@lru_cache(maxsize=64)
def _norms_cached(spec: FieldSpec, tol: float) -> FieldNorms:
    return _norms(spec, tol)


def field_norms(spec: FieldSpec, tail_tolerance: float = 1e-6) -> FieldNorms:
    """(l1, sup, inf outside every box) for a field specification.

    ``l1`` is exact for uniform-zero and pure tables; for decaying families it
    is computed by direct shell summation plus a rigorous tail overestimate,
    within ``tail_tolerance`` of the true value and never below it.  ``sup``
    is the (signed) supremum of the field, and ``inf_outside_every_box`` its
    liminf along any exhaustion by boxes.
    """
    if not tail_tolerance > 0:
        raise ValueError("tail_tolerance must be positive")
    return _norms_cached(spec, float(tail_tolerance))


def _parse_kv(body: str, keys: tuple[str, ...], where: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for part in body.split(","):
        if not part:
            continue
        if "=" not in part:
            raise ValueError(f"malformed field parameter {part!r} in {where!r}")
        k, _, v = part.partition("=")
        k = k.strip()
        if k not in keys:
            raise ValueError(f"unknown field parameter {k!r} in {where!r}")
        out[k] = float(v)
    missing = [k for k in keys if k not in out]
    if missing:
        raise ValueError(f"missing field parameter(s) {missing} in {where!r}")
    return out


def _site_from_key(key: str) -> Site:
    x, _, y = key.partition(",")
    return (int(x.strip()), int(y.strip()))


def parse_field_spec(text: str) -> FieldSpec:
    """Parse the textual field grammar used by the CLI.

    Forms: ``uniform:h=0.3``, ``powerlaw:A=0.02,p=3``, ``table:@file.json``,
    ``shifted:c=0.5,A=0.1,p=3``.  The table JSON is either a plain object
    mapping ``"x,y"`` to a value, or ``{"entries": {...}, "tail": "SPEC"}``
    where SPEC is again in this grammar.
    """
    kind, sep, body = text.partition(":")
    if not sep:
        raise ValueError(f"field spec {text!r} has no ':' separator")
    kind = kind.strip()
    if kind == "uniform":
        kv = _parse_kv(body, ("h",), text)
        return FieldSpec.uniform(kv["h"])
    if kind == "powerlaw":
        kv = _parse_kv(body, ("A", "p"), text)
        return FieldSpec.power_law(kv["A"], kv["p"])
    if kind == "shifted":
        kv = _parse_kv(body, ("c", "A", "p"), text)
        return FieldSpec.shifted(kv["c"], kv["A"], kv["p"])
    if kind == "table":
        if not body.startswith("@"):
            raise ValueError("table field spec must reference a JSON file as table:@file.json")
        with open(body[1:], "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if isinstance(data, dict) and "entries" in data:
            entries = {_site_from_key(k): float(v) for k, v in data["entries"].items()}
            tail = parse_field_spec(data["tail"]) if data.get("tail") else None
            return FieldSpec.table(entries, tail=tail)
        return FieldSpec.table({_site_from_key(k): float(v) for k, v in data.items()})
    raise ValueError(f"unknown field family {kind!r}")
