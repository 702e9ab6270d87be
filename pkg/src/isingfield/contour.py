"""Dual-lattice contour representation of minus-boundary configurations.

Geometry conventions (fixed across the package):

* The dual corner ``(u, v)`` stands for the half-integer point
  ``(u - 1/2, v - 1/2)``; the plaquette of site ``(x, y)`` has the four
  corners ``(x, y), (x+1, y), (x, y+1), (x+1, y+1)``.
* A broken horizontal bond ``(x, y)-(x+1, y)`` contributes the vertical dual
  edge ``(x+1, y)-(x+1, y+1)``; a broken vertical bond ``(x, y)-(x, y+1)``
  contributes the horizontal dual edge ``(x, y+1)-(x+1, y+1)``.
* Dual vertices of the disagreement-edge set have degree 0, 2 or 4.  At
  degree 4 the two loop strands are paired by a fixed chirality: a walk
  arriving along the north edge leaves along the east edge, and a walk
  arriving along the south edge leaves along the west edge.  Any consistent
  deterministic rule preserves the configuration/family bijection; the loop
  count at such vertices depends on the rule while the partition function and
  all probabilities do not.

A contour's ``interior_closure`` is the set of sites enclosed by the loop
(the sites that are plus in the configuration whose only contour is this
loop).  Its ``interior`` removes the sites within Euclidean distance 1 of the
loop; on this lattice that is exactly the enclosed sites none of whose four
plaquette corners is visited by the loop.  A contour's type (sign) is the
spin carried, in the source configuration, by the enclosed sites adjacent to
the loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterable, Iterator, Mapping, NamedTuple

import numpy as np

from .errors import CapacityError, InvalidFamilyError, RegimeError, VerificationError
from .field_lattice import DualSite, FieldSpec, ModelParams, Region, Site, field_norms
from .gibbs_exact import (
    BRUTE_SITE_CAP,
    BoundaryCondition,
    SpinConfiguration,
    event_log_probability,
    free_sites,
    iter_minus_configurations,
)

DualEdge = tuple[DualSite, DualSite]

# Degree-4 chirality: a walk arriving along the north edge leaves east, and
# arriving along the south edge leaves west.  As unit vectors this pairing is
# the swap (dx, dy) -> (dy, dx) of the direction pointing back to the
# previous vertex.


def dual_edges_of_plus_set(plus_sites: Iterable[Site]) -> list[DualEdge]:
    """Dual edges of all bonds between a plus site and a minus neighbor.

    The surrounding sea (including all boundary sites) is minus, so this is
    the full disagreement-edge set of the corresponding configuration.
    """
    plus = set(plus_sites)
    edges: list[DualEdge] = []
    for x, y in plus:
        if (x + 1, y) not in plus:
            edges.append(((x + 1, y), (x + 1, y + 1)))
        if (x - 1, y) not in plus:
            edges.append(((x, y), (x, y + 1)))
        if (x, y + 1) not in plus:
            edges.append(((x, y + 1), (x + 1, y + 1)))
        if (x, y - 1) not in plus:
            edges.append(((x, y), (x + 1, y)))
    return edges


def _edge_key(a: DualSite, b: DualSite) -> DualEdge:
    return (a, b) if a <= b else (b, a)


def trace_loops(edges: Iterable[DualEdge]) -> list[tuple[DualSite, ...]]:
    """Group dual edges into closed loops under the fixed corner rule.

    Returns each loop as its cyclic vertex sequence (one entry per edge).
    Loops may revisit a vertex of degree 4; the two strands there never
    cross.  The result is deterministic and independent of the input order:
    loops start at their smallest edge and are listed by that key.
    """
    incidence: dict[DualSite, list[DualSite]] = {}
    canon: list[DualEdge] = []
    for a, b in edges:
        if a in incidence:
            incidence[a].append(b)
        else:
            incidence[a] = [b]
        if b in incidence:
            incidence[b].append(a)
        else:
            incidence[b] = [a]
        canon.append((a, b) if a <= b else (b, a))
    for v, inc in incidence.items():
        if len(inc) & 1:  # degree is at most 4, so even means 2 or 4
            raise ValueError(
                f"dual vertex {v} has degree {len(inc)}; the edge set is not a union of loops"
            )

    canon.sort()
    used: set[DualEdge] = set()
    loops: list[tuple[DualSite, ...]] = []
    for start in canon:
        if start in used:
            continue
        used.add(start)
        a, b = start
        path = [a, b]
        prev, cur = a, b
        while True:
            inc = incidence[cur]
            if len(inc) == 2:
                nxt = inc[0] if inc[1] == prev else inc[1]
            else:
                nxt = (cur[0] + prev[1] - cur[1], cur[1] + prev[0] - cur[0])
            if cur == a and nxt == b:
                break
            used.add((cur, nxt) if cur <= nxt else (nxt, cur))
            path.append(nxt)
            prev, cur = cur, nxt
        path.pop()
        loops.append(tuple(path))
    return loops


def _vertical_runs(vertices: tuple[DualSite, ...]) -> dict[int, list[int]]:
    # Row index -> sorted dual-column positions of the loop's vertical edges.
    rows: dict[int, list[int]] = {}
    prev = vertices[-1]
    for cur in vertices:
        if prev[0] == cur[0]:
            key = prev[1] if prev[1] < cur[1] else cur[1]
            if key in rows:
                rows[key].append(prev[0])
            else:
                rows[key] = [prev[0]]
        prev = cur
    for us in rows.values():
        us.sort()
    return rows


def _enclosed_sites(vertices: tuple[DualSite, ...]) -> frozenset[Site]:
    # Ray-parity: a site (x, y) is enclosed iff an odd number of the loop's
    # vertical dual edges in row y sit strictly to its east.
    out: list[Site] = []
    for v, us in _vertical_runs(vertices).items():
        for j in range(0, len(us), 2):
            for x in range(us[j], us[j + 1]):
                out.append((x, v))
    return frozenset(out)


def _closure_and_reference(vertices: tuple[DualSite, ...]) -> tuple[frozenset[Site], Site]:
    # The reference site is the raster-minimal enclosed site; its west and
    # south neighbors lie outside the loop, so it is adjacent to the loop and
    # carries the contour's type.
    rows = _vertical_runs(vertices)
    out: list[Site] = []
    ref_row = min(rows)
    for v, us in rows.items():
        for j in range(0, len(us), 2):
            for x in range(us[j], us[j + 1]):
                out.append((x, v))
    return frozenset(out), (rows[ref_row][0], ref_row)


@dataclass(frozen=True)
class Contour:
    """A closed dual-lattice loop with a sign (type) and its enclosed sites."""

    vertices: tuple[DualSite, ...]
    sign: int
    interior_closure: frozenset[Site]

    @classmethod
    def from_vertices(cls, vertices: Iterable[DualSite], sign: int) -> "Contour":
        verts = tuple((int(u), int(v)) for u, v in vertices)
        if sign not in (-1, 1):
            raise ValueError("contour sign must be +1 or -1")
        return cls(vertices=verts, sign=sign, interior_closure=_enclosed_sites(verts))

    @property
    def length(self) -> int:
        return len(self.vertices)

    @property
    def volume(self) -> int:
        return len(self.interior_closure)

    @property
    def edges(self) -> tuple[DualEdge, ...]:
        m = len(self.vertices)
        return tuple((self.vertices[t], self.vertices[(t + 1) % m]) for t in range(m))

    @cached_property
    def interior(self) -> frozenset[Site]:
        """Enclosed sites at Euclidean distance more than 1 from the loop."""
        corners = set(self.vertices)
        out = []
        for x, y in self.interior_closure:
            if (
                (x, y) not in corners
                and (x + 1, y) not in corners
                and (x, y + 1) not in corners
                and (x + 1, y + 1) not in corners
            ):
                out.append((x, y))
        return frozenset(out)

    def to_dict(self) -> dict:
        """JSON form: edge list in walk order (real half-integer coordinates) plus sign."""
        return {
            "edges": [
                [[a[0] - 0.5, a[1] - 0.5], [b[0] - 0.5, b[1] - 0.5]] for a, b in self.edges
            ],
            "sign": self.sign,
            "length": self.length,
            "volume": self.volume,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Contour":
        vertices = [
            (int(round(a[0] + 0.5)), int(round(a[1] + 0.5))) for a, _ in data["edges"]
        ]
        return cls.from_vertices(vertices, int(data["sign"]))


@dataclass(frozen=True)
class ContourFamily:
    """A set of mutually avoiding contours on the dual grid of one box."""

    contours: frozenset[Contour]
    region: Region

    def __len__(self) -> int:
        return len(self.contours)


def _family_key(family: ContourFamily) -> frozenset:
    return frozenset((frozenset(_edge_key(a, b) for a, b in c.edges), c.sign) for c in family.contours)


def extract_contours(config: SpinConfiguration, *, check_types: bool = False) -> ContourFamily:
    """The contour family of a minus-boundary configuration.

    ``check_types`` additionally verifies that every contour's collar (the
    enclosed sites within distance 1 of the loop) is single-signed in the
    source configuration, which is what makes the type well defined.
    """
    if config.bc.kind != "minus":
        raise ValueError("contour extraction requires the all-minus boundary condition")
    plus = config.plus_sites
    contours = []
    for verts in trace_loops(dual_edges_of_plus_set(plus)):
        closure, reference = _closure_and_reference(verts)
        sign = 1 if reference in plus else -1
        contour = Contour(vertices=verts, sign=sign, interior_closure=closure)
        if check_types:
            collar = closure - contour.interior
            member = {s in plus for s in collar}
            if len(member) != 1:
                raise VerificationError(
                    f"contour collar carries both signs in the source configuration: {contour}"
                )
        contours.append(contour)
    return ContourFamily(contours=frozenset(contours), region=config.region)


def reconstruct_configuration(family: ContourFamily, *, validate: bool = True) -> SpinConfiguration:
    """The unique minus-boundary configuration whose contour family this is.

    A site is plus exactly when an odd number of the family's contours
    enclose it.  With ``validate`` the result is re-extracted and compared,
    which rejects families that no configuration produces (overlapping or
    otherwise incompatible contours).
    """
    region = family.region
    index = region.raster_index
    painted = [-1] * len(index)
    try:
        for contour in family.contours:
            for site in contour.interior_closure:
                k = index[site]
                painted[k] = -painted[k]
    except KeyError as exc:
        raise InvalidFamilyError(f"contour encloses site {exc} outside the box") from exc
    bc = BoundaryCondition.minus()
    config = SpinConfiguration(region, bc, tuple(painted))
    if validate:
        back = extract_contours(config)
        if _family_key(back) != _family_key(family):
            raise InvalidFamilyError(
                "contour family is not realizable: it is not the extraction of any "
                "minus-boundary configuration on this box"
            )
    return config


def contour_weight_log(contour: Contour, params: ModelParams) -> float:
    """log of the signed contour weight.

    Equals ``-2 beta J |edges| + 2 beta sum_h`` for a plus contour and
    ``-2 beta J |edges| - 2 beta sum_h`` for a minus contour, where ``sum_h``
    runs over the enclosed sites.
    """
    field_sum = sum(params.field.value(s) for s in contour.interior_closure)
    return -2.0 * params.beta * params.J * contour.length + 2.0 * params.beta * contour.sign * field_sum


def involves(contour: Contour, i: Site) -> bool:
    """Whether the contour involves the site, i.e. encloses it."""
    return i in contour.interior_closure


@dataclass(frozen=True)
class NestingForest:
    """Containment order of a family: parent = smallest enclosing contour."""

    nodes: tuple[Contour, ...]
    parent_index: tuple[int, ...]  # -1 for roots

    @property
    def roots(self) -> tuple[Contour, ...]:
        return tuple(c for c, p in zip(self.nodes, self.parent_index) if p < 0)

    def parent(self, contour: Contour) -> Contour | None:
        k = self.nodes.index(contour)
        p = self.parent_index[k]
        return None if p < 0 else self.nodes[p]

    def children(self, contour: Contour) -> tuple[Contour, ...]:
        k = self.nodes.index(contour)
        return tuple(c for c, p in zip(self.nodes, self.parent_index) if p == k)

    def depth(self, contour: Contour) -> int:
        d = 0
        cur: Contour | None = contour
        while True:
            cur = self.parent(cur)
            if cur is None:
                return d
            d += 1


def nesting_forest(family: ContourFamily) -> NestingForest:
    """Build the containment forest of a compatible family.

    In a compatible family two enclosed-site sets are either nested or
    disjoint, so the minimal enclosing contour is unique when it exists.
    """
    nodes = sorted(family.contours, key=lambda c: (c.volume, c.vertices))
    parent = []
    for k, c in enumerate(nodes):
        best = -1
        for j, other in enumerate(nodes):
            if j == k or other.volume <= c.volume:
                continue
            if c.interior_closure <= other.interior_closure:
                if best < 0 or nodes[j].volume < nodes[best].volume:
                    best = j
        parent.append(best)
    return NestingForest(nodes=tuple(nodes), parent_index=tuple(parent))


# ---------------------------------------------------------------------------
# exhaustive family machinery (bit-parallel digests, cached per region)


@lru_cache(maxsize=8)
def _bond_tables(region: Region):
    raster = region.raster_sites
    index = {s: k for k, s in enumerate(raster)}
    per_site = []
    for x, y in raster:
        entries = []
        for nbr, edge in (
            ((x + 1, y), ((x + 1, y), (x + 1, y + 1))),
            ((x - 1, y), ((x, y), (x, y + 1))),
            ((x, y + 1), ((x, y + 1), (x + 1, y + 1))),
            ((x, y - 1), ((x, y), (x + 1, y))),
        ):
            entries.append((index.get(nbr, -1), edge))
        per_site.append(tuple(entries))
    return tuple(per_site)


def _edges_from_bits(bits: int, per_site) -> list[DualEdge]:
    edges: list[DualEdge] = []
    b = bits
    k = 0
    while b:
        if b & 1:
            for nb, edge in per_site[k]:
                if nb < 0 or not (bits >> nb) & 1:
                    edges.append(edge)
        b >>= 1
        k += 1
    return edges


@lru_cache(maxsize=2)
def _region_family_digests(region: Region):
    """Per configuration: (sum of contour lengths, ((sign, closure bitmask), ...)).

    Configuration index bit k is the spin at the k-th raster site, matching
    the enumeration order used by the brute-force backend.
    """
    n = region.side * region.side
    if n > BRUTE_SITE_CAP:
        raise CapacityError(
            f"family enumeration over {n} sites exceeds the cap {BRUTE_SITE_CAP}"
        )
    per_site = _bond_tables(region)
    raster = region.raster_sites
    index = {s: k for k, s in enumerate(raster)}
    out = []
    for bits in range(1 << n):
        edges = _edges_from_bits(bits, per_site)
        if not edges:
            out.append((0, ()))
            continue
        total = 0
        parts = []
        for verts in trace_loops(edges):
            total += len(verts)
            mask = 0
            for v, us in _vertical_runs(verts).items():
                for j in range(0, len(us), 2):
                    for x in range(us[j], us[j + 1]):
                        mask |= 1 << index[(x, v)]
            ref = (mask & -mask).bit_length() - 1  # raster-minimal enclosed site
            sign = 1 if (bits >> ref) & 1 else -1
            parts.append((sign, mask))
        out.append((total, tuple(parts)))
    return tuple(out)


def _field_subset_sums(region: Region, field: FieldSpec) -> np.ndarray:
    table = np.zeros(1, dtype=np.float64)
    for site in region.raster_sites:
        table = np.concatenate([table, table + field.value(site)])
    return table


def iter_families(region: Region) -> Iterator[ContourFamily]:
    """The contour families of all minus-boundary configurations, in bit order."""
    for config in iter_minus_configurations(region):
        yield extract_contours(config)


def _family_log_weights(region: Region, params: ModelParams) -> np.ndarray:
    digests = _region_family_digests(region)
    sums = _field_subset_sums(region, params.field)
    b2 = 2.0 * params.beta
    out = np.empty(len(digests), dtype=np.float64)
    for c, (total_len, parts) in enumerate(digests):
        w = -b2 * params.J * total_len
        for sign, mask in parts:
            w += b2 * sign * sums[mask]
        out[c] = w
    return out


def weight_identity_residual(region: Region, params: ModelParams) -> float:
    """Worst mismatch between Boltzmann factors and contour-weight products.

    For every minus-boundary configuration, the normalized Boltzmann factor
    exp(-beta H) must equal the product of its contours' weights; this is the
    identity behind the contour-sum partition function.  Returns the largest
    absolute difference of the two log values over all configurations.
    """
    from .gibbs_exact import minus_normalized_energy_table

    logw = _family_log_weights(region, params)
    target = -params.beta * minus_normalized_energy_table(region, params)
    return float(np.max(np.abs(logw - target)))


def log_partition_contour(region: Region, params: ModelParams) -> float:
    """log of the contour-sum partition function over all compatible families.

    The sum over ordered compatible tuples with the 1/n! symmetry factor
    collapses to a plain sum over families; families are enumerated through
    the configuration bijection, which guarantees compatibility.  The result
    equals the log partition function of the normalized minus-boundary
    energy.
    """
    weights = _family_log_weights(region, params)
    m = float(np.max(weights))
    return m + math.log(float(np.sum(np.exp(weights - m))))


class SandwichResult(NamedTuple):
    holds: bool
    slack_low: float
    slack_high: float


def lemma2_sandwich_check(
    family: ContourFamily, params: ModelParams, *, tail_tolerance: float = 1e-6
) -> SandwichResult:
    """Check the two-sided field-free envelope of a family's weight product.

    For a summable field, the product of signed weights lies between
    ``exp(-2 beta l1) * prod exp(-2 beta J |edges|)`` and the same with
    ``+2 beta l1``.  Slacks are reported in the log domain; the l1 norm is a
    certified overestimate, which can only widen the envelope.
    """
    norms = field_norms(params.field, tail_tolerance)
    if math.isinf(norms.l1):
        raise RegimeError("field has infinite l1 norm; the envelope bound does not apply")
    b2 = 2.0 * params.beta
    base = sum(-b2 * params.J * c.length for c in family.contours)
    logw = sum(contour_weight_log(c, params) for c in family.contours)
    slack_low = logw - (base - b2 * norms.l1)
    slack_high = (base + b2 * norms.l1) - logw
    return SandwichResult(slack_low >= -1e-12 and slack_high >= -1e-12, slack_low, slack_high)


def lemma2_sandwich_exhaustive(
    region: Region, params: ModelParams, *, tail_tolerance: float = 1e-6
) -> SandwichResult:
    """The sandwich check over every compatible family on the box.

    Returns whether all families pass, with the smallest slack seen on each
    side.
    """
    norms = field_norms(params.field, tail_tolerance)
    if math.isinf(norms.l1):
        raise RegimeError("field has infinite l1 norm; the envelope bound does not apply")
    digests = _region_family_digests(region)
    sums = _field_subset_sums(region, params.field)
    b2 = 2.0 * params.beta
    envelope = b2 * norms.l1
    min_low = math.inf
    min_high = math.inf
    for total_len, parts in digests:
        field_term = 0.0
        for sign, mask in parts:
            field_term += b2 * sign * float(sums[mask])
        min_low = min(min_low, field_term + envelope)
        min_high = min(min_high, envelope - field_term)
    holds = min_low >= -1e-12 and min_high >= -1e-12
    return SandwichResult(holds, float(min_low), float(min_high))


def minus_bc_plus_probability_bound(
    region: Region, params: ModelParams, i: Site, *, method: str = "auto"
) -> tuple[float, float]:
    """Exact minus-boundary probability of spin +1 at ``i``, with its closed-form bound.

    Requires J > 3 l1(h) and 3 exp(-2 beta J) < 1.  The bound is
    ``sum_{n>=4} n 3^n exp(-2 beta (J n - 3 l1))``; the exact probability is
    verified to lie below it.
    """
    from .bounds import peierls_bound  # local import to avoid a module cycle

    norms = field_norms(params.field)
    if math.isinf(norms.l1) or not params.J > 3.0 * norms.l1:
        raise RegimeError(
            f"the bound needs J > 3*l1(h): J={params.J}, 3*l1={3.0 * norms.l1}"
        )
    bound = peierls_bound(params.beta, params.J, norms.l1).value
    exact = math.exp(
        event_log_probability(region, BoundaryCondition.minus(), params, {i: 1}, method=method)
    )
    if exact > bound + 1e-12:
        raise VerificationError(
            f"exact probability {exact} exceeds its closed-form bound {bound}"
        )
    return exact, bound
