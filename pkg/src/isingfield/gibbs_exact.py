"""Exact finite-volume Gibbs computations with frozen boundary spins.

Energy convention: J per unordered nearest-neighbor bond with at least one
endpoint in the box (the J/2-over-ordered-pairs form collapses to this), and
bonds between two boundary sites are dropped as configuration-independent
constants under a fixed boundary condition.  All partition arithmetic is done
in the log domain with max-shift so inverse temperatures up to ~50 survive.

Probabilities of spin events are always computed as ratios of constrained
partition functions, never by tabulating the measure, so the same code path
serves the brute-force and transfer-matrix backends.

Brute-force enumeration walks configurations in fixed-size chunks and reduces
the chunks in a fixed order, so results are bit-stable regardless of how the
chunks would be scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterator, Mapping

import numpy as np

from .errors import CapacityError
from .field_lattice import FieldSpec, ModelParams, Region, Site, neighbors

#: Largest number of box sites the brute-force enumerator accepts.
BRUTE_SITE_CAP = 25
#: Largest box side the transfer-matrix backend accepts (2**side states).
TRANSFER_SIDE_CAP = 20

_CHUNK_BITS = 14

_BYTE_SPINS = tuple(
    tuple(1 if (byte >> k) & 1 else -1 for k in range(8)) for byte in range(256)
)


@dataclass(frozen=True)
class BoundaryCondition:
    """Frozen spins outside the box, and optionally pinned sites inside it.

    ``explicit`` tables must cover the whole boundary; any extra keys must be
    interior sites, which are then frozen as well (used for experiments that
    pin a single interior spin).
    """

    kind: str
    entries: tuple[tuple[Site, int], ...] = ()

    @classmethod
    def plus(cls) -> "BoundaryCondition":
        return cls(kind="plus")

    @classmethod
    def minus(cls) -> "BoundaryCondition":
        return cls(kind="minus")

    @classmethod
    def explicit(cls, values: Mapping[Site, int]) -> "BoundaryCondition":
        entries = []
        for site, v in values.items():
            if v not in (-1, 1):
                raise ValueError(f"boundary spin at {site} must be +1 or -1, got {v}")
            entries.append(((int(site[0]), int(site[1])), int(v)))
        return cls(kind="explicit", entries=tuple(sorted(entries)))

    def spin_map(self, region: Region) -> dict[Site, int]:
        """Spins on the boundary plus any pinned interior sites."""
        if self.kind == "plus":
            return {s: 1 for s in region.boundary}
        if self.kind == "minus":
            return {s: -1 for s in region.boundary}
        table = dict(self.entries)
        missing = region.boundary - table.keys()
        if missing:
            raise ValueError(f"explicit boundary condition misses {len(missing)} boundary site(s)")
        for site in table:
            if site not in region.boundary and site not in region.sites:
                raise ValueError(f"boundary table key {site} is neither boundary nor interior")
        return table

    def pinned_interior(self, region: Region) -> dict[Site, int]:
        if self.kind != "explicit":
            return {}
        return {s: v for s, v in self.entries if s in region.sites}


@dataclass(frozen=True)
class SpinConfiguration:
    """Spins on the box and its boundary; the boundary part is frozen by ``bc``.

    ``spins`` holds the free interior spins in raster order (pinned interior
    sites, if any, are not free).
    """

    region: Region
    bc: BoundaryCondition
    spins: tuple[int, ...]

    def __post_init__(self) -> None:
        free = free_sites(self.region, self.bc)
        if len(self.spins) != len(free):
            raise ValueError(
                f"expected {len(free)} free spins for this region/bc, got {len(self.spins)}"
            )
        if self.spins.count(1) + self.spins.count(-1) != len(self.spins):
            raise ValueError("spins must be +1 or -1")

    @classmethod
    def from_mapping(
        cls, region: Region, bc: BoundaryCondition, values: Mapping[Site, int]
    ) -> "SpinConfiguration":
        free = free_sites(region, bc)
        return cls(region, bc, tuple(values[s] for s in free))

    @classmethod
    def from_bits(cls, region: Region, bc: BoundaryCondition, bits: int) -> "SpinConfiguration":
        n = len(free_sites(region, bc))
        spins: tuple[int, ...] = ()
        shift = 0
        while shift < n:
            spins += _BYTE_SPINS[(bits >> shift) & 255]
            shift += 8
        return cls(region, bc, spins if len(spins) == n else spins[:n])

    @classmethod
    def fill(cls, region: Region, bc: BoundaryCondition, value: int) -> "SpinConfiguration":
        return cls(region, bc, (value,) * len(free_sites(region, bc)))

    @classmethod
    def all_minus(cls, region: Region) -> "SpinConfiguration":
        return cls.fill(region, BoundaryCondition.minus(), -1)

    @cached_property
    def values(self) -> dict[Site, int]:
        """Spin at every site of the box and its boundary."""
        out = dict(self.bc.spin_map(self.region))
        for site, s in zip(free_sites(self.region, self.bc), self.spins):
            out[site] = s
        return out

    def spin(self, site: Site) -> int:
        return self.values[site]

    @cached_property
    def plus_sites(self) -> frozenset[Site]:
        """Sites of the box carrying spin +1 (pinned interior sites included)."""
        out = {s for s, v in zip(free_sites(self.region, self.bc), self.spins) if v == 1}
        for s, v in self.bc.pinned_interior(self.region).items():
            if v == 1:
                out.add(s)
        return frozenset(out)


@lru_cache(maxsize=128)
def _free_sites_cached(region: Region, bc: BoundaryCondition) -> tuple[Site, ...]:
    pinned = bc.pinned_interior(region)
    return tuple(s for s in region.raster_sites if s not in pinned)


def free_sites(region: Region, bc: BoundaryCondition) -> tuple[Site, ...]:
    """Interior sites whose spins are not frozen, in raster order."""
    if bc.kind != "explicit":
        return region.raster_sites
    return _free_sites_cached(region, bc)


def energy(config: SpinConfiguration, params: ModelParams) -> float:
    """-J sum over bonds (>= 1 endpoint inside) of s_i s_j, minus sum h_i s_i."""
    vals = config.values
    region = config.region
    e = 0.0
    for a, b in region.bonds:
        e -= params.J * vals[a] * vals[b]
    for site in region.raster_sites:
        e -= params.field.value(site) * vals[site]
    return e


def energy_normalized_minus(config: SpinConfiguration, params: ModelParams) -> float:
    """Energy shifted so the all-minus configuration has exactly zero.

    Equals -J sum (s_i s_j - 1) - sum h_i (s_i + 1); differs from ``energy``
    by a configuration-independent constant, so the Gibbs measure is the same.
    """
    if config.bc.kind != "minus":
        raise ValueError("the normalized energy is defined for the minus boundary condition")
    vals = config.values
    region = config.region
    e = 0.0
    for a, b in region.bonds:
        e -= params.J * (vals[a] * vals[b] - 1)
    for site in region.raster_sites:
        e -= params.field.value(site) * (vals[site] + 1)
    return e


# ---------------------------------------------------------------------------
# brute-force backend


@dataclass(frozen=True)
class _BruteSetup:
    free: tuple[Site, ...]
    bond_a: np.ndarray  # free-free bond endpoint indices
    bond_b: np.ndarray
    lin: np.ndarray  # per-free-site coefficient: J * (fixed neighbor sum) + h
    const: float  # energy of everything frozen
    conflict: bool  # requested pins contradict the boundary condition


def _brute_setup(
    region: Region,
    bc: BoundaryCondition,
    params: ModelParams,
    pinned: Mapping[Site, int] | None,
) -> _BruteSetup:
    spin_map = dict(bc.spin_map(region))
    fixed: dict[Site, int] = dict(spin_map)
    conflict = False
    if pinned:
        for site, v in pinned.items():
            if site not in region.sites:
                raise ValueError(f"pinned site {site} is not in the box")
            if site in fixed and fixed[site] != v:
                conflict = True
            fixed[site] = v

    free = tuple(s for s in region.raster_sites if s not in fixed)
    index = {s: k for k, s in enumerate(free)}

    bond_a: list[int] = []
    bond_b: list[int] = []
    lin = np.zeros(len(free), dtype=np.float64)
    const = 0.0
    for a, b in region.bonds:
        ka, kb = index.get(a), index.get(b)
        if ka is not None and kb is not None:
            bond_a.append(ka)
            bond_b.append(kb)
        elif ka is not None:
            lin[ka] += params.J * fixed[b]
        elif kb is not None:
            lin[kb] += params.J * fixed[a]
        else:
            const -= params.J * fixed[a] * fixed[b]
    for k, site in enumerate(free):
        lin[k] += params.field.value(site)
    for site in region.raster_sites:
        if site in fixed:
            const -= params.field.value(site) * fixed[site]

    return _BruteSetup(
        free=free,
        bond_a=np.asarray(bond_a, dtype=np.intp),
        bond_b=np.asarray(bond_b, dtype=np.intp),
        lin=lin,
        const=const,
        conflict=conflict,
    )


def _chunk_spins(lo: int, hi: int, n: int) -> np.ndarray:
    idx = np.arange(lo, hi, dtype=np.uint64)
    bits = (idx[:, None] >> np.arange(n, dtype=np.uint64)) & 1
    return bits.astype(np.int8) * 2 - 1


def _chunk_energies(setup: _BruteSetup, params: ModelParams, lo: int, hi: int) -> np.ndarray:
    s = _chunk_spins(lo, hi, len(setup.free)).astype(np.float64)
    e = np.full(hi - lo, setup.const, dtype=np.float64)
    if len(setup.bond_a):
        e -= params.J * np.sum(s[:, setup.bond_a] * s[:, setup.bond_b], axis=1)
    e -= s @ setup.lin
    return e


def log_partition_brute(
    region: Region,
    bc: BoundaryCondition,
    params: ModelParams,
    *,
    pinned: Mapping[Site, int] | None = None,
    max_sites: int = BRUTE_SITE_CAP,
) -> float:
    """log Z by exhaustive enumeration, exact up to floating rounding.

    ``pinned`` freezes additional interior spins (used for event
    probabilities).  Boxes above ``max_sites`` sites are refused; use
    ``log_partition_transfer`` or the sampler instead.
    """
    n_sites = region.side * region.side
    if n_sites > max_sites:
        raise CapacityError(
            f"brute enumeration over {n_sites} sites exceeds the cap {max_sites}; "
            "use log_partition_transfer (exact) or the Metropolis sampler"
        )
    setup = _brute_setup(region, bc, params, pinned)
    if setup.conflict:
        return -math.inf
    n = len(setup.free)
    if n == 0:
        return -params.beta * setup.const

    chunk = 1 << _CHUNK_BITS
    best = -math.inf
    partials: list[tuple[float, float]] = []
    for lo in range(0, 1 << n, chunk):
        hi = min(1 << n, lo + chunk)
        a = -params.beta * _chunk_energies(setup, params, lo, hi)
        m = float(np.max(a))
        partials.append((m, float(np.sum(np.exp(a - m)))))
        best = max(best, m)
    total = 0.0
    for m, s in partials:  # fixed reduction order
        total += s * math.exp(m - best)
    return best + math.log(total)


# ---------------------------------------------------------------------------
# transfer-matrix backend


@lru_cache(maxsize=8)
def _column_states(side: int) -> tuple[np.ndarray, np.ndarray]:
    """(state x row) spin matrix and the within-column vertical coupling sums."""
    states = np.arange(1 << side, dtype=np.uint32)
    spins = ((states[:, None] >> np.arange(side, dtype=np.uint32)) & 1).astype(np.int8)
    spins = spins * 2 - 1
    vertical = (spins[:, :-1].astype(np.int32) * spins[:, 1:]).sum(axis=1)
    spins.setflags(write=False)
    vertical.setflags(write=False)
    return spins, vertical


def _apply_bond_kernel(u: np.ndarray, row: int, a: float) -> np.ndarray:
    # Contracts the symmetric 2x2 bond kernel [[1, a], [a, 1]] along one row
    # axis of the flat state vector (bit `row` of the state index).
    shaped = u.reshape(-1, 2, 1 << row)
    lo = shaped[:, 0, :]
    hi = shaped[:, 1, :]
    out = np.empty_like(shaped)
    out[:, 0, :] = lo + a * hi
    out[:, 1, :] = a * lo + hi
    return out.reshape(u.shape)


def log_partition_transfer(
    region: Region,
    bc: BoundaryCondition,
    params: ModelParams,
    *,
    pinned: Mapping[Site, int] | None = None,
    max_side: int = TRANSFER_SIDE_CAP,
) -> float:
    """log Z by a column-to-column transfer contraction, exact up to rounding.

    Site-dependent fields and the frozen boundary spins are folded into the
    per-column weights; running max-shift normalization keeps every
    intermediate bounded.
    """
    side = region.side
    if side > max_side:
        raise CapacityError(
            f"transfer contraction over side {side} exceeds the cap {max_side} "
            f"(state space 2**{side}); use the Metropolis sampler"
        )
    spins_i8, vertical = _column_states(side)
    spins = spins_i8.astype(np.float64)
    beta, J = params.beta, params.J

    spin_map = dict(bc.spin_map(region))
    fixed: dict[Site, int] = dict(spin_map)
    if pinned:
        for site, v in pinned.items():
            if site not in region.sites:
                raise ValueError(f"pinned site {site} is not in the box")
            if site in fixed and fixed[site] != v:
                return -math.inf
            fixed[site] = v

    rows = range(region.y0, region.y1 + 1)
    log_scale = 0.0
    u: np.ndarray | None = None
    for x in range(region.x0, region.x1 + 1):
        h_col = np.array([params.field.value((x, y)) for y in rows], dtype=np.float64)
        w = beta * J * vertical.astype(np.float64)
        w += beta * (spins @ h_col)
        w += beta * J * fixed[(x, region.y0 - 1)] * spins[:, 0]
        w += beta * J * fixed[(x, region.y1 + 1)] * spins[:, -1]
        if x == region.x0:
            left = np.array([fixed[(region.x0 - 1, y)] for y in rows], dtype=np.float64)
            w += beta * J * (spins @ left)
        if x == region.x1:
            right = np.array([fixed[(region.x1 + 1, y)] for y in rows], dtype=np.float64)
            w += beta * J * (spins @ right)
        for r, y in enumerate(rows):
            v = fixed.get((x, y))
            if v is not None:
                bit = 1 if v == 1 else 0
                w[((np.arange(1 << side) >> r) & 1) != bit] = -math.inf

        finite = w[np.isfinite(w)]
        if finite.size == 0:
            return -math.inf
        m = float(np.max(finite))
        col = np.exp(w - m)
        if u is None:
            u = col
            log_scale = m
        else:
            a = math.exp(-2.0 * beta * J)
            for r in range(side):
                u = _apply_bond_kernel(u, r, a)
            log_scale += side * beta * J
            u = u * col
            log_scale += m
        peak = float(np.max(u))
        if peak == 0.0:
            return -math.inf
        u /= peak
        log_scale += math.log(peak)

    assert u is not None
    return log_scale + math.log(float(np.sum(u)))


# ---------------------------------------------------------------------------
# dispatch and observables


def log_partition(
    region: Region,
    bc: BoundaryCondition,
    params: ModelParams,
    *,
    method: str = "auto",
    pinned: Mapping[Site, int] | None = None,
) -> float:
    if method == "brute":
        return log_partition_brute(region, bc, params, pinned=pinned)
    if method == "transfer":
        return log_partition_transfer(region, bc, params, pinned=pinned)
    if method == "auto":
        if region.side <= TRANSFER_SIDE_CAP:
            return log_partition_transfer(region, bc, params, pinned=pinned)
        if region.side * region.side <= BRUTE_SITE_CAP:
            return log_partition_brute(region, bc, params, pinned=pinned)
        raise CapacityError(
            f"side {region.side} is beyond both exact backends "
            f"(brute cap {BRUTE_SITE_CAP} sites, transfer cap {TRANSFER_SIDE_CAP}); "
            "use the Metropolis sampler"
        )
    raise ValueError(f"unknown method {method!r}")


def event_log_probability(
    region: Region,
    bc: BoundaryCondition,
    params: ModelParams,
    event: Mapping[Site, int],
    *,
    method: str = "auto",
) -> float:
    """log of the Gibbs probability that the given interior spins take the given signs."""
    for site in event:
        if site not in region.sites:
            raise ValueError(f"event site {site} is not in the box")
    log_z = log_partition(region, bc, params, method=method)
    log_zc = log_partition(region, bc, params, method=method, pinned=dict(event))
    return log_zc - log_z


def magnetization(
    region: Region,
    bc: BoundaryCondition,
    params: ModelParams,
    i: Site,
    *,
    method: str = "auto",
) -> float:
    """Exact expectation of the spin at ``i``, via constrained partition ratios."""
    p_plus = math.exp(event_log_probability(region, bc, params, {i: 1}, method=method))
    return min(1.0, max(-1.0, 2.0 * p_plus - 1.0))


def truncated_correlation(
    region: Region,
    bc: BoundaryCondition,
    params: ModelParams,
    i: Site,
    j: Site,
    *,
    method: str = "auto",
) -> float:
    """<s_i s_j> - <s_i><s_j>; nonnegative under the plus boundary condition."""
    m_i = magnetization(region, bc, params, i, method=method)
    if i == j:
        return 1.0 - m_i * m_i
    m_j = magnetization(region, bc, params, j, method=method)
    log_z = log_partition(region, bc, params, method=method)
    corr = 0.0
    for si in (1, -1):
        for sj in (1, -1):
            log_zc = log_partition(region, bc, params, method=method, pinned={i: si, j: sj})
            corr += si * sj * math.exp(log_zc - log_z)
    return corr - m_i * m_j


def magnetization_gap(
    region: Region, params: ModelParams, i: Site, *, method: str = "auto"
) -> float:
    """<s_i> under plus boundary minus under minus boundary; nonnegative."""
    m_plus = magnetization(region, BoundaryCondition.plus(), params, i, method=method)
    m_minus = magnetization(region, BoundaryCondition.minus(), params, i, method=method)
    return m_plus - m_minus


def _site_exp_weight_expectation(
    region: Region,
    bc: BoundaryCondition,
    params: ModelParams,
    i: Site,
    k: Site,
    c: float,
    method: str,
) -> float:
    """<s_i * exp(c * s_k)> via constrained partition ratios."""
    log_z = log_partition(region, bc, params, method=method)
    total = 0.0
    if i == k:
        for s in (1, -1):
            log_zc = log_partition(region, bc, params, method=method, pinned={k: s})
            total += s * math.exp(c * s) * math.exp(log_zc - log_z)
        return total
    for si in (1, -1):
        for sk in (1, -1):
            log_zc = log_partition(region, bc, params, method=method, pinned={i: si, k: sk})
            total += si * math.exp(c * sk) * math.exp(log_zc - log_z)
    return total


def pinned_ratio_check(
    region: Region,
    params: ModelParams,
    k: Site,
    h_uniform: float,
    *,
    bc: BoundaryCondition | None = None,
    method: str = "brute",
) -> float:
    """Residual of the single-site field-tilt identity.

    With a field that is uniform at ``h_uniform`` except for an override at
    ``k``, the magnetization satisfies, for every site i and any boundary
    condition,

        <s_i>_modified = <s_i exp(beta (h_k - h) s_k)>_uniform * Z_uniform / Z_modified.

    Returns the largest absolute difference between the two sides over i.
    ``params.field`` must be the modified field.
    """
    if k not in region.sites:
        raise ValueError(f"override site {k} is not in the box")
    if bc is None:
        bc = BoundaryCondition.plus()
    modified = params.field
    for site in region.raster_sites:
        if site != k and modified.value(site) != h_uniform:
            raise ValueError(
                f"field must equal the uniform level {h_uniform} away from {k}; "
                f"differs at {site}"
            )
    h_k = modified.value(k)
    uniform_params = ModelParams(J=params.J, beta=params.beta, field=FieldSpec.uniform(h_uniform))
    c = params.beta * (h_k - h_uniform)

    log_z_uniform = log_partition(region, bc, uniform_params, method=method)
    log_z_modified = log_partition(region, bc, params, method=method)
    ratio = math.exp(log_z_uniform - log_z_modified)

    worst = 0.0
    for i in region.raster_sites:
        lhs = magnetization(region, bc, params, i, method=method)
        rhs = (
            _site_exp_weight_expectation(region, bc, uniform_params, i, k, c, method) * ratio
        )
        worst = max(worst, abs(lhs - rhs))
    return worst


# ---------------------------------------------------------------------------
# enumeration helpers and summaries


def iter_minus_configurations(region: Region) -> Iterator[SpinConfiguration]:
    """All configurations with the all-minus boundary, in bit order.

    Bit k of the configuration index is the spin at the k-th raster site.
    """
    bc = BoundaryCondition.minus()
    n = region.side * region.side
    for bits in range(1 << n):
        yield SpinConfiguration.from_bits(region, bc, bits)


def minus_normalized_energy_table(region: Region, params: ModelParams) -> np.ndarray:
    """Normalized minus-boundary energies of every configuration, in bit order.

    Intended for verification at small sizes; refuses boxes over the brute cap.
    """
    n_sites = region.side * region.side
    if n_sites > BRUTE_SITE_CAP:
        raise CapacityError(f"energy table over {n_sites} sites exceeds the cap {BRUTE_SITE_CAP}")
    bc = BoundaryCondition.minus()
    setup = _brute_setup(region, bc, params, None)
    n = len(setup.free)
    chunks = []
    for lo in range(0, 1 << n, 1 << _CHUNK_BITS):
        hi = min(1 << n, lo + (1 << _CHUNK_BITS))
        chunks.append(_chunk_energies(setup, params, lo, hi))
    energies = np.concatenate(chunks) if chunks else np.empty(0)
    return energies - energies[0]  # configuration 0 is all-minus


def log_partition_normalized_minus(region: Region, params: ModelParams) -> float:
    """log Z for the normalized minus-boundary energy (all-minus state has H = 0)."""
    bc = BoundaryCondition.minus()
    shift = params.beta * energy(SpinConfiguration.all_minus(region), params)
    return log_partition_brute(region, bc, params) + shift


@dataclass(frozen=True)
class GibbsSummary:
    """Log-partition value plus site observables, tagged with the method used."""

    log_Z: float
    magnetizations: Mapping[Site, float]
    method: str
    stderr: Mapping[Site, float] | None = None


def gibbs_summary(
    region: Region,
    bc: BoundaryCondition,
    params: ModelParams,
    *,
    sites: tuple[Site, ...] | None = None,
    method: str = "auto",
) -> GibbsSummary:
    if sites is None:
        sites = (region.center,)
    resolved = method
    if method == "auto":
        resolved = "transfer" if region.side <= TRANSFER_SIDE_CAP else "brute"
    log_z = log_partition(region, bc, params, method=resolved)
    mags = {s: magnetization(region, bc, params, s, method=resolved) for s in sites}
    return GibbsSummary(log_Z=log_z, magnetizations=mags, method=resolved)
