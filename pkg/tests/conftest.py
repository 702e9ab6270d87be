"""Shared helpers: an independent direct-sum Gibbs oracle and random instances.

The oracle enumerates configurations as plain dicts and accumulates raw
Boltzmann weights with math.exp, deliberately avoiding the library's
log-domain, chunked and transfer code paths so it can serve as a reference
for all of them.  It is only usable for small boxes.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from isingfield import BoundaryCondition, FieldSpec, ModelParams, Region, free_sites


def naive_gibbs(region: Region, bc: BoundaryCondition, params: ModelParams):
    """Return (log Z, magnetizations dict, pair correlation function).

    The correlation function maps (i, j) to <s_i s_j> computed on demand.
    """
    free = list(free_sites(region, bc))
    fixed = bc.spin_map(region)
    bonds = region.bonds
    sites = region.raster_sites
    h = {s: params.field.value(s) for s in sites}

    weights = []
    configs = []
    for assignment in itertools.product((-1, 1), repeat=len(free)):
        vals = dict(fixed)
        vals.update(zip(free, assignment))
        e = 0.0
        for a, b in bonds:
            e -= params.J * vals[a] * vals[b]
        for s in sites:
            e -= h[s] * vals[s]
        weights.append(math.exp(-params.beta * e))
        configs.append(vals)

    z = sum(weights)
    mags = {
        s: sum(w * vals[s] for w, vals in zip(weights, configs)) / z for s in sites
    }

    def pair(i, j):
        return sum(w * vals[i] * vals[j] for w, vals in zip(weights, configs)) / z

    return math.log(z), mags, pair


def random_table_field(rng: np.random.Generator, region: Region, lo=-0.5, hi=0.5) -> FieldSpec:
    return FieldSpec.table({s: float(rng.uniform(lo, hi)) for s in region.raster_sites})


def random_explicit_bc(rng: np.random.Generator, region: Region) -> BoundaryCondition:
    return BoundaryCondition.explicit(
        {s: int(rng.choice((-1, 1))) for s in region.boundary}
    )
