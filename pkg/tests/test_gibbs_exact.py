import math

import numpy as np
import pytest

from isingfield import (
    BoundaryCondition,
    CapacityError,
    FieldSpec,
    ModelParams,
    SpinConfiguration,
    energy,
    energy_normalized_minus,
    event_log_probability,
    gibbs_summary,
    log_partition,
    log_partition_brute,
    log_partition_normalized_minus,
    log_partition_transfer,
    magnetization,
    magnetization_gap,
    make_box,
    pinned_ratio_check,
    truncated_correlation,
)

from conftest import naive_gibbs, random_explicit_bc, random_table_field

PLUS = BoundaryCondition.plus()
MINUS = BoundaryCondition.minus()


class TestEnergy:
    def test_two_by_two_all_aligned(self):
        r = make_box((0, 0), 2)
        cfg = SpinConfiguration.fill(r, PLUS, 1)
        assert energy(cfg, ModelParams(J=1.0, beta=1.0)) == -12.0

    def test_two_by_two_interior_flipped(self):
        r = make_box((0, 0), 2)
        cfg = SpinConfiguration.fill(r, PLUS, -1)
        # 4 interior bonds aligned (+1 each), 8 crossing bonds broken (-1 each)
        assert energy(cfg, ModelParams(J=1.0, beta=1.0)) == 4.0

    def test_single_site_with_field(self):
        r = make_box((0, 0), 1)
        cfg = SpinConfiguration.fill(r, PLUS, 1)
        p = ModelParams(J=1.0, beta=1.0, field=FieldSpec.table({(0, 0): 0.5}))
        assert energy(cfg, p) == -4.5


class TestNormalizedMinusEnergy:
    def test_all_minus_is_zero(self):
        r = make_box((0, 0), 3)
        cfg = SpinConfiguration.all_minus(r)
        assert energy_normalized_minus(cfg, ModelParams(J=1.3, beta=1.0)) == 0.0

    def test_single_plus_no_field(self):
        r = make_box((0, 0), 3)
        vals = {s: (1 if s == (0, 0) else -1) for s in r.raster_sites}
        cfg = SpinConfiguration.from_mapping(r, MINUS, vals)
        J = 0.9
        assert energy_normalized_minus(cfg, ModelParams(J=J, beta=1.0)) == pytest.approx(8 * J)

    def test_single_plus_with_field(self):
        r = make_box((0, 0), 3)
        vals = {s: (1 if s == (0, 0) else -1) for s in r.raster_sites}
        cfg = SpinConfiguration.from_mapping(r, MINUS, vals)
        h0 = 0.37
        p = ModelParams(J=1.0, beta=1.0, field=FieldSpec.table({(0, 0): h0}))
        assert energy_normalized_minus(cfg, p) == pytest.approx(8.0 - 2.0 * h0)

    def test_requires_minus_bc(self):
        r = make_box((0, 0), 2)
        cfg = SpinConfiguration.fill(r, PLUS, 1)
        with pytest.raises(ValueError):
            energy_normalized_minus(cfg, ModelParams(J=1.0, beta=1.0))

    def test_shift_is_configuration_independent(self):
        rng = np.random.default_rng(5)
        r = make_box((0, 0), 3)
        p = ModelParams(J=1.1, beta=0.8, field=random_table_field(rng, r))
        shifts = set()
        for _ in range(10):
            bits = int(rng.integers(0, 512))
            cfg = SpinConfiguration.from_bits(r, MINUS, bits)
            shifts.add(round(energy_normalized_minus(cfg, p) - energy(cfg, p), 12))
        assert len(shifts) == 1

    def test_measures_identical(self):
        # per-configuration probabilities from the raw and normalized energies
        rng = np.random.default_rng(6)
        r = make_box((0, 0), 2)
        p = ModelParams(J=1.0, beta=0.9, field=random_table_field(rng, r))
        raw = []
        norm = []
        for bits in range(16):
            cfg = SpinConfiguration.from_bits(r, MINUS, bits)
            raw.append(math.exp(-p.beta * energy(cfg, p)))
            norm.append(math.exp(-p.beta * energy_normalized_minus(cfg, p)))
        zr, zn = sum(raw), sum(norm)
        for a, b in zip(raw, norm):
            assert abs(a / zr - b / zn) < 1e-14


class TestLogPartition:
    def test_infinite_temperature(self):
        r = make_box((0, 0), 3)
        p = ModelParams(J=1.0, beta=0.0, field=FieldSpec.uniform(0.7))
        expected = 9 * math.log(2)
        assert log_partition_brute(r, PLUS, p) == pytest.approx(expected, abs=1e-12)
        assert log_partition_transfer(r, MINUS, p) == pytest.approx(expected, abs=1e-12)

    def test_single_site_closed_form(self):
        r = make_box((0, 0), 1)
        p = ModelParams(J=1.0, beta=0.5)
        expected = math.log(2 * math.cosh(0.5 * 4.0))
        assert log_partition_brute(r, PLUS, p) == pytest.approx(expected, rel=1e-14)

    def test_brute_matches_naive_oracle(self):
        rng = np.random.default_rng(11)
        r = make_box((0, 0), 3)
        for _ in range(3):
            p = ModelParams(
                J=float(rng.uniform(0.5, 1.5)),
                beta=float(rng.uniform(0.1, 1.5)),
                field=random_table_field(rng, r),
            )
            bc = random_explicit_bc(rng, r)
            expected, _, _ = naive_gibbs(r, bc, p)
            assert log_partition_brute(r, bc, p) == pytest.approx(expected, rel=1e-12)

    def test_transfer_matches_brute_all_small_boxes(self):
        rng = np.random.default_rng(12)
        for side in (1, 2, 3, 4):
            r = make_box((1, -2), side)
            for bc in (PLUS, MINUS, random_explicit_bc(rng, r)):
                p = ModelParams(
                    J=float(rng.uniform(0.5, 1.5)),
                    beta=float(rng.uniform(0.1, 1.5)),
                    field=random_table_field(rng, r),
                )
                lb = log_partition_brute(r, bc, p)
                lt = log_partition_transfer(r, bc, p)
                assert lt == pytest.approx(lb, rel=1e-12)

    def test_transfer_matches_brute_five_by_five(self):
        # exercises the multi-chunk deterministic reduction
        rng = np.random.default_rng(13)
        r = make_box((0, 0), 5)
        p = ModelParams(J=1.0, beta=0.6, field=random_table_field(rng, r, -0.3, 0.3))
        assert log_partition_transfer(r, MINUS, p) == pytest.approx(
            log_partition_brute(r, MINUS, p), rel=1e-12
        )

    def test_brute_deterministic_across_runs(self):
        r = make_box((0, 0), 4)
        p = ModelParams(J=1.0, beta=2.0, field=FieldSpec.uniform(0.05))
        assert log_partition_brute(r, PLUS, p) == log_partition_brute(r, PLUS, p)

    def test_global_flip_symmetry_at_zero_field(self):
        r = make_box((0, 0), 4)
        p = ModelParams(J=1.0, beta=0.7)
        assert log_partition_transfer(r, PLUS, p) == pytest.approx(
            log_partition_transfer(r, MINUS, p), rel=1e-14
        )

    def test_high_beta_survives(self):
        r = make_box((0, 0), 3)
        p = ModelParams(J=1.0, beta=50.0, field=FieldSpec.uniform(0.2))
        lb = log_partition_brute(r, PLUS, p)
        lt = log_partition_transfer(r, PLUS, p)
        assert math.isfinite(lb) and lt == pytest.approx(lb, rel=1e-12)

    def test_pinned_interior_via_explicit_bc(self):
        rng = np.random.default_rng(14)
        r = make_box((0, 0), 3)
        vals = {s: int(rng.choice((-1, 1))) for s in r.boundary}
        vals[(0, 0)] = 1
        bc = BoundaryCondition.explicit(vals)
        p = ModelParams(J=1.0, beta=0.8, field=random_table_field(rng, r))
        expected, _, _ = naive_gibbs(r, bc, p)
        assert log_partition_brute(r, bc, p) == pytest.approx(expected, rel=1e-12)
        assert log_partition_transfer(r, bc, p) == pytest.approx(expected, rel=1e-12)

    def test_brute_capacity_error_names_alternatives(self):
        r = make_box((0, 0), 6)
        p = ModelParams(J=1.0, beta=1.0)
        with pytest.raises(CapacityError, match="transfer"):
            log_partition_brute(r, PLUS, p)

    def test_transfer_capacity_error(self):
        r = make_box((0, 0), 21)
        with pytest.raises(CapacityError, match="sampler"):
            log_partition_transfer(r, PLUS, ModelParams(J=1.0, beta=1.0))

    def test_auto_dispatch_beyond_caps(self):
        r = make_box((0, 0), 21)
        with pytest.raises(CapacityError):
            log_partition(r, PLUS, ModelParams(J=1.0, beta=1.0), method="auto")


class TestMagnetization:
    def test_single_site_closed_form(self):
        r = make_box((0, 0), 1)
        h0 = 0.25
        p = ModelParams(J=1.0, beta=0.5, field=FieldSpec.table({(0, 0): h0}))
        m = magnetization(r, PLUS, p, (0, 0), method="brute")
        assert m == pytest.approx(math.tanh(0.5 * (4.0 + h0)), rel=1e-12)

    def test_flip_antisymmetry_at_zero_field(self):
        r = make_box((0, 0), 3)
        p = ModelParams(J=1.0, beta=0.9)
        mp = magnetization(r, PLUS, p, (1, 0))
        mm = magnetization(r, MINUS, p, (1, 0))
        assert mp == pytest.approx(-mm, abs=1e-13)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(21)
        r = make_box((0, 0), 3)
        p = ModelParams(J=1.2, beta=0.8, field=random_table_field(rng, r))
        bc = random_explicit_bc(rng, r)
        _, mags, _ = naive_gibbs(r, bc, p)
        for site in ((0, 0), (1, 1), (-1, -1)):
            got = magnetization(r, bc, p, site, method="brute")
            assert got == pytest.approx(mags[site], abs=1e-12)

    def test_site_outside_box_rejected(self):
        r = make_box((0, 0), 2)
        with pytest.raises(ValueError):
            magnetization(r, PLUS, ModelParams(J=1.0, beta=1.0), (9, 9))

    def test_in_unit_interval(self):
        r = make_box((0, 0), 3)
        p = ModelParams(J=1.0, beta=50.0, field=FieldSpec.uniform(1.0))
        m = magnetization(r, PLUS, p, (0, 0))
        assert -1.0 <= m <= 1.0


class TestTruncatedCorrelation:
    def test_independence_at_infinite_temperature(self):
        r = make_box((0, 0), 3)
        p = ModelParams(J=1.0, beta=0.0)
        assert truncated_correlation(r, PLUS, p, (0, 0), (1, 0)) == pytest.approx(0.0, abs=1e-13)

    def test_diagonal_value(self):
        r = make_box((0, 0), 3)
        p = ModelParams(J=1.0, beta=0.6, field=FieldSpec.uniform(0.1))
        m = magnetization(r, PLUS, p, (0, 0))
        assert truncated_correlation(r, PLUS, p, (0, 0), (0, 0)) == pytest.approx(
            1 - m * m, abs=1e-12
        )

    def test_matches_naive_oracle(self):
        r = make_box((0, 0), 3)
        p = ModelParams(J=1.0, beta=1.0)
        _, mags, pair = naive_gibbs(r, PLUS, p)
        i, j = (0, 0), (1, 0)
        expected = pair(i, j) - mags[i] * mags[j]
        got = truncated_correlation(r, PLUS, p, i, j, method="brute")
        assert got == pytest.approx(expected, abs=1e-12)
        assert got > 0


class TestMagnetizationGap:
    def test_zero_at_infinite_temperature(self):
        r = make_box((0, 0), 3)
        assert magnetization_gap(r, ModelParams(J=1.0, beta=0.0), (0, 0)) == pytest.approx(
            0.0, abs=1e-13
        )

    def test_twice_plus_magnetization_at_zero_field(self):
        r = make_box((0, 0), 3)
        p = ModelParams(J=1.0, beta=0.8)
        gap = magnetization_gap(r, p, (0, 0))
        assert gap == pytest.approx(2 * magnetization(r, PLUS, p, (0, 0)), abs=1e-12)
        assert gap >= 0

    def test_volume_monotonicity_uniform_field(self):
        p = ModelParams(J=1.0, beta=1.0, field=FieldSpec.uniform(0.5))
        gaps = [
            magnetization_gap(make_box((0, 0), s), p, (0, 0), method="transfer")
            for s in (4, 6, 10)
        ]
        assert gaps[0] > gaps[1] > gaps[2]


class TestPinnedRatioIdentity:
    def test_no_override_gives_zero_residual(self):
        r = make_box((0, 0), 3)
        p = ModelParams(J=1.0, beta=1.0, field=FieldSpec.uniform(0.3))
        assert pinned_ratio_check(r, p, (0, 0), 0.3) < 1e-13

    def test_center_override(self):
        r = make_box((0, 0), 3)
        field = FieldSpec.table({(0, 0): 1.0}, tail=FieldSpec.uniform(0.3))
        p = ModelParams(J=1.0, beta=1.0, field=field)
        assert pinned_ratio_check(r, p, (0, 0), 0.3) < 1e-12

    def test_residual_independent_of_boundary_condition(self):
        rng = np.random.default_rng(31)
        r = make_box((0, 0), 3)
        field = FieldSpec.table({(1, 1): -0.7}, tail=FieldSpec.uniform(0.2))
        p = ModelParams(J=1.0, beta=0.9, field=field)
        for bc in (PLUS, MINUS, random_explicit_bc(rng, r)):
            assert pinned_ratio_check(r, p, (1, 1), 0.2, bc=bc) < 1e-12

    def test_rejects_non_uniform_remainder(self):
        r = make_box((0, 0), 3)
        field = FieldSpec.table({(0, 0): 1.0, (1, 0): 0.9}, tail=FieldSpec.uniform(0.3))
        p = ModelParams(J=1.0, beta=1.0, field=field)
        with pytest.raises(ValueError):
            pinned_ratio_check(r, p, (0, 0), 0.3)


class TestOrderInequalities:
    """Exact small-box versions of the correlation-inequality properties."""

    def test_field_monotonicity(self):
        rng = np.random.default_rng(41)
        r = make_box((0, 0), 3)
        base = random_table_field(rng, r)
        bumped = FieldSpec.table(
            {s: base.value(s) + (0.4 if s == (0, 0) else 0.0) for s in r.raster_sites}
        )
        for site in r.raster_sites:
            lo = magnetization(r, PLUS, ModelParams(J=1.0, beta=0.8, field=base), site)
            hi = magnetization(r, PLUS, ModelParams(J=1.0, beta=0.8, field=bumped), site)
            assert hi >= lo - 1e-12

    def test_boundary_sandwich(self):
        rng = np.random.default_rng(42)
        r = make_box((0, 0), 3)
        p = ModelParams(J=1.0, beta=0.7, field=random_table_field(rng, r))
        omega = random_explicit_bc(rng, r)
        for site in ((0, 0), (1, 1)):
            lo = magnetization(r, MINUS, p, site)
            mid = magnetization(r, omega, p, site)
            hi = magnetization(r, PLUS, p, site)
            assert lo - 1e-12 <= mid <= hi + 1e-12

    def test_nonnegative_field_dominates_zero_field(self):
        rng = np.random.default_rng(43)
        r = make_box((0, 0), 3)
        f = random_table_field(rng, r, 0.0, 0.5)
        p = ModelParams(J=1.0, beta=0.8, field=f)
        p0 = ModelParams(J=1.0, beta=0.8)
        for site in r.raster_sites:
            assert magnetization(r, PLUS, p, site) >= magnetization(r, PLUS, p0, site) - 1e-12

    def test_truncated_correlation_nonincreasing_in_field(self):
        r = make_box((0, 0), 3)
        base = ModelParams(J=1.0, beta=0.8, field=FieldSpec.uniform(0.1))
        bumped = ModelParams(
            J=1.0,
            beta=0.8,
            field=FieldSpec.table({(1, 1): 0.8}, tail=FieldSpec.uniform(0.1)),
        )
        i, j = (0, 0), (1, 0)
        assert truncated_correlation(r, PLUS, bumped, i, j) <= truncated_correlation(
            r, PLUS, base, i, j
        ) + 1e-12


class TestEventsAndSummary:
    def test_event_probabilities_sum_to_one(self):
        r = make_box((0, 0), 3)
        p = ModelParams(J=1.0, beta=0.9, field=FieldSpec.uniform(0.2))
        total = sum(
            math.exp(event_log_probability(r, PLUS, p, {(0, 0): s1, (1, 1): s2}))
            for s1 in (-1, 1)
            for s2 in (-1, 1)
        )
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_conflicting_pin_has_zero_probability(self):
        r = make_box((0, 0), 2)
        bc = BoundaryCondition.explicit(
            {**{s: 1 for s in r.boundary}, (0, 0): 1}
        )
        p = ModelParams(J=1.0, beta=1.0)
        assert event_log_probability(r, bc, p, {(0, 0): -1}) == -math.inf

    def test_summary_method_tag(self):
        r = make_box((0, 0), 3)
        p = ModelParams(J=1.0, beta=0.5)
        s = gibbs_summary(r, PLUS, p)
        assert s.method == "transfer"
        assert set(s.magnetizations) == {(0, 0)}
        assert s.log_Z == pytest.approx(log_partition_brute(r, PLUS, p), rel=1e-12)

    def test_normalized_partition_consistency(self):
        r = make_box((0, 0), 3)
        p = ModelParams(J=1.0, beta=0.7, field=FieldSpec.power_law(0.02, 3))
        # direct sum of normalized Boltzmann factors
        total = 0.0
        for bits in range(512):
            cfg = SpinConfiguration.from_bits(r, MINUS, bits)
            total += math.exp(-p.beta * energy_normalized_minus(cfg, p))
        assert log_partition_normalized_minus(r, p) == pytest.approx(math.log(total), rel=1e-12)
