import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isingfield import (
    FieldSpec,
    InvalidRegionError,
    ModelParams,
    field_norms,
    graph_distance,
    make_box,
    neighbors,
    parse_field_spec,
)


class TestMakeBox:
    def test_side_one(self):
        r = make_box((0, 0), 1)
        assert r.sites == {(0, 0)}
        assert r.boundary == {(1, 0), (-1, 0), (0, 1), (0, -1)}

    def test_side_two_counts(self):
        r = make_box((0, 0), 2)
        assert len(r.sites) == 4
        assert len(r.boundary) == 8

    def test_side_three_dual_sites(self):
        r = make_box((0, 0), 3)
        assert len(r.dual_sites) == 16

    def test_zero_side_rejected(self):
        with pytest.raises(InvalidRegionError):
            make_box((0, 0), 0)

    def test_boundary_excludes_corners(self):
        r = make_box((0, 0), 2)
        # corner diagonals are at graph distance 2
        assert (x := (r.x0 - 1, r.y0 - 1)) not in r.boundary and graph_distance(x, (r.x0, r.y0)) == 2

    @given(
        cx=st.integers(-5, 5),
        cy=st.integers(-5, 5),
        side=st.integers(1, 7),
    )
    @settings(max_examples=60, deadline=None)
    def test_boundary_properties(self, cx, cy, side):
        r = make_box((cx, cy), side)
        assert len(r.sites) == side * side
        assert len(r.boundary) == 4 * side
        assert not (r.boundary & r.sites)
        for b in r.boundary:
            inside = [n for n in neighbors(b) if n in r.sites]
            assert len(inside) == 1

    def test_consecutive_sides_nest(self):
        prev = make_box((2, -3), 4)
        for side in range(5, 10):
            cur = make_box((2, -3), side)
            assert prev.sites < cur.sites
            prev = cur

    def test_raster_order_row_major(self):
        r = make_box((0, 0), 2)
        assert r.raster_sites == ((0, 0), (1, 0), (0, 1), (1, 1))


class TestFieldSpecValues:
    def test_uniform(self):
        f = FieldSpec.uniform(0.3)
        assert f.value((7, -9)) == 0.3

    def test_powerlaw_decay(self):
        f = FieldSpec.power_law(0.02, 3)
        assert f.value((0, 0)) == 0.02
        assert f.value((1, 0)) == 0.02 / 8
        assert f.value((1, 1)) == 0.02 / 27

    def test_table_with_tail(self):
        f = FieldSpec.table({(0, 0): 5.0}, tail=FieldSpec.uniform(0.1))
        assert f.value((0, 0)) == 5.0
        assert f.value((3, 3)) == 0.1

    def test_zeroed_on_window(self):
        base = FieldSpec.uniform(0.4)
        window = make_box((0, 0), 3).sites
        z = base.zeroed_on(window)
        assert z.value((0, 0)) == 0.0
        assert z.value((5, 5)) == 0.4

    def test_shifted(self):
        f = FieldSpec.shifted(0.5, 0.1, 3)
        assert f.value((0, 0)) == 0.6
        assert abs(f.value((100, 0)) - 0.5) < 1e-5


class TestFieldNorms:
    def test_table_exact(self):
        f = FieldSpec.table({(0, 0): 0.5, (1, 0): -0.25})
        n = field_norms(f)
        assert n.l1 == 0.75
        assert n.sup == 0.5
        assert n.inf_outside_every_box == 0.0

    def test_uniform_nonzero(self):
        n = field_norms(FieldSpec.uniform(0.3))
        assert math.isinf(n.l1)
        assert n.inf_outside_every_box == 0.3

    def test_uniform_zero(self):
        n = field_norms(FieldSpec.zero())
        assert n.l1 == 0.0

    def test_shifted_liminf(self):
        n = field_norms(FieldSpec.shifted(0.5, 0.1, 3))
        assert math.isinf(n.l1)
        assert n.inf_outside_every_box == 0.5
        assert n.sup == 0.6

    def test_powerlaw_vs_wide_summation_oracle(self):
        # independent oracle: direct summation over the radius-10^4 ball
        amp, p = 0.02, 3.0
        shells = np.arange(1, 10**4 + 1, dtype=np.float64)
        oracle = amp + float(np.sum(4.0 * shells * amp * (1.0 + shells) ** (-p)))
        tol = 1e-6
        reported = field_norms(FieldSpec.power_law(amp, p), tail_tolerance=tol).l1
        assert reported >= oracle  # certified overestimate, never below a partial sum
        assert reported - oracle <= tol + 4 * amp / 10**4  # oracle is itself truncated

    def test_powerlaw_never_underestimates(self):
        f = FieldSpec.power_law(0.02, 3)
        tight = field_norms(f, tail_tolerance=1e-7).l1
        loose = field_norms(f, tail_tolerance=1e-3).l1
        assert loose >= tight - 1e-7
        assert loose - tight <= 1e-3

    @given(p=st.floats(2.6, 6.0), a=st.floats(0.001, 1.0))
    @settings(max_examples=25, deadline=None)
    def test_powerlaw_l1_monotone_in_exponent(self, p, a):
        # slowly decaying exponents need a loose certified tolerance to keep
        # the summation radius sane; monotonicity is far coarser than 2e-3
        tol = 2e-3
        lo = field_norms(FieldSpec.power_law(a, p), tail_tolerance=tol).l1
        hi = field_norms(FieldSpec.power_law(a, p + 0.5), tail_tolerance=tol).l1
        assert hi <= lo + 2 * tol

    def test_unattainable_tolerance_raises(self):
        with pytest.raises(ValueError, match="radius"):
            field_norms(FieldSpec.power_law(1.0, 2.05), tail_tolerance=1e-6)

    def test_powerlaw_not_summable_at_low_exponent(self):
        assert math.isinf(field_norms(FieldSpec.power_law(1.0, 2.0)).l1)

    def test_table_with_tail_l1(self):
        tail = FieldSpec.power_law(0.02, 3)
        window = make_box((0, 0), 3).sites
        overlay = FieldSpec.table({s: 0.0 for s in window}, tail=tail)
        full = field_norms(tail).l1
        window_mass = sum(abs(tail.value(s)) for s in window)
        got = field_norms(overlay).l1
        assert abs(got - (full - window_mass)) < 1e-9

    def test_bad_tolerance(self):
        with pytest.raises(ValueError):
            field_norms(FieldSpec.zero(), tail_tolerance=0.0)


class TestModelParams:
    def test_requires_positive_coupling(self):
        with pytest.raises(ValueError):
            ModelParams(J=0.0, beta=1.0)

    def test_requires_nonnegative_beta(self):
        with pytest.raises(ValueError):
            ModelParams(J=1.0, beta=-0.1)


class TestParser:
    def test_uniform(self):
        assert parse_field_spec("uniform:h=0.3") == FieldSpec.uniform(0.3)

    def test_powerlaw(self):
        assert parse_field_spec("powerlaw:A=0.02,p=3") == FieldSpec.power_law(0.02, 3)

    def test_shifted(self):
        assert parse_field_spec("shifted:c=0.5,A=0.1,p=3") == FieldSpec.shifted(0.5, 0.1, 3)

    def test_table_plain(self, tmp_path):
        path = tmp_path / "f.json"
        path.write_text(json.dumps({"0,0": 0.5, "1,-2": -0.25}))
        f = parse_field_spec(f"table:@{path}")
        assert f.value((0, 0)) == 0.5
        assert f.value((1, -2)) == -0.25
        assert f.value((9, 9)) == 0.0

    def test_table_with_tail(self, tmp_path):
        path = tmp_path / "f.json"
        path.write_text(
            json.dumps({"entries": {"0,0": 0.2}, "tail": "powerlaw:A=0.02,p=3"})
        )
        f = parse_field_spec(f"table:@{path}")
        assert f.value((0, 0)) == 0.2
        assert f.value((2, 0)) == 0.02 / 27

    @pytest.mark.parametrize(
        "bad",
        ["uniform", "uniform:x=1", "powerlaw:A=1", "gauss:s=1", "table:file.json"],
    )
    def test_rejects_malformed(self, bad):
        with pytest.raises(ValueError):
            parse_field_spec(bad)
