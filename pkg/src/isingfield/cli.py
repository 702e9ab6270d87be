"""Experiment runner: reproducible commands over the library with report output.

Commands:

* ``exact-gap``        plus/minus magnetization gap over nested boxes
* ``contour-verify``   bijection, contour-sum partition function, weight and
                       envelope identities on a small box
* ``peierls``          exact minus-boundary plus-spin probability vs its
                       closed-form bound across a beta grid
* ``corollary``        gap experiment before and after zeroing the field on a
                       finite window
* ``mc-gap``           sampled gap for boxes beyond exact reach

Every reported number carries a method tag (brute/transfer/contour/sampled)
and an error bound (0 for exact-to-rounding methods, the standard error for
sampled ones).  Exit status: 0 when all checks pass, 2 when an assertion
fails, 3 on regime or capacity errors.  Output is a human table on stdout
and, with ``--out csv|json --path FILE``, a machine-readable file that is
byte-identical across reruns except for its timestamp field.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field as dc_field
from datetime import datetime, timezone

from . import __version__
from .bounds import c_beta, entropy_ratio, peierls_bound
from .contour import (
    extract_contours,
    iter_families,
    lemma2_sandwich_exhaustive,
    log_partition_contour,
    minus_bc_plus_probability_bound,
    reconstruct_configuration,
    weight_identity_residual,
)
from .errors import CapacityError, InvalidRegionError, RegimeError, VerificationError
from .field_lattice import FieldSpec, ModelParams, Site, field_norms, make_box, parse_field_spec
from .gibbs_exact import (
    BoundaryCondition,
    iter_minus_configurations,
    log_partition_normalized_minus,
    magnetization_gap,
)
from .sampler import RNG_NAME, ChainConfig, sample_gap


@dataclass
class ExperimentReport:
    command: str
    params: dict
    rows: list[dict] = dc_field(default_factory=list)
    checks: list[dict] = dc_field(default_factory=list)
    wall_clock_s: float = 0.0
    version: str = __version__
    timestamp: str = ""

    def check(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append({"name": name, "passed": bool(passed), "detail": detail})

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def human(self) -> str:
        out = io.StringIO()
        out.write(f"command: {self.command}\n")
        out.write(f"params: {json.dumps(self.params, sort_keys=True)}\n")
        if self.rows:
            cols = list(self.rows[0].keys())
            widths = [
                max(len(c), max(len(_fmt(r.get(c))) for r in self.rows)) for c in cols
            ]
            out.write("  ".join(c.ljust(w) for c, w in zip(cols, widths)) + "\n")
            for r in self.rows:
                out.write(
                    "  ".join(_fmt(r.get(c)).ljust(w) for c, w in zip(cols, widths)) + "\n"
                )
        for c in self.checks:
            status = "PASS" if c["passed"] else "FAIL"
            detail = f"  ({c['detail']})" if c["detail"] else ""
            out.write(f"check {c['name']}: {status}{detail}\n")
        out.write(f"wall clock: {self.wall_clock_s:.3f} s\n")
        return out.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "command": self.command,
                "params": self.params,
                "version": self.version,
                "timestamp": self.timestamp,
                "wall_clock_s": self.wall_clock_s,
                "rows": self.rows,
                "checks": self.checks,
                "passed": self.passed,
            },
            sort_keys=True,
            indent=2,
        )

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(f"# command: {self.command}\n")
        out.write(f"# params: {json.dumps(self.params, sort_keys=True)}\n")
        out.write(f"# version: {self.version}\n")
        out.write(f"# timestamp: {self.timestamp}\n")
        if self.rows:
            cols = list(self.rows[0].keys())
            out.write(",".join(cols) + "\n")
            for r in self.rows:
                out.write(",".join(_fmt(r.get(c)) for c in cols) + "\n")
        for c in self.checks:
            out.write(f"# check: {c['name']} passed={c['passed']} {c['detail']}\n")
        return out.getvalue()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_site(text: str) -> Site:
    x, _, y = text.partition(",")
    return (int(x), int(y))


class _FieldAction(argparse.Action):
    """Parses the field grammar and keeps the raw text for the report echo."""

    def __call__(self, parser, namespace, value, option_string=None):
        try:
            spec = parse_field_spec(value)
        except (ValueError, OSError) as exc:
            raise argparse.ArgumentError(self, str(exc)) from exc
        setattr(namespace, self.dest, spec)
        setattr(namespace, "field_text", value)


def _beta_grid(text: str) -> list[float]:
    return [float(b) for b in text.split(",") if b]


def _regime(params: ModelParams) -> tuple[str, dict]:
    norms = field_norms(params.field)
    info = {
        "l1": norms.l1 if math.isfinite(norms.l1) else "inf",
        "sup": norms.sup,
        "liminf": norms.inf_outside_every_box,
    }
    if math.isfinite(norms.l1) and params.J > 3.0 * norms.l1:
        return "transition", info
    if norms.inf_outside_every_box > 0 or norms.sup < 0:
        return "uniqueness", info
    return "none", info


def _gap_trend_checks(report: ExperimentReport, gaps: list[float], params: ModelParams) -> None:
    regime, info = _regime(params)
    report.params["regime"] = regime
    report.params["field_norms"] = info
    non_increasing = all(b <= a + 1e-9 for a, b in zip(gaps, gaps[1:]))
    report.check(
        "gap-non-increasing-in-volume",
        non_increasing,
        "nested boxes can only shrink the gap",
    )
    if regime == "transition":
        if entropy_ratio(params.beta, params.J) < 1.0:
            floor = 2.0 * (1.0 - 2.0 * c_beta(params.beta, params.J).value) - 0.05
            report.check(
                "gap-plateau-above-prediction",
                gaps[-1] >= floor,
                f"final gap {gaps[-1]:.6f} vs floor {floor:.6f}",
            )
        else:
            report.check(
                "gap-plateau-above-prediction",
                True,
                "beta too small for the series prediction; skipped",
            )
    elif regime == "uniqueness":
        report.check(
            "gap-decays",
            gaps[-1] <= 0.5 * gaps[0] + 1e-12,
            f"final gap {gaps[-1]:.6f} vs half of first {0.5 * gaps[0]:.6f}",
        )


def cmd_exact_gap(args) -> ExperimentReport:
    params = ModelParams(J=args.J, beta=args.beta, field=args.field)
    site = args.site
    report = ExperimentReport(
        command="exact-gap",
        params={
            "box_min": args.box_min,
            "box_max": args.box_max,
            "beta": args.beta,
            "J": args.J,
            "field": args.field_text,
            "site": f"{site[0]},{site[1]}",
            "method": args.method,
        },
    )
    gaps = []
    for side in range(args.box_min, args.box_max + 1):
        region = make_box(site, side)
        try:
            gap = magnetization_gap(region, params, site, method=args.method)
        except CapacityError as exc:
            raise CapacityError(f"{exc}; at this size run `ising mc-gap`") from exc
        gaps.append(gap)
        report.rows.append(
            {"side": side, "gap": gap, "method": args.method, "error_bound": 0.0}
        )
    _gap_trend_checks(report, gaps, params)
    return report


def cmd_contour_verify(args) -> ExperimentReport:
    if args.box > 4:
        raise CapacityError("contour-verify enumerates every configuration; --box must be <= 4")
    params_echo = {
        "box": args.box,
        "beta_grid": args.beta_grid,
        "J": args.J,
        "field": args.field_text,
    }
    report = ExperimentReport(command="contour-verify", params=params_echo)
    region = make_box((0, 0), args.box)
    n_sites = args.box * args.box

    roundtrip_ok = True
    families = 0
    seen = set()
    for config in iter_minus_configurations(region):
        family = extract_contours(config)
        back = reconstruct_configuration(family, validate=False)
        if back.spins != config.spins:
            roundtrip_ok = False
        seen.add(frozenset((c.vertices, c.sign) for c in family.contours))
        families += 1
    report.check("bijection-roundtrip", roundtrip_ok, f"{families} configurations")
    report.check(
        "family-count",
        len(seen) == 1 << n_sites,
        f"{len(seen)} distinct families vs 2^{n_sites}",
    )

    summable = math.isfinite(field_norms(args.field).l1)
    for beta in args.beta_grid:
        params = ModelParams(J=args.J, beta=beta, field=args.field)
        z_residual = abs(
            log_partition_contour(region, params) - log_partition_normalized_minus(region, params)
        )
        w_residual = weight_identity_residual(region, params)
        row = {
            "beta": beta,
            "logZ_residual": z_residual,
            "weight_residual": w_residual,
            "method": "contour",
        }
        if summable:
            sandwich = lemma2_sandwich_exhaustive(region, params)
            row["sandwich_slack_low"] = sandwich.slack_low
            row["sandwich_slack_high"] = sandwich.slack_high
            report.check(
                f"sandwich-beta-{beta:g}",
                sandwich.holds,
                f"slacks {sandwich.slack_low:.3e}/{sandwich.slack_high:.3e}",
            )
        report.rows.append(row)
        report.check(f"logZ-equality-beta-{beta:g}", z_residual <= 1e-10, f"{z_residual:.3e}")
        report.check(f"weight-identity-beta-{beta:g}", w_residual <= 1e-10, f"{w_residual:.3e}")
    if not summable:
        report.check("sandwich", True, "skipped: field is not summable")

    if args.dump:
        payload = []
        for bits, family in enumerate(iter_families(region)):
            if bits >= 256:
                break
            payload.append(
                {
                    "configuration_index": bits,
                    "contours": [c.to_dict() for c in sorted(family.contours, key=lambda c: c.vertices)],
                }
            )
        with open(args.dump, "w", encoding="utf-8") as fh:
            json.dump({"box": args.box, "families": payload}, fh, indent=2)
        report.params["dump"] = args.dump
    return report


def cmd_peierls(args) -> ExperimentReport:
    site = args.site
    region = make_box(site, args.box)
    report = ExperimentReport(
        command="peierls",
        params={
            "box": args.box,
            "beta_grid": args.beta_grid,
            "J": args.J,
            "field": args.field_text,
            "site": f"{site[0]},{site[1]}",
        },
    )
    for beta in args.beta_grid:
        params = ModelParams(J=args.J, beta=beta, field=args.field)
        exact, bound = minus_bc_plus_probability_bound(region, params, site, method=args.method)
        report.rows.append(
            {
                "beta": beta,
                "exact_prob_plus": exact,
                "closed_form_bound": bound,
                "method": args.method,
                "error_bound": 0.0,
            }
        )
        report.check(f"exact-below-bound-beta-{beta:g}", exact <= bound + 1e-12)
    return report


def cmd_corollary(args) -> ExperimentReport:
    site = args.site
    window = make_box(site, args.zero_window)
    zeroed = args.field.zeroed_on(window.sites)
    raw_norms = field_norms(args.field)
    zeroed_norms = field_norms(zeroed)
    report = ExperimentReport(
        command="corollary",
        params={
            "zero_window": args.zero_window,
            "box_min": args.box_min,
            "box_max": args.box_max,
            "beta": args.beta,
            "J": args.J,
            "field": args.field_text,
            "site": f"{site[0]},{site[1]}",
            "raw_l1": raw_norms.l1 if math.isfinite(raw_norms.l1) else "inf",
            "zeroed_l1": zeroed_norms.l1 if math.isfinite(zeroed_norms.l1) else "inf",
        },
    )
    report.check(
        "zeroed-field-in-transition-regime",
        math.isfinite(zeroed_norms.l1) and args.J > 3.0 * zeroed_norms.l1,
        f"J={args.J} vs 3*l1(zeroed)={3.0 * zeroed_norms.l1:.6f}",
    )
    raw_params = ModelParams(J=args.J, beta=args.beta, field=args.field)
    zeroed_params = ModelParams(J=args.J, beta=args.beta, field=zeroed)
    zero_gaps = []
    for side in range(args.box_min, args.box_max + 1):
        region = make_box(site, side)
        raw_gap = magnetization_gap(region, raw_params, site, method=args.method)
        zero_gap = magnetization_gap(region, zeroed_params, site, method=args.method)
        zero_gaps.append(zero_gap)
        report.rows.append(
            {
                "side": side,
                "gap_raw_field": raw_gap,
                "gap_zeroed_field": zero_gap,
                "method": args.method,
                "error_bound": 0.0,
            }
        )
    _gap_trend_checks(report, zero_gaps, zeroed_params)
    return report


def cmd_mc_gap(args) -> ExperimentReport:
    params = ModelParams(J=args.J, beta=args.beta, field=args.field)
    cfg = ChainConfig(
        sweeps=args.sweeps,
        burn_in=args.burn_in,
        chains=args.chains,
        seed=args.seed,
        thinning=args.thinning,
    )
    site = args.site
    region = make_box(site, args.box)
    report = ExperimentReport(
        command="mc-gap",
        params={
            "box": args.box,
            "beta": args.beta,
            "J": args.J,
            "field": args.field_text,
            "site": f"{site[0]},{site[1]}",
            "sweeps": args.sweeps,
            "burn_in": args.burn_in,
            "chains": args.chains,
            "seed": args.seed,
            "thinning": args.thinning,
            "rng": RNG_NAME,
        },
    )
    gap, stderr = sample_gap(region, params, cfg, site)
    report.rows.append(
        {"side": args.box, "gap": gap, "stderr": stderr, "method": "sampled"}
    )
    report.check(
        "gap-nonnegative-within-error",
        gap + 3.0 * stderr >= 0.0,
        f"gap {gap:.4f} +- {stderr:.4f}",
    )
    return report


def _add_common(p: argparse.ArgumentParser, *, method: bool = True) -> None:
    p.add_argument("--J", type=float, default=1.0)
    p.add_argument("--field", action=_FieldAction, default=FieldSpec.zero())
    p.add_argument("--site", type=_parse_site, default=(0, 0))
    if method:
        p.add_argument("--method", choices=("transfer", "brute"), default="transfer")
    p.add_argument("--out", choices=("csv", "json"), default=None)
    p.add_argument("--path", default=None)
    p.set_defaults(field_text="uniform:h=0")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ising",
        description="2D Ising model with non-uniform fields: exact, contour and sampled experiments",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("exact-gap", help="plus/minus magnetization gap over nested boxes")
    p.add_argument("--box-min", type=int, required=True)
    p.add_argument("--box-max", type=int, required=True)
    p.add_argument("--beta", type=float, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_exact_gap)

    p = sub.add_parser("contour-verify", help="contour bijection and identity checks")
    p.add_argument("--box", type=int, required=True)
    p.add_argument("--beta-grid", type=_beta_grid, required=True)
    p.add_argument("--dump", default=None)
    _add_common(p, method=False)
    p.set_defaults(func=cmd_contour_verify)

    p = sub.add_parser("peierls", help="exact probability vs closed-form bound")
    p.add_argument("--beta-grid", type=_beta_grid, required=True)
    p.add_argument("--box", type=int, default=4)
    _add_common(p)
    p.set_defaults(func=cmd_peierls)

    p = sub.add_parser("corollary", help="gap experiment after zeroing the field on a window")
    p.add_argument("--zero-window", type=int, required=True)
    p.add_argument("--box-min", type=int, required=True)
    p.add_argument("--box-max", type=int, required=True)
    p.add_argument("--beta", type=float, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_corollary)

    p = sub.add_parser("mc-gap", help="sampled plus/minus gap for large boxes")
    p.add_argument("--box", type=int, required=True)
    p.add_argument("--sweeps", type=int, required=True)
    p.add_argument("--burn-in", type=int, required=True)
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--thinning", type=int, default=1)
    p.add_argument("--beta", type=float, required=True)
    _add_common(p, method=False)
    p.set_defaults(func=cmd_mc_gap)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.out and not args.path:
        parser.error("--out requires --path")

    start = time.perf_counter()
    try:
        report = args.func(args)
    except (RegimeError, CapacityError, InvalidRegionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except VerificationError as exc:
        print(f"assertion failure: {exc}", file=sys.stderr)
        return 2
    report.wall_clock_s = time.perf_counter() - start
    report.timestamp = datetime.now(timezone.utc).isoformat()

    print(report.human(), end="")
    if args.out:
        text = report.to_csv() if args.out == "csv" else report.to_json()
        with open(args.path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0 if report.passed else 2


if __name__ == "__main__":
    raise SystemExit(main())
