"""Command-line front end.

Subcommands load an instance file, run one analysis, and write a JSON
report; `--render` additionally writes figures and CSV tables next to the
report.  Exit codes are scriptable: 0 success, 2 input problem, 3
evaluation cap exceeded, 4 irreducible or periodic chain.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import (
    CapExceededError,
    InstanceFormatError,
    NumericalError,
    ReducibilityError,
    ValidationError,
)
from .influence import influence_report
from .instance_io import (
    REPORT_SCHEMA,
    InstanceDoc,
    dump_instance,
    instance_to_dict,
    load_instance,
    matrix_from_dict,
    matrix_to_dict,
    policy_to_dict,
    provenance_block,
    write_matrices_csv,
    write_report,
    write_rows_csv,
)
from .lpi import lpi_iterate
from .mdp import DEFAULT_EVAL_CAP
from .poisson import decay_table, discounted_rate, locality_certificate, required_radius
from .scenarios import build_scenario

__all__ = [
    "main",
    "cmd_influence",
    "cmd_certify",
    "cmd_lpi",
    "cmd_scenario",
    "cmd_radius",
    "cmd_render",
]

CAP_ENV_VAR = "MARLCERT_CAP"

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CAP = 3
EXIT_IRREDUCIBLE = 4


def _resolve_cap(cap: int | None) -> int:
    if cap is not None:
        return int(cap)
    raw = os.environ.get(CAP_ENV_VAR)
    if raw is None:
        return DEFAULT_EVAL_CAP
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"{CAP_ENV_VAR} must be an integer, got {raw!r}") from None


def _vec(x) -> list[float]:
    return [float(v) for v in np.asarray(x, dtype=float)]


def _opt(x):
    return None if x is None else float(x)


def _influence_payload(doc: InstanceDoc) -> dict:
    rep = influence_report(doc.mdp, doc.policy)
    payload = {
        "schema": REPORT_SCHEMA,
        "kind": "influence",
        "name": doc.name,
        "matrices": {
            "state_sensitivity": matrix_to_dict(rep.state_sensitivity),
            "action_sensitivity": matrix_to_dict(rep.action_sensitivity),
            "policy_sensitivity": matrix_to_dict(rep.policy_sensitivity),
            "interdependence": matrix_to_dict(rep.interdependence),
            "influence_bound": matrix_to_dict(rep.influence_bound),
            "action_supremum": matrix_to_dict(rep.action_supremum),
        },
        "rho": float(rep.rho),
        "rho_bound": _opt(rep.rho_bound),
        "certified": rep.certified,
        "decomposition_slack": float(rep.decomposition_slack),
    }
    if rep.policy_sensitivity_bound is not None:
        payload["matrices"]["policy_sensitivity_bound"] = matrix_to_dict(
            rep.policy_sensitivity_bound)
    return payload


def cmd_influence(instance_path, out_path, cap: int | None = None,
                  seed: int | None = None, render: bool = False) -> int:
    doc = load_instance(instance_path, eval_cap=_resolve_cap(cap))
    payload = _influence_payload(doc)
    payload["provenance"] = provenance_block(instance_path, seed)
    write_report(payload, out_path)
    if render:
        _render_payload(payload, Path(out_path))
    return EXIT_OK


def _certify_payload(doc: InstanceDoc, kappa: int) -> dict:
    rep = influence_report(doc.mdp, doc.policy)
    cert = locality_certificate(doc.mdp, doc.policy, kappa)
    rows = decay_table(doc.mdp, doc.policy, kappa)
    sol = cert.solution
    return {
        "schema": REPORT_SCHEMA,
        "kind": "certificate",
        "name": doc.name,
        "kappa": cert.kappa,
        "certificate": _vec(cert.cert),
        "certificate_sup": float(cert.cert.max()),
        "h_hat": _vec(cert.h_hat),
        "h_hat_sup": float(np.abs(cert.h_hat).max()),
        "reward_oscillation": _vec(cert.b),
        "rho": float(cert.rho),
        "rho_bound": _opt(rep.rho_bound),
        "lambda": float(cert.lam),
        "c_est": _opt(cert.c_est),
        "bias_bound": _opt(cert.bias_bound),
        "cert_gap_bound": _opt(cert.cert_gap_bound),
        "certified": cert.certified,
        "poisson": {
            "rbar": float(sol.rbar),
            "residual": float(sol.residual),
            "anchor": sol.anchor,
            "d": _vec(sol.d),
            "h": _vec(sol.h),
        },
        "decay": rows,
    }


def cmd_certify(instance_path, kappa: int, out_path, cap: int | None = None,
                seed: int | None = None, render: bool = False) -> int:
    if kappa < 0:
        raise ValidationError("kappa must be >= 0")
    doc = load_instance(instance_path, eval_cap=_resolve_cap(cap))
    payload = _certify_payload(doc, kappa)
    payload["provenance"] = provenance_block(instance_path, seed)
    write_report(payload, out_path)
    if render:
        _render_payload(payload, Path(out_path))
    return EXIT_OK


def _lpi_payload(doc: InstanceDoc, kappa: int, tau: float, iters: int) -> dict:
    trace = lpi_iterate(doc.mdp, doc.policy, kappa, tau, iters)
    iterations = []
    for rec in trace.iterations:
        iterations.append({
            "index": rec.index,
            "average_reward": float(rec.average_reward),
            "entropy_value": float(rec.entropy_value),
            "rho": float(rec.report.rho),
            "certificate": _vec(rec.certificate.cert),
            "blocks": [
                {
                    "agent": b.agent,
                    "improvement_lhs": float(b.improvement_lhs),
                    "improvement_rhs": float(b.improvement_rhs),
                    "slack": float(b.slack),
                    "expected_kl": float(b.expected_kl),
                    "truncation_penalty": float(b.truncation_penalty),
                    "kl_anchored_gain": float(b.kl_anchored_gain),
                }
                for b in rec.blocks
            ],
        })
    return {
        "schema": REPORT_SCHEMA,
        "kind": "lpi",
        "name": doc.name,
        "kappa": int(kappa),
        "tau": float(tau),
        "iterations": iterations,
        "final": {
            "average_reward": float(trace.final_average_reward),
            "entropy_value": float(trace.final_entropy_value),
        },
        "final_policy": policy_to_dict(trace.final_policy),
    }


def cmd_lpi(instance_path, kappa: int, tau: float, iters: int, out_path,
            cap: int | None = None, seed: int | None = None,
            render: bool = False) -> int:
    if kappa < 0:
        raise ValidationError("kappa must be >= 0")
    if tau <= 0:
        raise ValidationError("tau must be positive")
    if iters < 1:
        raise ValidationError("iteration count must be >= 1")
    doc = load_instance(instance_path, eval_cap=_resolve_cap(cap))
    payload = _lpi_payload(doc, kappa, tau, iters)
    payload["provenance"] = provenance_block(instance_path, seed)
    write_report(payload, out_path)
    if render:
        _render_payload(payload, Path(out_path))
    return EXIT_OK


def cmd_scenario(name: str, params: dict, out_path) -> int:
    sc = build_scenario(name, params)
    doc = instance_to_dict(sc.mdp, sc.policy, name=sc.name, expected=sc.expected,
                           notes=sc.notes)
    dump_instance(doc, out_path)
    print(f"wrote {out_path}")
    return EXIT_OK


def cmd_radius(gamma: float, rho: float, epsilon: float) -> int:
    lam = discounted_rate(gamma, rho)
    if not 0.0 < epsilon < 1.0:
        raise ValidationError("epsilon must lie in (0, 1)")
    print(f"lambda = {lam!r}")
    if lam == 0.0:
        print("kappa = 1  (influence dies after a single round)")
        return EXIT_OK
    kappa = required_radius(lam, epsilon)
    import math

    real = math.log(epsilon) / math.log(lam)
    print(f"kappa = {kappa}  (smallest integer with lambda^kappa <= epsilon; "
          f"real-valued solution {real:.2f}, ceiling applied)")
    return EXIT_OK


def _render_payload(payload: dict, report_path: Path) -> list[Path]:
    """Write figures and CSV tables derived from one report payload."""
    from . import plots

    base = report_path.with_suffix("")
    written: list[Path] = []
    kind = payload.get("kind")
    if kind == "influence":
        matrices = {name: matrix_from_dict(m)
                    for name, m in payload["matrices"].items()}
        png = base.parent / (base.name + "_matrices.png")
        csv_path = base.parent / (base.name + "_matrices.csv")
        plots.render_influence_heatmaps(matrices, png)
        write_matrices_csv(matrices, csv_path)
        written += [png, csv_path]
    elif kind == "certificate":
        png = base.parent / (base.name + "_decay.png")
        csv_path = base.parent / (base.name + "_decay.csv")
        plots.render_decay_curves(payload["decay"], png)
        write_rows_csv(payload["decay"], csv_path)
        written += [png, csv_path]
    elif kind == "lpi":
        png = base.parent / (base.name + "_trace.png")
        csv_path = base.parent / (base.name + "_iterations.csv")
        plots.render_lpi_trace(payload["iterations"], payload["final"], png)
        rows = [
            {
                "iteration": it["index"],
                "average_reward": it["average_reward"],
                "entropy_value": it["entropy_value"],
                "rho": it["rho"],
                "worst_block_slack": min(b["slack"] for b in it["blocks"]),
            }
            for it in payload["iterations"]
        ]
        write_rows_csv(rows, csv_path)
        written += [png, csv_path]
    else:
        raise InstanceFormatError(f"report kind {kind!r} has no renderer")
    for path in written:
        print(f"wrote {path}")
    return written


def cmd_render(report_path, out_dir=None) -> int:
    path = Path(report_path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"not valid JSON: {exc}") from None
    if not isinstance(payload, dict) or payload.get("schema") != REPORT_SCHEMA:
        raise InstanceFormatError(f"not a report file (schema != {REPORT_SCHEMA!r})")
    target = path if out_dir is None else Path(out_dir) / path.name
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    _render_payload(payload, target)
    return EXIT_OK


def _parse_scenario_params(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValidationError(f"scenario parameters look like key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        try:
            value: float | int = int(raw)
        except ValueError:
            try:
                value = float(raw)
            except ValueError:
                raise ValidationError(f"parameter {key!r} has non-numeric value "
                                      f"{raw!r}") from None
        out[key] = value
    return out


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="marlcert",
        description="Influence matrices, locality certificates, and localized "
                    "policy improvement for factored multi-agent MDPs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--cap", type=int, default=None,
                        help=f"evaluation cap on |S|*|A| (default from "
                             f"${CAP_ENV_VAR} or {DEFAULT_EVAL_CAP})")
    common.add_argument("--seed", type=int, default=None,
                        help="seed recorded in the report provenance")
    common.add_argument("--render", action="store_true",
                        help="also write figures and CSV tables beside the report")

    p = sub.add_parser("influence", parents=[common],
                       help="sensitivity and interdependence matrices")
    p.add_argument("instance", help="instance JSON file")
    p.add_argument("--out", required=True, help="report JSON path")

    p = sub.add_parser("certify", parents=[common],
                       help="truncated certificate, bias, and decay bounds")
    p.add_argument("instance")
    p.add_argument("--kappa", type=int, required=True, help="truncation radius")
    p.add_argument("--out", required=True)

    p = sub.add_parser("lpi", parents=[common],
                       help="localized policy improvement iterations")
    p.add_argument("instance")
    p.add_argument("--kappa", type=int, required=True)
    p.add_argument("--tau", type=float, required=True, help="KL temperature")
    p.add_argument("--iters", type=int, required=True, help="outer iterations")
    p.add_argument("--out", required=True)

    p = sub.add_parser("scenario", help="emit a built-in example as an instance file")
    p.add_argument("name", help="sleepy | leader-follower | hub-spoke | random")
    p.add_argument("params", nargs="*", help="key=value overrides (e.g. alpha=0.3)")
    p.add_argument("--seed", type=int, default=None,
                   help="seed for the random scenario")
    p.add_argument("--out", required=True)

    p = sub.add_parser("radius", help="truncation radius for a target tolerance")
    p.add_argument("gamma", type=float, help="discount factor in (0, 1]")
    p.add_argument("rho", type=float, help="influence spectral radius")
    p.add_argument("epsilon", type=float, help="target tolerance in (0, 1)")

    p = sub.add_parser("render", help="figures and CSV tables from a report file")
    p.add_argument("report", help="report JSON file")
    p.add_argument("--out", default=None, help="output directory (default: beside "
                                               "the report)")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "influence":
            return cmd_influence(args.instance, args.out, cap=args.cap,
                                 seed=args.seed, render=args.render)
        if args.command == "certify":
            return cmd_certify(args.instance, args.kappa, args.out, cap=args.cap,
                               seed=args.seed, render=args.render)
        if args.command == "lpi":
            return cmd_lpi(args.instance, args.kappa, args.tau, args.iters,
                           args.out, cap=args.cap, seed=args.seed,
                           render=args.render)
        if args.command == "scenario":
            params = _parse_scenario_params(args.params)
            if args.seed is not None:
                params.setdefault("seed", args.seed)
            return cmd_scenario(args.name, params, args.out)
        if args.command == "radius":
            return cmd_radius(args.gamma, args.rho, args.epsilon)
        if args.command == "render":
            return cmd_render(args.report, args.out)
        raise ValidationError(f"unknown command {args.command!r}")
    except CapExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except ReducibilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IRREDUCIBLE
    except (ValidationError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
