"""Command-line front end.

Subcommands::

    regiongain analyze-gains SPEC [--interval A B] [--out report.json]
    regiongain certify SPEC --mode {local,global,almost-global,planar} [--out F]
    regiongain simulate SPEC [--inits K] [--T T] [--out-dir DIR]
    regiongain report --from DIR [--out report.md]

SPEC is a JSON file path or one of the built-in names.  Exit codes:
0 certified/ok, 1 refuted or inconclusive, 2 spec parse error,
3 evaluation failure, 4 missing prerequisites.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys as _sys
from datetime import datetime, timezone

import numpy as np

from . import certify as C
from . import dynamics as D
from . import regions as R
from .expr import DomainError, ExprError
from .gains import GainError, bilimit_ratios, compose, scan_small_gain
from .lyapunov import (LyapunovError, MergedLyapunov, compute_thresholds,
                       construct_sigma, validate_sigma,
                       verify_iss_implication)
from .specio import BUILTIN_NAMES, SpecError, builtin_spec, load_spec, \
    parse_spec

EXIT_OK = 0
EXIT_REFUTED = 1
EXIT_PARSE = 2
EXIT_EVAL = 3
EXIT_PREREQ = 4


def _resolve_spec(name_or_path):
    if name_or_path in BUILTIN_NAMES:
        return parse_spec(builtin_spec(name_or_path))
    return load_spec(name_or_path)


def _write_json(path, payload):
    """Deterministic body plus the single varying timestamp field."""
    doc = {"timestamp": datetime.now(timezone.utc).isoformat(),
           "report": payload}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(obj):
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        if math.isnan(f):
            return "nan"
        return f
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def cmd_analyze_gains(args):
    sp = _resolve_spec(args.spec)
    a, b = args.interval
    if not (0 <= a < b):
        raise SpecError("--interval needs 0 <= A < B")
    gamma, delta = sp.gamma, sp.delta
    pieces = scan_small_gain(gamma, delta, (a, b), (b - a) / 2000)
    comp = compose(gamma, delta)
    grid = np.linspace(a if a > 0 else (b - a) / 200000, b, 200001)
    vals = np.asarray(comp(grid), dtype=float)
    i_max = int(np.argmax(vals))
    sup = float(vals[i_max])
    ratios = bilimit_ratios(gamma, delta, 1e-2, 1e2)
    payload = {
        "spec": args.spec,
        "interval": [a, b],
        "sgc_intervals": [
            {"lo": lo, "hi": hi, "verdict": verdict}
            for (lo, hi), verdict in pieces
        ],
        "sgc_fails_anywhere": any(v == "fails" for _, v in pieces),
        "sup_composed_gain": sup,
        "sup_location": float(grid[i_max]),
        "discrepancy_from_stated_1_11": sup - 1.11,
        "bilimit_ratios": {
            "worst_zero_ratio": ratios.worst_zero_ratio,
            "worst_infinity_ratio": ratios.worst_infinity_ratio,
            "zero_probes": _jsonable(ratios.zero_probes),
            "zero_ratios": _jsonable(ratios.zero_ratios),
            "infinity_probes": _jsonable(ratios.infinity_probes),
            "infinity_ratios": _jsonable(ratios.infinity_ratios),
        },
        "seed": sp.seed,
    }
    _write_json(args.out, _jsonable(payload))
    csv_path = os.path.splitext(args.out)[0] + ".csv"
    stride = max(1, len(grid) // 2000)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s", "gamma_delta_s"])
        for s, v in zip(grid[::stride], vals[::stride]):
            writer.writerow([f"{s:.12g}", f"{v:.12g}"])
    print(f"analyze-gains: sup composed gain {sup:.6f} at s = "
          f"{grid[i_max]:.4f}; SGC fails somewhere: "
          f"{payload['sgc_fails_anywhere']}")
    print(f"wrote {args.out} and {csv_path}")
    return EXIT_OK


def _sigma_s_max(sp, th_list):
    """Table range wide enough for every V value in the box plus every
    finite threshold in play."""
    pts = R.sample(R.box_region(sp.box), 512, sp.seed)
    vmax = float(np.max(sp.V.eval_many(pts[:, :sp.n])))
    finite = [t for t in th_list if t is not None and math.isfinite(t)]
    return 1.25 * max([vmax] + finite + [1.0])


def _build_certificate(sp, regime):
    """Shared pipeline for one regime: thresholds, sigma sandwich,
    inclusion chain, ISS implications."""
    if regime == "local":
        if sp.local_thresholds is None:
            raise PrereqError("spec has no thresholds.local block")
        M_lo, N_lo = 0.0, 0.0
        M_hi = sp.local_thresholds["M_hi"]
        N_hi = sp.local_thresholds["N_hi"]
    else:
        if sp.global_thresholds is None:
            raise PrereqError("spec has no thresholds.global block")
        M_lo = sp.global_thresholds["M_lo"]
        N_lo = sp.global_thresholds["N_lo"]
        M_hi, N_hi = math.inf, math.inf
    th = compute_thresholds(sp.gamma, sp.delta, M_lo, M_hi, N_lo, N_hi)
    cert = C.Certificate(regime=regime, thresholds=th)
    if not th.valid:
        cert.evidence["thresholds"] = {
            "verdict": "refuted",
            "detail": f"M_tilde = {th.M_tilde} >= M_hat = {th.M_hat}",
        }
        return cert, None
    s_max = _sigma_s_max(sp, [M_hi, 4 * M_lo if M_lo else None])
    sigma = construct_sigma(sp.gamma, sp.delta, s_max=s_max)
    if regime == "local":
        sand_iv = (1e-3 * M_hi if math.isfinite(M_hi) else 1e-3, M_hi)
    else:
        sand_iv = (M_lo, min(4 * M_lo, s_max))
    srep = validate_sigma(sigma, sp.gamma, sp.delta, sand_iv,
                          (sand_iv[1] - sand_iv[0]) / 500)
    cert.evidence["sigma_sandwich"] = {
        "verdict": "certified" if srep.ok else "refuted",
        "detail": srep.detail,
        "min_lower_gap": srep.min_lower_gap,
        "min_upper_gap": srep.min_upper_gap,
    }
    U = MergedLyapunov(sigma, sp.V, sp.W)
    if not srep.ok:
        return cert, U
    chain = R.check_inclusion_chain(th, sp.V, sp.W, U, sp.box,
                                    sp.n_samples, sp.seed)
    cert.evidence["inclusion_chain"] = chain
    S = R.s_set_region(sp.V, sp.W, M_lo, M_hi, N_lo, N_hi, sp.box)
    pts = R.sample(S, sp.n_samples, sp.seed)
    impl_v = verify_iss_implication(sp.V, sp.gamma, sp.W,
                                    lambda y: sp.system.f(y),
                                    pts, slice(0, sp.n))
    impl_w = verify_iss_implication(sp.W, sp.delta, sp.V,
                                    lambda y: sp.system.g(y),
                                    pts, slice(sp.n, sp.dim))
    cert.evidence["iss_implication_V"] = impl_v
    cert.evidence["iss_implication_W"] = impl_w
    return cert, U


class PrereqError(Exception):
    pass


def _gap_of(sp, cert_l, cert_g, U):
    return R.gap_region(U, cert_g.thresholds.M_tilde,
                        U, cert_l.thresholds.M_hat, sp.box, "R")


def cmd_certify(args):
    sp = _resolve_spec(args.spec)
    mode = args.mode
    if mode == "planar" and not sp.is_planar:
        raise PrereqError(
            f"planar mode needs n = m = 1, spec has n + m = {sp.dim}"
        )
    payload = {"spec": args.spec, "mode": mode, "seed": sp.seed}
    if mode in ("local", "global"):
        cert, _ = _build_certificate(sp, mode)
        payload["certificate"] = cert
        verdict = cert.verdict
    else:
        cert_l, U = _build_certificate(sp, "local")
        cert_g, _ = _build_certificate(sp, "global")
        payload["local_certificate"] = cert_l
        payload["global_certificate"] = cert_g
        if cert_l.verdict != "certified" or cert_g.verdict != "certified":
            verdict = "refuted"
            payload["detail"] = "constituent certificate not certified"
        else:
            th_l, th_g = cert_l.thresholds, cert_g.thresholds
            if not (th_l.M_hi < th_g.M_lo or th_l.N_hi < th_g.N_lo):
                raise PrereqError(
                    "need local M_hi < global M_lo or local N_hi < "
                    "global N_lo"
                )
            gap = _gap_of(sp, cert_l, cert_g, U)
            if mode == "almost-global":
                rep = C.check_theorem1(sp.system.h, sp.rho, gap,
                                       sp.n_samples, sp.seed,
                                       local_th=th_l, global_th=th_g)
                payload["density_check"] = rep
                verdict = rep.verdict
            else:  # planar
                rep = C.check_theorem2(sp.system.h, gap, sp.n_samples,
                                       sp.seed)
                payload["divergence_check"] = rep
                flux_rep = _flux_evidence(sp, th_l, th_g, U)
                payload["flux_check"] = flux_rep
                rec = D.detect_recurrence(sp.system, gap,
                                          min(20, sp.n_samples),
                                          sp.sim_T, sp.seed,
                                          dt=sp.sim_dt)
                payload["recurrence_check"] = rec
                verdicts = [rep.verdict, flux_rep["verdict"],
                            "certified" if rec.ok else "refuted"]
                if "refuted" in verdicts:
                    verdict = "refuted"
                elif "inconclusive" in verdicts:
                    verdict = "inconclusive"
                else:
                    verdict = "certified"
    payload["verdict"] = verdict
    out = args.out or f"certify_{mode}.json"
    _write_json(out, _jsonable(payload))
    print(f"certify --mode {mode}: {verdict} (wrote {out})")
    return EXIT_OK if verdict == "certified" else EXIT_REFUTED


def _flux_evidence(sp, th_l, th_g, U):
    """Outer/inner level-curve fluxes and the divergence-theorem
    cross-check on the enclosed annulus."""
    box = R.find_sublevel_box(U.eval_many, th_g.M_tilde, sp.dim)
    outer = R.trace_level_curve(U.eval_many, th_g.M_tilde, box, grid=512)[0]
    inner = R.trace_level_curve(U.eval_many, th_l.M_hat, box, grid=512)[0]
    flux_outer = C.boundary_flux(sp.system.h, outer)
    flux_inner = C.boundary_flux(sp.system.h, inner)
    # grid quadrature of div h over the annulus between the curves
    pts = R.sample(R.box_region(box), 4096, sp.seed)
    divs = np.array([C.divergence(sp.system.h, y) for y in pts[:256]])
    mean_div = float(np.mean(divs))
    annulus_area = outer.area - inner.area
    expected = mean_div * annulus_area
    diff = flux_outer - flux_inner
    rel = abs(diff - expected) / max(abs(expected), 1e-30)
    verdict = "certified" if (flux_outer < 0 and rel < 0.02) else "refuted"
    return {
        "verdict": verdict,
        "flux_outer": flux_outer,
        "flux_inner": flux_inner,
        "outer_level": th_g.M_tilde,
        "inner_level": th_l.M_hat,
        "annulus_area": annulus_area,
        "mean_divergence": mean_div,
        "divergence_theorem_rel_error": rel,
        "detail": "outer flux must be negative and match the divergence "
                  "quadrature within 2%",
    }


def cmd_simulate(args):
    sp = _resolve_spec(args.spec)
    T = args.T if args.T is not None else sp.sim_T
    os.makedirs(args.out_dir, exist_ok=True)
    n_inits = args.inits
    if n_inits == 0:
        payload = {"spec": args.spec, "n_inits": 0, "converged_count": 0,
                   "max_terminal_U": None, "blowups": 0,
                   "recurrence_flags": []}
        _write_json(os.path.join(args.out_dir, "simulate.json"),
                    _jsonable(payload))
        print("simulate: empty ensemble")
        return EXIT_OK
    inits = R.sample(R.box_region(sp.box), n_inits, sp.seed)
    trajs = D.integrate_ensemble(sp.system, inits, T, sp.sim_dt,
                                 sp.sim_method)
    blowups = sum(t.blew_up for t in trajs)
    terminal_norms = np.array([
        float(np.linalg.norm(t.terminal)) for t in trajs
    ])
    converged = int(np.sum(~np.array([t.blew_up for t in trajs])
                           & (terminal_norms < 1e-3)))
    # terminal U via the merged function when thresholds allow building it
    max_term_u = None
    recurrence_flags = []
    try:
        cert_l, U = _build_certificate(sp, "local")
        cert_g, _ = _build_certificate(sp, "global")
        if U is not None:
            max_term_u = float(max(
                U.on_state(t.terminal) for t in trajs if not t.blew_up
            ))
        if sp.is_planar and cert_l.verdict == "certified" \
                and cert_g.verdict == "certified":
            gap = _gap_of(sp, cert_l, cert_g, U)
            rec = D.detect_recurrence(sp.system, gap, min(n_inits, 20),
                                      T, sp.seed, dt=sp.sim_dt)
            recurrence_flags = [list(map(float, p))
                                for p in rec.recurrent_inits]
    except (PrereqError, LyapunovError, GainError, R.RegionError):
        pass
    for i, t in enumerate(trajs):
        D.export_trajectory_csv(
            os.path.join(args.out_dir, f"trajectory_{i:04d}.csv"), t
        )
    payload = {
        "spec": args.spec, "n_inits": n_inits, "T": T,
        "converged_count": converged,
        "max_terminal_norm": float(terminal_norms.max()),
        "max_terminal_U": max_term_u,
        "blowups": blowups,
        "recurrence_flags": recurrence_flags,
        "seed": sp.seed,
    }
    _write_json(os.path.join(args.out_dir, "simulate.json"),
                _jsonable(payload))
    print(f"simulate: {converged}/{n_inits} converged, {blowups} blow-ups "
          f"(wrote {args.out_dir}/)")
    if blowups > n_inits / 2:
        print("more than half the ensemble blew up", file=_sys.stderr)
        return EXIT_EVAL
    return EXIT_OK


def _load_report(dirpath, name):
    path = os.path.join(dirpath, name)
    if not os.path.exists(path):
        return None
    with open(path, encoding="utf-8") as fh:
        return json.load(fh).get("report")


def cmd_report(args):
    names = ["gains.json", "certify_local.json", "certify_global.json",
             "certify_almost-global.json", "certify_planar.json",
             "simulate.json"]
    found = {n: _load_report(args.from_dir, n) for n in names}
    if not any(v is not None for v in found.values()):
        print(f"no pipeline outputs found in {args.from_dir}",
              file=_sys.stderr)
        return EXIT_PARSE
    lines = ["# Certification report", ""]
    g = found["gains.json"]
    lines.append("## Gain analysis")
    if g is None:
        lines.append("not run")
    else:
        lines.append(f"- sup composed gain: {g['sup_composed_gain']:.6f} "
                     f"at s = {g['sup_location']:.4f}")
        lines.append(f"- discrepancy from the stated 1.11: "
                     f"{g['discrepancy_from_stated_1_11']:+.6f}")
        lines.append(f"- SGC fails anywhere: {g['sgc_fails_anywhere']}")
        br = g["bilimit_ratios"]
        lines.append(f"- bi-limit worst ratios: zero side "
                     f"{br['worst_zero_ratio']:.4f}, infinity side "
                     f"{br['worst_infinity_ratio']:.4f}")
        for piece in g["sgc_intervals"]:
            lines.append(f"  - [{piece['lo']:.4f}, {piece['hi']:.4f}]: "
                         f"{piece['verdict']}")
    lines.append("")
    lines.append("## Certification")
    any_cert = False
    planar_certified = False
    for mode in ("local", "global", "almost-global", "planar"):
        rep = found.get(f"certify_{mode}.json")
        if rep is None:
            continue
        any_cert = True
        lines.append(f"- mode {mode}: **{rep['verdict']}**")
        if mode == "planar" and rep["verdict"] == "certified":
            planar_certified = True
            dc = rep.get("divergence_check", {})
            lines.append(f"  - {dc.get('detail', '')}")
            fc = rep.get("flux_check", {})
            lines.append(
                f"  - outer flux {fc.get('flux_outer', 0):.4f}, "
                f"divergence-theorem relative error "
                f"{fc.get('divergence_theorem_rel_error', 0):.4%}"
            )
    if not any_cert:
        lines.append("certification: not run")
    lines.append("")
    lines.append("## Simulation")
    s = found["simulate.json"]
    if s is None:
        lines.append("not run")
    else:
        lines.append(f"- {s['converged_count']}/{s['n_inits']} trajectories "
                     f"converged, {s.get('blowups', 0)} blow-ups")
        lines.append(f"- recurrence flags: {len(s['recurrence_flags'])}")
    lines.append("")
    lines.append("## Verdict")
    if planar_certified:
        lines.append("globally asymptotically stable (sampled evidence)")
    elif any_cert:
        lines.append("see per-mode verdicts above")
    else:
        lines.append("no certification evidence available")
    lines.append("")
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(
        prog="regiongain",
        description="Region-dependent small-gain certification toolkit",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze-gains",
                       help="scan the small-gain condition and bi-limits")
    p.add_argument("spec", help="spec path or built-in name "
                   f"({', '.join(BUILTIN_NAMES)})")
    p.add_argument("--interval", nargs=2, type=float, default=[0.0, 20.0],
                   metavar=("A", "B"))
    p.add_argument("--out", default="gains.json")
    p.set_defaults(func=cmd_analyze_gains)

    p = sub.add_parser("certify", help="run the certification pipeline")
    p.add_argument("spec")
    p.add_argument("--mode", required=True,
                   choices=["local", "global", "almost-global", "planar"])
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("simulate", help="integrate a trajectory ensemble")
    p.add_argument("spec")
    p.add_argument("--inits", type=int, default=100)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--out-dir", default="simulate_out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="render a consolidated report")
    p.add_argument("--from", dest="from_dir", required=True)
    p.add_argument("--out", default="report.md")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SpecError, FileNotFoundError) as e:
        print(f"spec error: {e}", file=_sys.stderr)
        return EXIT_PARSE
    except ExprError as e:
        if isinstance(e, DomainError):
            print(f"evaluation error: {e}", file=_sys.stderr)
            return EXIT_EVAL
        print(f"spec error: {e}", file=_sys.stderr)
        return EXIT_PARSE
    except PrereqError as e:
        print(f"prerequisite missing: {e}", file=_sys.stderr)
        return EXIT_PREREQ
    except (LyapunovError, GainError, R.RegionError, C.CertifyError,
            D.DynamicsError) as e:
        print(f"evaluation error: {e}", file=_sys.stderr)
        return EXIT_EVAL


if __name__ == "__main__":
    raise SystemExit(main())
