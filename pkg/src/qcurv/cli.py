"""Batch front end: tables, sweeps, balancing, assembly diagnostics.

Every command reads one JSON config, writes CSV/JSON artifacts plus a
manifest into --out, and exits 0 on success, 2 on a config problem, 3 when a
solver or quadrature gives up.  Reruns of the same config are bit-identical:
no timestamps, fixed seeds, deterministic aggregation.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import hashlib
import io
import json
import os
import sys

import numpy as np

from .params import derive_params
from .kernels import (QuadratureError, build_kernel_table,
                      calibrate_cyl_kernel, decay_slope)
from .delaunay import NewtonError, neck_sweep, sweep_csv
from .interactions import (constants_payload, interaction_constants,
                           oracle_fit_constants, psi)
from .balancing import (BalanceError, BalancedConfig, SingularSet, balance,
                        balanced_to_json, periods_from_q)
from .assembler import (WeightSpec, assemble, beta_leading_form,
                        beta_projection, residual, sample_grid)
from .bubbles import KernelIndex
from . import toda as toda_mod


class ConfigError(ValueError):
    """Anything wrong with the run configuration."""


# ─────────────────────────────────────────────────────────────────────────────
# config plumbing


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    return doc


def _require(doc: dict, key: str, typ, where: str = "config"):
    if key not in doc:
        raise ConfigError(f"{where} is missing required key {key!r}")
    val = doc[key]
    if not isinstance(val, typ) or isinstance(val, bool):
        names = (typ.__name__ if isinstance(typ, type)
                 else "/".join(t.__name__ for t in typ))
        raise ConfigError(f"{where}[{key!r}] must be {names}")
    return val


def _params(doc: dict):
    n = _require(doc, "n", int)
    sigma = float(_require(doc, "sigma", (int, float)))
    try:
        return derive_params(n, sigma)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _block(doc: dict, name: str) -> dict:
    blk = doc.get(name, {})
    if not isinstance(blk, dict):
        raise ConfigError(f"config[{name!r}] must be an object")
    return blk


def _seed(doc: dict) -> int:
    seed = doc.get("seed", 20240817)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    return seed


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("QCURV_THREADS", "")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"QCURV_THREADS must be an integer: {env!r}") \
                from exc
    return 1


# ─────────────────────────────────────────────────────────────────────────────
# output plumbing


def _write_atomic(path: str, data: str) -> None:
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(data)
    os.replace(tmp, path)


class OutDir:
    def __init__(self, root: str):
        self.root = root
        os.makedirs(root, exist_ok=True)
        self.files: list[str] = []

    def write(self, name: str, data: str) -> None:
        _write_atomic(os.path.join(self.root, name), data)
        self.files.append(name)


def _manifest(out: OutDir, command: str, config_doc: dict, prm,
              seed: int, tol: float) -> None:
    ic = interaction_constants(prm)
    blob = json.dumps(config_doc, sort_keys=True).encode()
    doc = {
        "command": command,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "n": prm.n,
        "sigma": prm.sigma,
        "seed": seed,
        "tol": tol,
        "constants": {"A1": ic.A1, "A2": ic.A2, "A3": ic.A3,
                      "method": ic.method,
                      "kappa": calibrate_cyl_kernel(prm).kappa},
        "outputs": sorted(out.files),
    }
    out.write("manifest.json", json.dumps(doc, indent=2, sort_keys=True))


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(f"{v:.12g}" if isinstance(v, float) else str(v)
                           for v in row) + "\n")
    return buf.getvalue()


# ─────────────────────────────────────────────────────────────────────────────
# commands


def cmd_kernel(doc: dict, out: OutDir, tol: float, threads: int) -> None:
    prm = _params(doc)
    blk = _block(doc, "kernel")
    t_max = float(blk.get("t_max", 16.0))
    t_points = int(blk.get("t_points", 33))
    t_min = float(blk.get("t_min", 1e-3))
    if t_max <= t_min or t_points < 4:
        raise ConfigError("kernel block needs t_max > t_min and >= 4 points")
    grid = np.linspace(t_min, t_max, t_points)
    slopes = {}
    for kind in ("riesz", "singular"):
        table = build_kernel_table(prm, kind, grid, tol=tol, t_min=t_min)
        out.write(f"kernel_{kind}.csv",
                  _csv(["t", "value", "est_error"], [list(r) for r in
                                                     table.rows()]))
        tail = grid >= t_max / 2
        slopes[kind] = decay_slope(grid[tail], table.value[tail])
    slopes["gamma_s"] = prm.gamma_s
    slopes["gamma_dual"] = prm.gamma_dual
    out.write("kernel_slopes.json", json.dumps(slopes, indent=2,
                                               sort_keys=True))


def cmd_delaunay(doc: dict, out: OutDir, tol: float, threads: int) -> None:
    prm = _params(doc)
    blk = _block(doc, "delaunay")
    L_list = blk.get("L_list", [2.5, 3.0, 3.5, 4.0])
    if (not isinstance(L_list, list) or len(L_list) < 3
            or not all(isinstance(v, (int, float)) for v in L_list)):
        raise ConfigError("delaunay.L_list must be a list of >= 3 numbers")
    M = int(blk.get("M", 800))
    sweep = neck_sweep([float(L) for L in L_list], prm, M=M, tol=min(tol,
                                                                     1e-8))
    ok = [r for r in sweep.rows if r.error is None]
    if len(ok) < 2:
        bad = "; ".join(f"L={r.L}: {r.error}" for r in sweep.rows if r.error)
        raise NewtonError(f"sweep has {len(ok)} usable rows, need 2+ ({bad})",
                          residual=float("nan"), iterations=0)
    out.write("delaunay_sweep.csv", sweep_csv(sweep))
    out.write("delaunay_slopes.json", json.dumps(
        {"slope_eps": sweep.slope_eps, "slope_psi": sweep.slope_psi,
         "gamma_s": prm.gamma_s}, indent=2, sort_keys=True))


def cmd_constants(doc: dict, out: OutDir, tol: float, threads: int) -> None:
    prm = _params(doc)
    blk = _block(doc, "constants")
    ells = blk.get("psi_ells", [0.0, 0.5, 1.0, 2.0, 4.0, 6.0])
    if not all(isinstance(v, (int, float)) and v >= 0 for v in ells):
        raise ConfigError("constants.psi_ells must be nonnegative numbers")
    ic = interaction_constants(prm)
    fitted = oracle_fit_constants(prm)
    payload = json.loads(constants_payload(ic, prm))
    payload["oracle_A2"] = fitted.A2
    payload["oracle_A3"] = fitted.A3
    payload["oracle_method"] = fitted.method
    out.write("constants.json", json.dumps(payload, indent=2,
                                           sort_keys=True))
    rows = [[float(ell), psi(float(ell), prm)] for ell in ells]
    out.write("psi.csv", _csv(["ell", "psi"], rows))


def _config_geometry(doc: dict) -> tuple[SingularSet, np.ndarray, float]:
    pts, q, L = doc.get("points"), doc.get("q"), doc.get("L")
    if pts is None or q is None or L is None:
        raise ConfigError("config needs top-level points, q and L")
    try:
        ss = SingularSet(points=np.asarray(pts, dtype=float))
        qv = np.asarray(q, dtype=float)
        if qv.shape != (ss.size,) or np.any(qv <= 0):
            raise ConfigError("q must be positive, one entry per point")
        return ss, qv, float(L)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad geometry block: {exc}") from exc


def cmd_balance(doc: dict, out: OutDir, tol: float, threads: int) -> None:
    prm = _params(doc)
    ss, q, L = _config_geometry(doc)
    ic = interaction_constants(prm)
    cfg = balance(ss, q, L, ic, prm, tol=min(tol, 1e-10))
    out.write("balanced.json", balanced_to_json(cfg, prm))
    rows = [[i, float(cfg.q[i]), float(cfg.R[i]), float(cfg.L_i[i])]
            + [float(v) for v in cfg.a0_hat[i]]
            for i in range(ss.size)]
    head = ["i", "q", "R", "L_i"] + [f"a0_{k}" for k in range(prm.n)]
    out.write("balance.csv", _csv(head, rows))


def _merged_residual(u, weight: WeightSpec, tol: float, seed: int,
                     mc_points: int, threads: int,
                     regions: list[str] | None = None):
    pts, tags = sample_grid(u)
    if regions is not None:
        keep = [k for k, t in enumerate(tags)
                if t.split(":", 1)[0] in regions]
        if not keep:
            raise ConfigError(f"regions {regions} select no samples")
        pts, tags = pts[keep], [tags[k] for k in keep]
    if threads <= 1:
        return residual(u, weight, samples=(pts, tags), tol=tol,
                        mc_seed=seed, mc_points=mc_points)
    # chunk the samples; every chunk keeps its original order so the merged
    # report is identical to the single-thread one
    idx = np.array_split(np.arange(len(pts)), threads * 2)
    parts = [None] * len(idx)
    with cf.ThreadPoolExecutor(max_workers=threads) as pool:
        futs = {pool.submit(residual, u, weight,
                            (pts[k], [tags[j] for j in k]), tol): c
                for c, k in enumerate(idx) if len(k)}
        for fut in cf.as_completed(futs):
            parts[futs[fut]] = fut.result()
    vals = np.concatenate([p.values for p in parts if p is not None])
    # rebuild the report deterministically from the merged values
    from .assembler import ResidualReport, weighted_fn_norm
    region_sup: dict = {}
    for k, tag in enumerate(tags):
        if not np.isnan(vals[k]):
            region_sup[tag] = max(region_sup.get(tag, 0.0),
                                  abs(float(vals[k])))
    ok = ~np.isnan(vals)
    norm = weighted_fn_norm(pts[ok], vals[ok],
                            [t for k, t in enumerate(tags) if ok[k]],
                            weight, u.centers, u.prm)
    errors = tuple(e for p in parts if p is not None for e in p.errors)
    L = float(u.balanced.L) if u.balanced is not None \
        else float(u.towers[0].period)
    return ResidualReport(L=L, weight_kind=weight.kind, tau=weight.tau,
                          points=pts, tags=tuple(tags), values=vals,
                          weighted_norm=float(norm), region_sup=region_sup,
                          mc_seed=seed, mc_checks=(), errors=errors)


def cmd_assemble_residual(doc: dict, out: OutDir, tol: float,
                          threads: int) -> None:
    prm = _params(doc)
    ss, q, L = _config_geometry(doc)
    blk = _block(doc, "residual")
    tau = float(blk.get("tau", 0.5))
    kind = blk.get("weight_kind", "starstar")
    mc_points = int(blk.get("mc_points", 0))
    regions = blk.get("regions")
    if regions is not None and (
            not isinstance(regions, list)
            or not set(regions) <= {"near", "transition", "far"}):
        raise ConfigError("residual.regions must list near/transition/far")
    seed = _seed(doc)
    ic = interaction_constants(prm)
    cfg = balance(ss, q, L, ic, prm)
    compare_q = blk.get("compare_q")
    weight = WeightSpec(tau=tau, kind=kind)
    qtol = max(tol, 1e-7)

    u = assemble(cfg, prm)
    rep = _merged_residual(u, weight, qtol, seed, mc_points, threads,
                           regions)
    out.write("residual_report.json", rep.to_json())

    betas = []
    for i in range(ss.size):
        b = beta_projection(u, KernelIndex(i, 0, 0), tol=qtol)
        betas.append({"tower": i, "level": 0, "mode": 0, "beta": b,
                      "leading_form": beta_leading_form(u, i)})
    summary_rows = [["balanced", rep.weighted_norm]]

    if compare_q is not None:
        qc = np.asarray(compare_q, dtype=float)
        if qc.shape != (ss.size,) or np.any(qc <= 0):
            raise ConfigError("residual.compare_q must match the point count")
        unb = BalancedConfig(sigma_set=ss, q=qc, R=cfg.R, a0_hat=cfg.a0_hat,
                             L=cfg.L, L_i=periods_from_q(qc, cfg.L, prm),
                             resid_B1=float("nan"), resid_B2=float("nan"))
        u2 = assemble(unb, prm)
        rep2 = _merged_residual(u2, weight, qtol, seed, 0, threads, regions)
        out.write("residual_report_compare.json", rep2.to_json())
        summary_rows.append(["compare", rep2.weighted_norm])
        summary_rows.append(["ratio", rep2.weighted_norm
                             / rep.weighted_norm])
        for i in range(ss.size):
            b = beta_projection(u2, KernelIndex(i, 0, 0), tol=qtol)
            betas.append({"tower": i, "level": 0, "mode": 0, "beta": b,
                          "leading_form": beta_leading_form(u2, i),
                          "config": "compare"})

    out.write("beta.json", json.dumps({"L": cfg.L, "entries": betas},
                                      indent=2, sort_keys=True))
    out.write("residual_summary.csv",
              _csv(["run", "weighted_norm"], summary_rows))


def cmd_toda(doc: dict, out: OutDir, tol: float, threads: int) -> None:
    _params(doc)  # validates n, sigma even though the operator is scale-free
    blk = _block(doc, "toda")
    kind = blk.get("kind", "dilation")
    K = int(blk.get("K", 50))
    tau = float(blk.get("tau", 0.5))
    period = blk.get("period")
    try:
        op = toda_mod.TodaOperator(kind=kind, K=K,
                                   period=None if period is None
                                   else float(period))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rng = np.random.default_rng(_seed(doc))
    b = rng.standard_normal(K) * np.exp(-2 * tau * np.arange(K))
    x = toda_mod.invert(op, b)
    back = toda_mod.apply(op, x)
    rows = [[j, float(b[j]), float(x[j]), float(back[j])] for j in range(K)]
    out.write("toda.csv", _csv(["j", "b", "x", "apply_invert_b"], rows))
    out.write("toda_check.json", json.dumps({
        "kind": kind, "K": K, "tau": tau,
        "apply_invert_err": float(np.max(np.abs(back - b))),
        "amplification": toda_mod.amplification(op, tau),
    }, indent=2, sort_keys=True))


COMMANDS = {
    "kernel": cmd_kernel,
    "delaunay": cmd_delaunay,
    "constants": cmd_constants,
    "balance": cmd_balance,
    "assemble_residual": cmd_assemble_residual,
    "toda": cmd_toda,
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qcurv",
        description="Singular-solution toolbox: batch tables and diagnostics")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", default="qcurv-out", help="output directory")
    ap.add_argument("--tol", type=float, default=1e-8,
                    help="quadrature/solver budget")
    ap.add_argument("--threads", type=int, default=None,
                    help="worker threads (default: QCURV_THREADS or 1)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        doc = _load_config(args.config)
        threads = _threads(args)
        prm = _params(doc)
        out = OutDir(args.out)
        COMMANDS[args.command](doc, out, args.tol, threads)
        _manifest(out, args.command, doc, prm, _seed(doc), args.tol)
    except (NewtonError, QuadratureError, BalanceError) as exc:
        print(json.dumps({"error": "solver", "detail": str(exc)}),
              file=sys.stderr)
        return 3
    except (ConfigError, ValueError, TypeError, KeyError) as exc:
        # library validation of config-derived values lands here too
        print(json.dumps({"error": "config", "detail": str(exc)}),
              file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
