"""Batch driver: ``zerotemp <subcommand> --config cfg.json [--out dir] [--threads k]``.

Subcommands run slices of the pipeline and share artifacts through the
output directory; ``all`` runs every slice in order. Exit codes: 0 success,
2 bad config, 3 numeric failure, 4 missing prerequisite.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import chain as chain_mod
from . import ldp as ldp_mod
from . import mane as mane_mod
from . import maximizer as max_mod
from . import tropical
from .config import ConfigError, ExperimentConfig, load_config
from .errors import ZerotempError
from .grid import make_grid, read_csv, to_csv
from .potentials import from_config, twist_report
from .transfer import EigenPair, leading_eigenpair, relcompact_bounds, spectral_gap_bound

STAGES = ("solve", "zerotemp", "mane", "graph", "ldp")

# thresholds for the pass/fail flags in summary.json
LAMBDA_AGREEMENT = 1e-10
ROW_TOL = 1e-10
STATIONARY_TOL = 1e-8
ENTROPY_TOL = 1e-12
VARIATIONAL_TOL = 1e-8
M_BOUND_TOL = 1e-6
CALIB_TOL = 1e-7
DUAL_TOL = 1e-7
LIMIT_TOL = 0.05
GRAPH_COVERAGE = 0.95
COHOMOLOGY_TOL = 1e-7


class MissingArtifact(Exception):
    def __init__(self, needed):
        super().__init__(f"missing artifacts; run `{needed}` first with the same config")
        self.needed = needed


class NumericFailure(Exception):
    def __init__(self, where, exc):
        super().__init__(f"{where}: {exc}")
        self.where = where


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, tuples to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _btag(beta: float) -> str:
    return f"{beta:g}".replace(".", "p")


class Pipeline:
    def __init__(self, cfg: ExperimentConfig, out: Path, threads: int = 1):
        self.cfg = cfg
        self.out = Path(out)
        self.threads = max(1, int(threads))
        self.g = make_grid(cfg.n)
        self.A = from_config({"potential": cfg.potential, "perturbation": cfg.perturbation})
        self.hash = cfg.hash()
        self.where = "cli.run"
        for sub in ("stages", "eigen", "chain", "zerotemp", "mane", "graph", "ldp"):
            (self.out / sub).mkdir(parents=True, exist_ok=True)
        self._eigen: dict[float, EigenPair] = {}

    # -- bookkeeping -------------------------------------------------------

    @contextlib.contextmanager
    def op(self, module, operation):
        self.where = f"{module}.{operation}"
        try:
            yield
        except ZerotempError as exc:
            raise NumericFailure(self.where, exc) from exc

    def _state_ok(self) -> bool:
        p = self.out / "state.json"
        return p.exists() and _read_json(p).get("config_hash") == self.hash

    def _mark_state(self):
        _write_json(self.out / "state.json", {"config_hash": self.hash})

    def _stage_path(self, name):
        return self.out / "stages" / f"{name}.json"

    def _has_stage(self, name) -> bool:
        return self._state_ok() and self._stage_path(name).exists()

    def _require(self, name):
        if not self._has_stage(name):
            raise MissingArtifact(name)

    def _eigen_stem(self, beta):
        return self.out / "eigen" / f"beta_{_btag(beta)}"

    def eigenpair(self, beta) -> EigenPair:
        if beta in self._eigen:
            return self._eigen[beta]
        stem = self._eigen_stem(beta)
        if self._state_ok() and Path(f"{stem}.csv").exists():
            ep = EigenPair.load(stem)
        else:
            with self.op("transfer_operator", "leading_eigenpair"):
                ep = leading_eigenpair(beta, self.A, self.g, tol=self.cfg.tolerances.eigen_tol)
        self._eigen[beta] = ep
        return ep

    def _subaction(self, direction) -> tropical.Subaction:
        stem = self.out / "zerotemp" / f"V_{direction}"
        _, data = read_csv(f"{stem}.csv")
        meta = _read_json(f"{stem}.json")
        return tropical.Subaction(
            data[:, 1].copy(), direction, meta["kind"], meta["m"], 0, meta["residual"], meta["iterations"]
        )

    def _karp(self) -> dict:
        return _read_json(self.out / "zerotemp" / "karp.json")

    # -- stages ------------------------------------------------------------

    def solve(self):
        cfg, A, g = self.cfg, self.A, self.g
        if not self._state_ok():
            self._eigen.clear()
        with self.op("potentials", "twist_report"):
            twist = twist_report(A, g)
        with self.op("tropical", "karp_value"):
            karp = tropical.karp_value(A, g)
        m = karp["m"]
        subs = {}
        for direction in (tropical.FORWARD, tropical.BACKWARD):
            with self.op("tropical", "calibrated_subaction"):
                subs[direction] = tropical.calibrated_subaction(A, g, m, direction, tol=cfg.tolerances.calib_tol)
        with self.op("tropical", "duality_certificate"):
            dual = tropical.duality_certificate(subs[tropical.BACKWARD], A, g)

        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            eps = list(pool.map(self.eigenpair, cfg.betas))
        self._mark_state()
        _write_json(self.out / "zerotemp" / "karp.json", {**karp, "cycle_x": [g.nodes[i] for i in karp["cycle"]]})
        for direction, sub in subs.items():
            sub.save(g, self.out / "zerotemp" / f"V_{direction}")

        rows = list(self._map(lambda ep: self._beta_row(ep, m), eps))
        checks = {
            "lambda_agreement": all(r["eigen"]["relative_lambda_mismatch"] <= LAMBDA_AGREEMENT for r in rows),
            "eigenfunctions_positive": all(r["relcompact"]["positive"] for r in rows),
            "relcompact_bounds": all(r["relcompact"]["lambda_in_range"] and r["relcompact"]["phi_in_range"] for r in rows),
            "row_stochasticity": all(r["chain"]["row_stochasticity_residual"] <= ROW_TOL for r in rows),
            "stationarity": all(r["chain"]["stationarity_residual"] <= STATIONARY_TOL for r in rows),
            "entropy_nonpositive": all(r["chain"]["entropy"] <= ENTROPY_TOL for r in rows),
            "variational_identity": all(r["chain"]["variational_residual"] <= VARIATIONAL_TOL for r in rows),
            "mean_A_below_m": all(r["chain"]["mean_A"] <= m + M_BOUND_TOL for r in rows),
            "m_gap_shrinks": all(b["m_gap"] <= a["m_gap"] + 1e-12 for a, b in zip(rows, rows[1:])),
            "calibrated_forward": subs["forward"].kind == "calibrated" and subs["forward"].residual <= CALIB_TOL,
            "calibrated_backward": subs["backward"].kind == "calibrated" and subs["backward"].residual <= CALIB_TOL,
            "dual_gap": abs(dual["gap"]) <= DUAL_TOL,
        }
        stage = {
            "twist": twist,
            "m": m,
            "karp_estimate": karp["karp_estimate"],
            "cycle_x": [g.nodes[i] for i in karp["cycle"]],
            "subactions": {d: s.summary() for d, s in subs.items()},
            "duality": dual,
            "betas": rows,
            "checks": checks,
        }
        _write_json(self._stage_path("solve"), stage)

    def _map(self, fn, items):
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))

    def _beta_row(self, ep: EigenPair, m: float) -> dict:
        A, g = self.A, self.g
        stem = self._eigen_stem(ep.beta)
        if not Path(f"{stem}.csv").exists():
            ep.save(g, stem)
        with self.op("gibbs_chain", "build_chain"):
            c = chain_mod.build_chain(ep, A, g)
            summ = chain_mod.chain_summary(c, ep, A, g)
            path = chain_mod.sample_path(c, self.cfg.sample_length, self.cfg.seed)
        chain_mod.save_chain(c, summ, self.out / "chain" / f"beta_{_btag(ep.beta)}", self.cfg.flags.dump_kernel)
        rate = ep.log_lambda / ep.beta
        return {
            "beta": ep.beta,
            "eigen": {**ep.summary(), "relative_lambda_mismatch": ep.relative_lambda_mismatch},
            "relcompact": relcompact_bounds(ep, A, g),
            "spectral_gap_bound": spectral_gap_bound(ep, A, g),
            "chain": summ,
            "log_lambda_over_beta": rate,
            "m_gap": m - summ["mean_A"],
            "entropy_over_beta": summ["entropy"] / ep.beta,
            "pressure_identity_residual": abs(rate - summ["mean_A"] - summ["entropy"] / ep.beta),
            "sample_mean": float(np.mean(path)),
        }

    def zerotemp(self):
        self._require("solve")
        g = self.g
        eps = [self.eigenpair(b) for b in self.cfg.betas]
        out = {}
        if len(eps) < 2:
            out["skipped"] = "beta_limit needs at least two betas"
        else:
            for direction, key in ((tropical.FORWARD, "forward"), (tropical.BACKWARD, "backward")):
                ref = self._subaction(direction)
                with self.op("tropical", "beta_limit"):
                    lim = tropical.beta_limit(eps, direction, reference=ref)
                d = lim["diagnostics"]
                to_csv(
                    g, lim["all"], self.out / "zerotemp" / f"limit_{key}.csv",
                    header="x," + ",".join(f"u_beta{_btag(b)}" for b in d["betas"]),
                )
                dist = d["to_reference"]
                out[key] = {
                    **d,
                    "decreasing": all(b < a for a, b in zip(dist, dist[1:])),
                    "final_distance": dist[-1],
                }
        checks = {}
        if "forward" in out:
            checks["subaction_limit"] = out["forward"]["decreasing"] and out["forward"]["final_distance"] <= LIMIT_TOL
        out["checks"] = checks
        _write_json(self._stage_path("zerotemp"), out)

    def _cost_matrices(self, m):
        with self.op("mane", "cost_matrices"):
            return mane_mod.cost_matrices(self.A, self.g, m, k_max=self.cfg.k_max, tol=self.cfg.tolerances.peierls_tol)

    def _omega(self, cm):
        with self.op("mane", "omega_set"):
            return mane_mod.omega_set(cm, self.cfg.tolerances.omega_tol)

    def mane(self):
        self._require("solve")
        g, A = self.g, self.A
        karp = self._karp()
        cm = self._cost_matrices(karp["m"])
        omega = self._omega(cm)
        cm.save(self.out / "mane" / "costs")
        mane_mod.save_omega(omega, g, self.out / "mane" / "omega.json")

        rng = np.random.default_rng(self.cfg.seed)
        i, j, k = rng.integers(0, g.n, size=(3, 100_000))
        triangle = float(np.max(cm.S[i, k] - cm.S[i, j] - cm.S[j, k]))
        dx = np.abs(g.nodes[:, None] - g.nodes[None, :])
        lip_viol = max(
            float(np.max(np.abs(cm.S[r][:, None] - cm.S[r][None, :]) - A.lip * dx)) for r in range(g.n)
        )
        stage = {
            "m": cm.m,
            "k_used": cm.k_used,
            "h_converged": cm.h_converged,
            "omega_x": [g.nodes[o] for o in omega],
            "omega_size": len(omega),
            "triangle_violation": triangle,
            "lipschitz_violation": lip_viol,
            "S_minus_h_max": float(np.max(cm.S - cm.h)),
            "cycle_in_omega": set(karp["cycle"]) <= set(omega),
        }
        with self.op("mane", "separating_subaction"):
            sep = mane_mod.separating_subaction(cm, omega, g)
        mane_mod.save_margins(sep, g, self.out / "mane" / "margins.csv")
        sep.save(g, self.out / "mane" / "separating")
        margin = sep.extra["margin"]
        inside = np.zeros(g.n, dtype=bool)
        inside[omega] = True
        stage["separating"] = {
            "min_margin_outside": float(margin[~inside].min()) if (~inside).any() else None,
            "max_margin_inside": float(margin[inside].max()),
            "inequality_violation": sep.inequality_violation(A, g),
        }
        if cm.h_converged:
            with self.op("mane", "subaction_from_boundary"):
                ub = mane_mod.subaction_from_boundary({p: 0.0 for p in omega}, cm, g)
            stage["boundary_subaction"] = {
                "calibration_residual": ub.residual,
                "boundary_error": ub.extra["boundary_error"],
            }
        s = stage["separating"]
        stage["checks"] = {
            "triangle": triangle <= 1e-9,
            "lipschitz": lip_viol <= 1e-9,
            "S_le_h": stage["S_minus_h_max"] <= 1e-9,
            "cycle_in_omega": stage["cycle_in_omega"],
            "separating": (s["min_margin_outside"] is None or s["min_margin_outside"] > 0)
            and s["max_margin_inside"] <= 1e-6
            and s["inequality_violation"] <= 1e-9,
        }
        _write_json(self._stage_path("mane"), stage)

    def graph(self):
        self._require("solve")
        g, A = self.g, self.A
        twist = twist_report(A, g)
        if not twist["is_twist"]:
            _write_json(self._stage_path("graph"), {"skipped": "twist condition fails on the grid", "checks": {}})
            return
        karp = self._karp()
        u = self._subaction(tropical.BACKWARD)
        with self.op("maximizer", "graph_map"):
            gm = max_mod.graph_map(u, A, g)
        sm = max_mod.SupportMeasure(
            tuple((a, b, 1.0 / len(karp["cycle"])) for a, b in zip(karp["cycle"], karp["cycle"][1:] + karp["cycle"][:1])),
            "karp-cycle",
        )
        mono = max_mod.monotonicity_check(g.nodes[gm.Y], gm.defined_at, g, sign=twist["sign"])
        supp = max_mod.support_on_graph_check(sm, gm, g)
        coh = max_mod.cohomology_residual(sm, u, A, g)
        row, col = sm.marginals(g.n)
        gm.save(g, self.out / "graph" / "Y.csv")
        max_mod.save_support(sm, g, self.out / "graph" / "support.json")
        coverage = len(gm.defined_at) / g.n
        stage = {
            "coverage": coverage,
            "monotone": mono,
            "support_on_graph": supp,
            "cohomology_residual": coh,
            "support_integral": sm.integral(A, g),
            "marginal_gap": float(np.max(np.abs(row - col))),
        }
        stage["checks"] = {
            "coverage": coverage >= GRAPH_COVERAGE,
            "monotone": mono["ok"],
            "support_on_graph": supp["ok"],
            "cohomology": coh <= COHOMOLOGY_TOL,
        }
        _write_json(self._stage_path("graph"), stage)

    def ldp(self):
        self._require("zerotemp")
        g, A = self.g, self.A
        karp = self._karp()
        V = self._subaction(tropical.FORWARD)
        Vbar = self._subaction(tropical.BACKWARD)
        omega_path = self.out / "mane" / "omega.json"
        if self._has_stage("mane") and omega_path.exists():
            omega_size = len(_read_json(omega_path))
        else:
            omega_size = len(self._omega(self._cost_matrices(karp["m"])))
        degenerate = omega_size > 1
        reports = []
        if len(self.cfg.betas) >= 3:
            eps = {b: self.eigenpair(b) for b in self.cfg.betas}
            for idx, cyl in enumerate(self.cfg.cylinders):
                with self.op("ldp", "ldp_table"):
                    rep = ldp_mod.ldp_table(
                        A, g, cyl, self.cfg.betas, V, Vbar, karp["m"], eigenpairs=eps, hypotheses_unverified=degenerate
                    )
                rep.save(self.out / "ldp" / f"cylinder_{idx}")
                reports.append(rep.to_dict())
        tol = self.cfg.tolerances.ldp_tol
        stage = {"hypotheses_unverified": degenerate, "reports": reports}
        stage["checks"] = {
            f"cylinder_{i}": r["F_inf"] >= -1e-9 and r["converged"] and r["rows"][-1]["error"] <= tol
            for i, r in enumerate(reports)
        }
        _write_json(self._stage_path("ldp"), stage)

    def write_summary(self):
        stages = {}
        checks = {}
        for name in STAGES:
            if self._has_stage(name):
                st = _read_json(self._stage_path(name))
                stages[name] = st
                for k, v in st.get("checks", {}).items():
                    checks[f"{name}.{k}"] = v
        summary = {
            "config_hash": self.hash,
            "potential": self.A.name,
            "n": self.cfg.n,
            "m": stages.get("solve", {}).get("m"),
            "stages": stages,
            "checks": checks,
            "all_pass": all(checks.values()) if checks else False,
        }
        _write_json(self.out / "summary.json", summary)
        return summary

    def run(self, command):
        if command == "all":
            flags = self.cfg.flags
            self.solve()
            self.zerotemp()
            if flags.run_mane:
                self.mane()
            if flags.run_graph:
                self.graph()
            if flags.run_ldp:
                self.ldp()
        else:
            getattr(self, command)()
        return self.write_summary()


def build_parser():
    p = argparse.ArgumentParser(prog="zerotemp", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=STAGES + ("all",))
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="output directory (defaults to the config's 'output')")
    p.add_argument("--threads", type=int, default=1)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else Path(os.path.dirname(os.path.abspath(args.config))) / cfg.output
    try:
        pipe = Pipeline(cfg, out, threads=args.threads)
        summary = pipe.run(args.command)
    except MissingArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except NumericFailure as exc:
        print(f"numeric failure in {exc}", file=sys.stderr)
        return 3
    except ZerotempError as exc:
        print(f"numeric failure in {pipe.where if 'pipe' in locals() else 'cli.run'}: {exc}", file=sys.stderr)
        return 3
    failed = [k for k, v in summary["checks"].items() if not v]
    print(f"{args.command}: {len(summary['checks']) - len(failed)}/{len(summary['checks'])} checks pass")
    for k in failed:
        print(f"  FAIL {k}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
