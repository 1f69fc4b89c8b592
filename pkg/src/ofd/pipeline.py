"""Configuration and stage functions behind the ``ofd`` command line.

Stages read and write plain files in an output directory:

========== ============================== ===========================================
stage      reads                          writes
========== ============================== ===========================================
gen-data   config                         dataset.jsonl, H.json, fleet.json (fleets)
label      dataset.jsonl                  dataset.jsonl (relabeled at the config eps)
train      dataset.jsonl                  ellipsoid.json, train_report.json
approx     ellipsoid.json                 PD.json, approx_report.json
design     PD.json, dataset.jsonl         design.json, x_star.json (+ reduced files)
evaluate   design files, dataset.jsonl    report.json, plot CSVs for T = 2
validate   everything above               audit.json
========== ============================== ===========================================

Every artifact except ``timings.json`` is a deterministic function of the
config, so two runs with the same config produce identical files.
"""
from __future__ import annotations

import copy
import json
import logging
import time
from pathlib import Path

import numpy as np

from . import jsonio
from .exceptions import ConfigError, OFDError, ParseError

log = logging.getLogger("ofd")

DEFAULTS = {
    "seed": 0,
    "workers": 1,
    "horizon": {"delta_hours": 1.0, "start_hour": 9.0},
    "feasible_set": {"fleet_seed": 1, "pool_size": 200, "pool_seed": 2, "externality": "random"},
    "labeling": {"K": 1, "eps": 0.0, "node_limit": 50_000, "time_limit": 5.0, "backend": "highs"},
    "dataset": {"N": 500, "kappa": 0.2, "feasible_share": 0.4, "max_proj_iters": 5,
                "max_repeat": 5, "budget_factor": 40.0},
    "classifier": {"lam": 1e-5, "epochs": 2000, "batch_size": 32, "step0": 0.1,
                   "validation_fraction": 0.2, "pd_floor": 1e-6},
    "approx": {"delta": 0.1, "prune_budget": 500},
    "design": {"reduced_variant": True, "backend": "highs"},
    "evaluate": {"mc_samples": 1_000_000, "I": 100, "m2_mode": "hit-and-run",
                 "realizability_samples": 0, "realizability_eps": 0.0, "plot": True},
}

REQUIRED = ("horizon.T", "feasible_set.kind")
MODEL_KEYS = ("p_max", "p_min", "s0", "s_max", "s_min", "ramp_up", "ramp_dn")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _get(cfg: dict, path: str):
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"missing config key: {path}")
        node = node[part]
    return node


def validate_config(cfg: dict) -> dict:
    for key in REQUIRED:
        _get(cfg, key)
    kind = cfg["feasible_set"]["kind"]
    if kind == "polytope":
        for k in MODEL_KEYS:
            _get(cfg, f"feasible_set.model.{k}")
    elif kind == "fleet":
        _get(cfg, "feasible_set.counts")
        if cfg["feasible_set"]["externality"] not in ("random", "mean"):
            raise ConfigError("feasible_set.externality must be 'random' or 'mean'")
    else:
        raise ConfigError(f"feasible_set.kind must be 'polytope' or 'fleet', got {kind!r}")
    if not isinstance(cfg["horizon"]["T"], int) or cfg["horizon"]["T"] < 1:
        raise ConfigError("horizon.T must be a positive integer")
    return cfg


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the JSON file, then ``overrides``; raises ConfigError."""
    user = {}
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file {path} does not exist") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
    cfg = _merge(DEFAULTS, user)
    cfg = _merge(cfg, overrides or {})
    return validate_config(cfg)


# --- feasible-set context ---------------------------------------------------

class Context:
    """Objects derived from a config, built lazily and shared between stages."""

    def __init__(self, cfg: dict, out_dir, workers: int | None = None, shared: dict | None = None):
        """``shared`` lets several contexts with the same feasible set reuse
        disaggregators (and their solve caches), e.g. across ``eps`` values."""
        self.cfg = cfg
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.workers = int(cfg["workers"] if workers is None else workers)
        self._labelers = {} if shared is None else shared
        self._fleet = None
        self.timings = {}

    @property
    def seed(self) -> int:
        return int(self.cfg["seed"])

    @property
    def horizon(self):
        from .market_model import HorizonConfig
        h = self.cfg["horizon"]
        return HorizonConfig(int(h["T"]), float(h["delta_hours"]), float(h["start_hour"]))

    @property
    def kind(self) -> str:
        return self.cfg["feasible_set"]["kind"]

    def true_x(self):
        from .market_model import AggregatorModelVars, build_x
        m = self.cfg["feasible_set"]["model"]
        v = AggregatorModelVars.uniform(self.horizon.T, *(float(m[k]) for k in MODEL_KEYS))
        return build_x(v, self.horizon)

    def fleet(self):
        from .devices import sample_fleet
        if self._fleet is None:
            fs = self.cfg["feasible_set"]
            self._fleet = sample_fleet(fs["counts"], int(fs["fleet_seed"]))
        return self._fleet

    def disaggregator(self, mean: bool):
        from .devices import mean_scenario, sample_pool
        from .disagg import FleetDisaggregator, PolytopeDisaggregator
        from .market_model import aggregator_polytope
        lab = self.cfg["labeling"]
        if self.kind == "polytope":
            return PolytopeDisaggregator(aggregator_polytope(self.true_x(), self.horizon),
                                         backend=lab["backend"])
        fs = self.cfg["feasible_set"]
        h = self.horizon
        if mean:
            pool = [mean_scenario(self.fleet(), h)]
        else:
            pool = sample_pool(self.fleet(), h, int(fs["pool_size"]), int(fs["pool_seed"]))
        return FleetDisaggregator(self.fleet(), h, pool, backend=lab["backend"],
                                  node_limit=int(lab["node_limit"]),
                                  time_limit=lab["time_limit"])

    def labeler(self, eps=None, realizability: bool = False):
        """Labeler of the design data, or (``realizability``) of the uncertain fleet."""
        from .disagg import ChanceLabeler
        lab = self.cfg["labeling"]
        mean = (self.kind == "fleet" and self.cfg["feasible_set"]["externality"] == "mean"
                and not realizability)
        eps = float(lab["eps"] if eps is None else eps)
        fs = {k: v for k, v in self.cfg["feasible_set"].items() if k != "externality"}
        key = (json.dumps(fs, sort_keys=True),
               json.dumps(self.cfg["horizon"], sort_keys=True), mean)
        if key not in self._labelers:
            self._labelers[key] = self.disaggregator(mean)
        K = 1 if (mean or self.kind == "polytope") else int(lab["K"])
        return ChanceLabeler(self._labelers[key], K, eps)

    def path(self, name) -> Path:
        return self.out / name

    def timed(self, stage):
        ctx = self

        class _T:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                ctx.timings[stage] = time.perf_counter() - self.t0
                jsonio.dump(ctx.timings, ctx.path("timings.json"))
                return False

        return _T()


def _require(path: Path, what: str) -> Path:
    if not Path(path).exists():
        raise ParseError(f"missing input {what}: {path}")
    return Path(path)


# --- stages -----------------------------------------------------------------

def stage_gen_data(ctx: Context):
    from .dataset_gen import estimate_H, generate
    with ctx.timed("gen-data"):
        labeler = ctx.labeler()
        H = estimate_H(labeler.disaggregator)
        H.save(ctx.path("H.json"))
        if ctx.kind == "fleet":
            jsonio.dump([d.to_dict() for d in ctx.fleet()], ctx.path("fleet.json"))
        ds = ctx.cfg["dataset"]
        D = generate(labeler, H, int(ds["N"]), kappa=float(ds["kappa"]), seed=ctx.seed,
                     feasible_share=float(ds["feasible_share"]),
                     max_proj_iters=int(ds["max_proj_iters"]), max_repeat=int(ds["max_repeat"]),
                     budget_factor=float(ds["budget_factor"]), workers=ctx.workers)
        D.meta.update({"K": labeler.K, "kind": ctx.kind})
        D.save(ctx.path("dataset.jsonl"))
    log.info("gen-data: %d points, feasible share %.3f", len(D), D.feasible_fraction())
    return D


def stage_label(ctx: Context, dataset_path=None):
    """Relabel a dataset against the configured scenarios and ``eps``, reusing stored draws."""
    from .dataset_gen import DataPoint, LabeledDataset
    src = _require(dataset_path or ctx.path("dataset.jsonl"), "dataset")
    with ctx.timed("label"):
        D = LabeledDataset.load(src)
        labeler = ctx.labeler()
        pts = []
        changed = 0
        for pt in D.points:
            r = labeler(pt.p, pt.draw)
            changed += int(r.y != pt.y)
            pts.append(DataPoint(pt.p, int(r.y), float(r.c), pt.origin, pt.draw, pt.parents,
                                 pt.weights))
        out = LabeledDataset(pts, labeler.eps, D.seed, D.kappa, D.n_labels + len(pts),
                             dict(D.meta, relabeled_from=str(src), K=labeler.K))
        out.save(ctx.path("dataset.jsonl"))
        jsonio.dump({"points": len(pts), "changed": changed, "eps": labeler.eps},
                    ctx.path("label_report.json"))
    return out


def stage_train(ctx: Context, dataset_path=None):
    from .classifier import QuadraticClassifier
    from .dataset_gen import LabeledDataset
    src = _require(dataset_path or ctx.path("dataset.jsonl"), "dataset")
    c = ctx.cfg["classifier"]
    with ctx.timed("train"):
        D = LabeledDataset.load(src)
        clf = QuadraticClassifier(lam=float(c["lam"]), epochs=int(c["epochs"]),
                                  step0=float(c["step0"]), batch_size=c["batch_size"],
                                  validation_fraction=float(c["validation_fraction"]),
                                  random_state=ctx.seed, pd_floor=float(c["pd_floor"]))
        clf.fit(D.X, D.y)
        clf.ellipsoid_.save(ctx.path("ellipsoid.json"))
        jsonio.dump(clf.report_.to_json(), ctx.path("train_report.json"))
    log.info("train: accuracy %.4f / validation %.4f", clf.report_.train_accuracy,
             clf.report_.validation_accuracy)
    return clf


def stage_approx(ctx: Context, ellipsoid_path=None):
    from .classifier import Ellipsoid
    from .poly_geom import approximate_ellipsoid, ball_approximation
    src = _require(ellipsoid_path or ctx.path("ellipsoid.json"), "ellipsoid")
    a = ctx.cfg["approx"]
    with ctx.timed("approx"):
        E = Ellipsoid.load(src)
        P_D = approximate_ellipsoid(E, float(a["delta"]), prune_budget=int(a["prune_budget"]),
                                    backend=ctx.cfg["design"]["backend"])
        P_D.save(ctx.path("PD.json"))
        M, m, r = E.to_ball_form()
        jsonio.dump({"rows": P_D.n_rows, "aux": ball_approximation(E.dim, r, a["delta"]).n_aux,
                     "delta": float(a["delta"]), "radius": r}, ctx.path("approx_report.json"))
    return P_D


def stage_design(ctx: Context, polytope_path=None, dataset_path=None):
    from .dataset_gen import LabeledDataset
    from .flex_design import compute_prototype, farkas_design
    from .market_model import HPolytope, aggregator_polytope, build_G, build_reduced_G
    P_D = HPolytope.load(_require(polytope_path or ctx.path("PD.json"), "polytope"))
    D = LabeledDataset.load(_require(dataset_path or ctx.path("dataset.jsonl"), "dataset"))
    if len(D) == 0:
        raise ParseError("dataset is empty")
    h = ctx.horizon
    if P_D.dim != h.T or D.T != h.T:
        from .exceptions import DimensionMismatch
        raise DimensionMismatch(f"inputs have dimension {P_D.dim}/{D.T}, horizon T={h.T}")
    backend = ctx.cfg["design"]["backend"]
    variants = [("", False)]
    if ctx.cfg["design"]["reduced_variant"]:
        variants.append(("_reduced", True))
    out = {}
    with ctx.timed("design"):
        for suffix, reduced in variants:
            G = build_reduced_G(h) if reduced else build_G(h)
            x_bar = compute_prototype(D.X, D.y, G)
            res = farkas_design(x_bar, G, P_D, backend=backend)
            res.diagnostics["reduced"] = reduced
            res.save(ctx.path(f"design{suffix}.json"))
            aggregator_polytope(res.x_star, h, reduced).save(ctx.path(f"x_star{suffix}.json"))
            out[suffix or "full"] = res
    log.info("design: beta %.6g", out["full"].beta_star)
    return out


def stage_evaluate(ctx: Context, design_path=None, dataset_path=None, polytope_path=None):
    from .dataset_gen import LabeledDataset
    from .evaluation import (ellipse_boundary, mc_volume, metric_M1, metric_M2,
                             polygon_vertices, write_points_csv, write_polyline_csv)
    from .flex_design import DesignResult
    from .market_model import HPolytope, aggregator_polytope
    from .poly_geom import certify_containment

    h = ctx.horizon
    ev = ctx.cfg["evaluate"]
    n = int(ev["mc_samples"])
    design_path = _require(design_path or ctx.path("design.json"), "design")
    D = LabeledDataset.load(_require(dataset_path or ctx.path("dataset.jsonl"), "dataset"))
    P_D = HPolytope.load(_require(polytope_path or ctx.path("PD.json"), "polytope"))
    report = {"seed": ctx.seed, "config": ctx.cfg, "designs": {}}
    with ctx.timed("evaluate"):
        for name, path in (("full", design_path), ("reduced", ctx.path("design_reduced.json"))):
            if not Path(path).exists():
                continue
            res = DesignResult.load(path)
            reduced = bool(res.diagnostics.get("reduced", False))
            P = aggregator_polytope(res.x_star, h, reduced)
            ok, slack = certify_containment(P, P_D)
            vol = mc_volume(P, n, seed=ctx.seed + 1, backend="highs")
            entry = {"beta": res.beta_star, "x_star": res.x_star, "volume": vol.to_json(),
                     "contained": bool(ok), "containment_slack": slack}
            if name == "full":
                proto = mc_volume(aggregator_polytope(res.x_bar, h, reduced), n,
                                  seed=ctx.seed + 2, backend="highs")
                scaled = proto.estimate / res.beta_star ** h.T
                scaled_se = proto.std_error / res.beta_star ** h.T
                entry["prototype_volume"] = proto.to_json()
                entry["replica_check"] = {
                    "scaled_prototype": scaled, "scaled_std_error": scaled_se,
                    "difference": vol.estimate - scaled,
                    "within_3sigma": bool(abs(vol.estimate - scaled)
                                          <= 3.0 * np.hypot(vol.std_error, scaled_se))}
            report["designs"][name] = entry
        if ctx.kind == "polytope":
            report["true_volume"] = mc_volume(aggregator_polytope(ctx.true_x(), h), n,
                                              seed=ctx.seed + 3, backend="highs").to_json()
        report["M1"] = metric_M1(D.X, D.y)
        if int(ev["I"]) > 0:
            m2 = metric_M2(D.X, D.y, ctx.labeler(), I=int(ev["I"]), seed=ctx.seed + 4,
                           mode=ev["m2_mode"])
            report["M2"] = {"value": m2.value, "I": int(ev["I"]), "mode": m2.mode,
                            "chance": m2.chance}
        report["feasible_fraction"] = D.feasible_fraction()
        report["dataset_size"] = len(D)
        rs = int(ev["realizability_samples"])
        if rs > 0:
            report["realizability"] = realizability(
                aggregator_polytope(DesignResult.load(design_path).x_star, h), ctx, rs)
        tr = ctx.path("train_report.json")
        if tr.exists():
            t = jsonio.load(tr)
            report["classifier"] = {k: t[k] for k in ("train_accuracy", "validation_accuracy",
                                                     "cond_W2", "lam", "best_epoch")}
        jsonio.dump(report, ctx.path("report.json"))
        if ev["plot"] and h.T == 2:
            _write_plots(ctx, D, report, P_D)
    return report


def realizability(P, ctx: Context, samples: int) -> dict:
    """Share of uniform points of ``P`` failing chance labeling under the uncertain fleet."""
    from .evaluation import bounding_box
    ev = ctx.cfg["evaluate"]
    lo, hi = bounding_box(P, backend="highs")
    rng = np.random.default_rng(ctx.seed + 5)
    pts = []
    while len(pts) < samples:
        X = lo + (hi - lo) * rng.random((4096, P.dim))
        pts.extend(X[P.contains(X)])
    pts = np.array(pts[:samples])
    labeler = ctx.labeler(eps=float(ev["realizability_eps"]), realizability=True)
    draws = np.random.SeedSequence(ctx.seed + 6).generate_state(samples)
    ys = np.array([labeler(p, int(d)).y for p, d in zip(pts, draws)])
    return {"samples": samples, "eps": labeler.eps, "K": labeler.K,
            "infeasible_share": float(np.mean(ys == 1))}


def _write_plots(ctx: Context, D, report, P_D):
    from .classifier import Ellipsoid
    from .evaluation import ellipse_boundary, polygon_vertices, write_points_csv, write_polyline_csv
    from .market_model import aggregator_polytope
    h = ctx.horizon
    curves = {}
    if ctx.kind == "polytope":
        curves["F"] = polygon_vertices(aggregator_polytope(ctx.true_x(), h))
    if ctx.path("ellipsoid.json").exists():
        curves["E_D"] = ellipse_boundary(Ellipsoid.load(ctx.path("ellipsoid.json")))
    curves["P_D"] = polygon_vertices(P_D)
    for name, key, red in (("P_x_star", "full", False), ("P_x_reduced", "reduced", True)):
        if key in report["designs"]:
            curves[name] = polygon_vertices(
                aggregator_polytope(report["designs"][key]["x_star"], h, red))
    write_polyline_csv(ctx.path("plot_boundaries.csv"), curves)
    write_points_csv(ctx.path("plot_dataset.csv"), D.X, D.y)


# --- audit ------------------------------------------------------------------

def audit(ctx: Context, samples: int = 20, directions: int = 200) -> dict:
    """Re-check stored artifacts; returns ``{"passed": bool, "checks": [...]}``."""
    from .classifier import Ellipsoid
    from .dataset_gen import LabeledDataset, box_polytope
    from .flex_design import DesignResult
    from .market_model import HPolytope, aggregator_polytope, build_G, build_reduced_G
    from .poly_geom import SupportFunction, certify_containment

    checks = []

    def add(name, passed, **detail):
        checks.append({"name": name, "passed": bool(passed), **detail})

    files = {k: ctx.path(v) for k, v in (("dataset", "dataset.jsonl"), ("ellipsoid", "ellipsoid.json"),
                                         ("PD", "PD.json"), ("design", "design.json"))}
    missing = [k for k, p in files.items() if not p.exists()]
    D = None
    if files["dataset"].exists():
        try:
            D = LabeledDataset.load(files["dataset"])
        except ParseError as exc:
            add("dataset-parse", False, error=str(exc))
        if D is not None and len(D) == 0:
            missing.append("dataset (empty)")
            D = None
    add("inputs", not missing, missing=missing, status="missing-input" if missing else "ok")

    h = ctx.horizon
    if files["design"].exists() and files["PD"].exists():
        P_D = HPolytope.load(files["PD"])
        res = DesignResult.load(files["design"])
        reduced = bool(res.diagnostics.get("reduced", False))
        ok, slack = certify_containment(aggregator_polytope(res.x_star, h, reduced), P_D)
        add("containment", ok, worst_slack=slack)
        G = build_reduced_G(h) if reduced else build_G(h)
        recon = (res.x_bar - G @ res.z_star) / res.beta_star
        add("design-parameterization", res.beta_star > 0 and np.allclose(recon, res.x_star,
                                                                          atol=1e-9, rtol=1e-9),
            max_error=float(np.max(np.abs(recon - res.x_star))))
        if D is not None:
            x_bar = np.maximum((D.X[D.y == -1] @ G.T).max(0), 0.0)
            add("prototype", np.allclose(x_bar, res.x_bar, atol=1e-12, rtol=1e-12))
    if files["ellipsoid"].exists() and files["PD"].exists():
        E = Ellipsoid.load(files["ellipsoid"])
        P_D = HPolytope.load(files["PD"])
        M, m, r = E.to_ball_form()
        Mi = np.linalg.inv(M)
        Y = HPolytope(P_D.A @ Mi, P_D.b + P_D.A @ Mi @ m)
        delta = float(ctx.cfg["approx"]["delta"])
        U = np.random.default_rng(ctx.seed).standard_normal((directions, h.T))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        h_Y = SupportFunction(Y, "highs")
        s = np.array([h_Y(u) for u in U])
        tol = 1e-7 * (1.0 + r)
        add("sandwich", s.min() >= r / (1 + delta) - tol and s.max() <= r + tol,
            min_support=float(s.min()), max_support=float(s.max()), radius=r, delta=delta)
    if D is not None:
        eps = D.eps
        pts = D.points
        add("label-threshold", all((pt.y == -1) == (pt.c >= 1 - eps - 1e-12) for pt in pts))
        lo, hi = np.asarray(D.meta.get("H_lo", -np.inf)), np.asarray(D.meta.get("H_hi", np.inf))
        H = box_polytope(lo, hi) if "H_lo" in D.meta else None
        add("inside-H", H is None or bool(np.all(H.contains(D.X, tol=1e-9))))
        seg = []
        comb = []
        for pt in pts:
            if pt.origin == "Interpolated":
                a, b = pts[pt.parents[0]].p, pts[pt.parents[1]].p
                seg.append(np.allclose(pt.p, pt.weights[0] * a + pt.weights[1] * b, atol=1e-12)
                           and abs(pt.weights[0] - D.kappa) < 1e-15)
            elif pt.origin == "ConvexCombo":
                w = np.asarray(pt.weights)
                comb.append(bool(np.all(w >= 0) and abs(w.sum() - 1) < 1e-12
                                 and all(pts[i].y == -1 for i in pt.parents)))
        add("interpolation", all(seg), count=len(seg))
        add("convex-combinations", all(comb), count=len(comb))
        labeler = ctx.labeler(eps=eps)
        idx = np.random.default_rng(ctx.seed).choice(len(pts), size=min(samples, len(pts)),
                                                     replace=False)
        mism = [int(i) for i in idx if labeler(pts[i].p, pts[i].draw).y != pts[i].y]
        add("label-determinism", not mism, sampled=len(idx), mismatches=mism)
    out = {"passed": all(c["passed"] for c in checks), "checks": checks}
    jsonio.dump(out, ctx.path("audit.json"))
    return out


STAGES = ("gen-data", "train", "approx", "design", "evaluate")


def run_pipeline(ctx: Context):
    stage_gen_data(ctx)
    stage_train(ctx)
    stage_approx(ctx)
    stage_design(ctx)
    return stage_evaluate(ctx)


__all__ = ["DEFAULTS", "Context", "load_config", "validate_config", "stage_gen_data",
           "stage_label", "stage_train", "stage_approx", "stage_design", "stage_evaluate",
           "audit", "run_pipeline", "realizability", "OFDError"]
