"""
End-to-end pipeline from a curve to multiscale sums of ``beta^p diam``,
plus the experiment presets behind the CLI.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .curves import Curve, GENERATORS, curve_length, gen_oscillating, oscillating_length
from .heisenberg import MetricCtx, distance
from .multires import Ball, build_nets, multiresolution
from .verify.beta import EmptyBallError, fit_line, normalize_to_unit_ball

__all__ = [
    "ParamSet",
    "Report",
    "ball_betas",
    "beta_sum",
    "EXPERIMENTS",
    "UnknownExperimentError",
    "run_experiment",
]

G_RADIUS = 0.01


@dataclass(frozen=True)
class ParamSet:
    """Run parameters; defaults are moderated versions of the theory's constants."""

    A: float = 10.0
    J: int = 10
    kappa: float = 3.0
    delta: float = 2.0 ** -10
    eps0: float = 0.01
    eta: float = 1.0
    epsilon: float = 0.05
    M: int = 3
    seed: int = 0
    net_depth: int = 6
    p_exponents: tuple = (2, 4)
    k_step: float | None = 1 / 256
    samples: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "p_exponents", tuple(float(p) if p % 1 else int(p) for p in self.p_exponents))
        if not self.A > 2:
            raise ValueError("A must exceed 2")
        if self.J < 10:
            raise ValueError("J must be at least 10")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not 0 < self.eta <= 16:
            raise ValueError("eta must lie in (0, 16]")
        if not 0 < self.eps0 < 1:
            raise ValueError("eps0 must lie in (0, 1)")
        if not 0 < self.epsilon < 0.5:
            raise ValueError("epsilon must lie in (0, 1/2)")
        if self.net_depth < 1:
            raise ValueError("net_depth must be at least 1")
        if self.M < 0 or self.samples < 0:
            raise ValueError("M and samples must be nonnegative")
        if self.k_step is not None and not self.k_step > 0:
            raise ValueError("k_step must be positive")

    @property
    def ctx(self) -> MetricCtx:
        return MetricCtx(self.eta)

    def replace(self, **kw) -> "ParamSet":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["p_exponents"] = list(self.p_exponents)
        return d

    @classmethod
    def from_mapping(cls, m: dict) -> "ParamSet":
        """Build from strings or values, ignoring unknown keys; ``depth`` aliases ``net_depth``."""
        kinds = {f.name: f for f in dataclasses.fields(cls)}
        kw = {}
        for k, v in m.items():
            k = {"depth": "net_depth", "a": "A"}.get(k, k)
            if k not in kinds or (v is None and k != "k_step"):
                continue
            if k == "p_exponents":
                if isinstance(v, str):
                    v = [float(x) for x in v.replace(",", " ").split()]
                kw[k] = tuple(v)
            elif k in ("J", "M", "seed", "net_depth", "samples"):
                kw[k] = int(v)
            elif k == "k_step":
                kw[k] = None if v is None or str(v).lower() in ("none", "") else float(v)
            else:
                kw[k] = float(v)
        return cls(**kw)


@dataclass
class Report:
    """Per-level cumulative sums of ``beta^p diam`` over the multiresolution."""

    params: ParamSet
    rows: list[dict]
    totals: dict
    totals_G: dict
    length: float
    meta: dict = field(default_factory=dict)

    @property
    def ratios(self) -> dict:
        return {p: (v / self.length if self.length > 0 else math.nan) for p, v in self.totals.items()}

    def csv_rows(self):
        header = ["n", "balls", "sum_p2", "sum_p4", "length_ratio_p4"]
        rows = [[r["n"], r["balls"], r["sums"].get(2, 0.0), r["sums"].get(4, 0.0),
                 r["sums"].get(4, 0.0) / self.length if self.length > 0 else 0.0] for r in self.rows]
        return header, rows

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "length": self.length,
            "totals": {f"p{p}": v for p, v in self.totals.items()},
            "totals_G": {f"p{p}": v for p, v in self.totals_G.items()},
            "ratios": {f"p{p}": v for p, v in self.ratios.items()},
            "rows": [{"n": r["n"], "balls": r["balls"], **{f"sum_p{p}": v for p, v in r["sums"].items()}}
                     for r in self.rows],
            "meta": self.meta,
        }


def ball_betas(ctx: MetricCtx, K, balls: list[Ball]) -> np.ndarray:
    """``beta_K(B)`` for each ball.

    ``beta_K(B) diam(B)`` is the minimax width of ``K cap B`` and depends
    only on that point set, so balls catching the same points share one fit.
    """
    K = np.asarray(K, dtype=float)
    if not balls:
        return np.zeros(0)
    C = np.array([b.center for b in balls], dtype=float)
    R = np.array([b.radius for b in balls])
    widths: dict[bytes, float] = {}
    out = np.empty(len(balls))
    for i in range(len(balls)):
        idx = np.flatnonzero(distance(ctx, C[i], K) <= R[i] * (1 + 1e-12))
        if len(idx) == 0:
            raise EmptyBallError(f"ball {i} misses K")
        key = idx.tobytes()
        if key not in widths:
            fit = fit_line(ctx, normalize_to_unit_ball(K[idx], C[i], R[i]))
            widths[key] = fit.beta * 2 * R[i]
        out[i] = widths[key] / (2 * R[i])
    return out


def _sample_set(curve: Curve, k_step: float | None) -> np.ndarray:
    return (curve if k_step is None else curve.resampled(k_step)).path


def beta_sum(ctx: MetricCtx, curve: Curve, params: ParamSet, normalize: bool = True) -> Report:
    """Sums of ``beta_Gamma(B)^p diam(B)`` over the balls of levels ``0..net_depth``.

    The curve is first dilated to diameter 1.  ``K`` is the curve resampled
    at spacing ``k_step`` (or its vertices when ``k_step`` is None).  Rows
    hold partial sums through each level; ``totals_G`` restricts to balls
    of radius below ``1/100``.
    """
    lam = 1.0
    if normalize:
        curve, lam = curve.normalized(ctx)
    K = _sample_set(curve, params.k_step)
    length = curve_length(ctx, curve)
    nets = build_nets(ctx, K, range(0, params.net_depth + 1))
    balls = multiresolution(nets, params.A)
    betas = ball_betas(ctx, K, balls)
    ps = params.p_exponents
    per_level: dict[int, list] = {}
    G = {p: 0.0 for p in ps}
    for b, be in zip(balls, betas):
        row = per_level.setdefault(b.n, [0, {p: 0.0 for p in ps}])
        row[0] += 1
        for p in ps:
            v = be ** p * b.diameter
            row[1][p] += v
            if b.radius < G_RADIUS:
                G[p] += v
    rows = []
    acc = {p: 0.0 for p in ps}
    for n in range(params.net_depth + 1):
        cnt, sums = per_level.get(n, [0, {p: 0.0 for p in ps}])
        for p in ps:
            acc[p] += sums[p]
        rows.append({"n": n, "balls": cnt, "sums": dict(acc)})
    meta = {"curve": dict(curve.meta), "normalization": lam, "K_points": int(len(K)),
            "balls": len(balls)}
    return Report(params, rows, dict(acc), G, length, meta)


# corpora ---------------------------------------------------------------------


def mainbound_corpus(seed: int = 0) -> dict[str, Curve]:
    return {
        "segment": GENERATORS["segment"](),
        "circle": GENERATORS["circle"](),
        "square": GENERATORS["square"](),
        "walk": GENERATORS["walk"](200, 0.05, seed),
        "oscillating": gen_oscillating(0.6, 0.5, 6),
    }


def filtration_corpus(seed: int = 0) -> dict[str, Curve]:
    return {
        "oscillating": gen_oscillating(0.6, 0.5, 3),
        "circle": GENERATORS["circle"](),
        "walk": GENERATORS["walk"](200, 0.05, seed + 1),
    }


# filtration pipeline ----------------------------------------------------------


def curve_filtration(ctx: MetricCtx, curve: Curve, params: ParamSet, n0: int = 5, k_step: float = 0.01):
    """Cube forest of the balls ``2B`` at levels ``n0`` and ``n0 + J``, its prefiltration and completion.

    Uses the first family of the separated split.  ``curve`` should already
    have diameter 1.
    """
    from .filtration import complete_filtration, prefiltration_from_cubes
    from .multires import build_cubes, split_families

    K = curve.resampled(k_step).path
    J = params.J
    nets = build_nets(ctx, K, range(n0, n0 + J + 1))
    balls = [b.scaled(2) for b in multiresolution(nets, params.A) if b.n in (n0, n0 + J)]
    fam = split_families(ctx, balls, J, params.kappa)[0]
    forest = build_cubes(ctx, fam, J)
    pre = prefiltration_from_cubes(ctx, curve, forest)
    return forest, pre, complete_filtration(ctx, pre, params.delta)


def filtration_checks(ctx: MetricCtx, pre, filt, telescoping: bool = True) -> dict:
    """Audit plus the per-arc inequalities: arc/segment comparison, telescoping, ``d_tau`` and the
    modified four-point bound."""
    from .filtration import (audit_filtration, check_prefiltration, chord_sums, d_tau,
                             modified_four_point, telescoping_bound)
    from .verify.lemmas import check_lemma8

    audit = audit_filtration(ctx, filt, pre)
    pre_problems = check_prefiltration(ctx, pre)
    n = len(filt.arcs)
    slack = np.array([check_lemma8(ctx, filt.arc(i)) / max(filt.diameter(ctx, i), 1e-300) for i in range(n)])
    sums = chord_sums(ctx, filt)
    T = filt.curve.T
    inner = [i for i in range(n) if filt.arcs[i].level < filt.max_level]
    dcache: dict = {}
    tele = [telescoping_bound(ctx, filt, i, dcache) for i in inner] if telescoping else []
    dratio = [dcache[i] if i in dcache else d_tau(ctx, filt, i) for i in inner]
    dratio = [d / filt.diameter(ctx, i) for d, i in zip(dratio, inner)]
    mp = [r for r in (modified_four_point(ctx, filt, i) for i in inner) if r is not None]
    out = {
        "levels": {str(k): len(v) for k, v in filt.levels.items()},
        "arcs": n,
        "prefiltration_problems": pre_problems,
        "audit_problems": audit["problems"],
        "arc_segment_min_rel_slack": float(slack.min()) if n else None,
        "arc_segment_violations": int((slack < -1e-10).sum()),
        "chord_sums": {str(k): v for k, v in sums.items()},
        "param_length": T,
        "chord_ok": all(v <= T * (1 + 1e-12) for v in sums.values()),
        "telescoping_checked": len(tele),
        "telescoping_ok": all(t["ok"] for t in tele),
        "telescoping_min_margin": min((t["bound"] - t["lhs"]) / t["diam"] for t in tele) if tele else None,
        "dtau_max_ratio": max(dratio) if dratio else None,
        "dtau_ok": all(r <= 2 + 1e-12 for r in dratio),
        "mp4_checked": len(mp),
        "mp4_ok": all(r["ok"] for r in mp),
        "mp4_max_needed_constant": max((r["needed_constant"] for r in mp), default=None),
    }
    out["ok"] = (not pre_problems and not audit["problems"] and out["arc_segment_violations"] == 0
                 and out["chord_ok"] and out["telescoping_ok"] and out["dtau_ok"] and out["mp4_ok"])
    return out


# experiments -----------------------------------------------------------------


class UnknownExperimentError(ValueError):
    pass


def _length_bound(q: float, c: float, terms: int = 1_000_000) -> float:
    """``prod_k 1/cos(c/k^q)``, summed in logs with an integral tail estimate."""
    k = np.arange(1, terms + 1, dtype=float)
    s = float(-np.log(np.cos(c / k ** q)).sum())
    # -log cos x <= x^2 (for x < 1), and sum_{k>N} k^-2q <= N^(1-2q) / (2q - 1)
    s += c * c * terms ** (1 - 2 * q) / (2 * q - 1)
    return math.exp(s)


def exp_dichotomy(params: ParamSet, stages=(2, 4, 6, 8), q: float = 0.6, c: float = 0.5,
                  depth_offset: int = 4, subdivide: int = 4):
    """Oscillating family: ``K`` is the vertex set of the ``subdivide``-refined curve, depth ``stage + offset``."""
    ctx = params.ctx
    rows, reports = [], {}
    for st in stages:
        curve = gen_oscillating(q, c, st, subdivide=subdivide)
        rep = beta_sum(ctx, curve, params.replace(net_depth=st + depth_offset, k_step=None))
        reports[st] = rep
        rows.append([st, curve_length(ctx, curve), rep.totals.get(2, 0.0), rep.totals.get(4, 0.0)])
    bound = _length_bound(q, c) if q > 0.5 else math.inf
    s2 = [r[2] for r in rows]
    s4 = [r[3] for r in rows]
    checks = {}
    if 4 in stages and 8 in stages:
        i4, i8 = stages.index(4), stages.index(8)
        checks["p2_ratio_8_4"] = s2[i8] / s2[i4]
        checks["p4_ratio_8_4"] = s4[i8] / s4[i4]
        checks["p2_ratio_ok"] = bool(checks["p2_ratio_8_4"] > 1.5)
        checks["p4_ratio_ok"] = bool(checks["p4_ratio_8_4"] <= 1.25)
    checks["p2_increasing"] = all(b > a for a, b in zip(s2, s2[1:]))
    checks["length_bound"] = bound
    checks["length_ok"] = all(r[1] <= bound * (1 + 1e-12) and
                              abs(r[1] - oscillating_length(q, c, r[0])) <= 1e-9 * r[1] for r in rows)
    ok = all(v for k, v in checks.items() if k.endswith("_ok") or k == "p2_increasing")
    summary = {"stages": list(stages), "q": q, "c": c, "depth_offset": depth_offset, "subdivide": subdivide,
               "rows": [dict(zip(["stage", "length", "sum_p2", "sum_p4"], r)) for r in rows],
               "checks": checks, "ok": ok,
               "per_stage": {str(st): reports[st].to_dict() for st in stages}}
    return ["stage", "length", "sum_p2", "sum_p4"], rows, summary, int(not ok)


def exp_mainbound(params: ParamSet, depths=(6, 8), tolerance: float = 0.10):
    ctx = params.ctx
    rows, changes = [], {}
    for name, curve in mainbound_corpus(params.seed).items():
        ratios = []
        for d in depths:
            rep = beta_sum(ctx, curve, params.replace(net_depth=d))
            ratios.append(rep.ratios.get(4, 0.0))
            rows.append([name, d, rep.length, rep.totals.get(2, 0.0), rep.totals.get(4, 0.0), ratios[-1]])
        a, b = ratios[0], ratios[-1]
        changes[name] = 0.0 if a == b else (abs(b - a) / abs(a) if a else math.inf)
    ok = all(np.isfinite(r[5]) for r in rows) and all(v <= tolerance for v in changes.values())
    summary = {"depths": list(depths), "tolerance": tolerance, "relative_change": changes, "ok": ok}
    return ["curve", "depth", "length", "sum_p2", "sum_p4", "ratio_p4"], rows, summary, int(not ok)


def exp_prop4(params: ParamSet):
    from .verify.curvature import CurvatureConfig, verify_prop4

    rep = verify_prop4(CurvatureConfig(params.epsilon, samples=params.samples, seed=params.seed))
    rows = [[name, r["samples"], r["violations"], r["min_slack"]] for name, r in rep["regimes"].items()]
    return ["regime", "samples", "violations", "min_slack"], rows, rep, rep["violations"]


def exp_lemmas(params: ParamSet):
    from .verify.lemmas import check_lemma8, verify_helper_lemmas

    ctx = params.ctx
    helper = verify_helper_lemmas(ctx, params.samples, params.seed)
    rows = [["concave_power", helper["samples"], helper["concave_power"]["violations"], None],
            ["power_curvature", helper["samples"], helper["power_curvature"]["violations"],
             helper["power_curvature"]["min_rel_slack"]]]
    l8 = {}
    for name, curve in filtration_corpus(params.seed).items():
        curve, _ = curve.normalized(ctx)
        _, _, filt = curve_filtration(ctx, curve, params)
        slack = np.array([check_lemma8(ctx, filt.arc(i)) / max(filt.diameter(ctx, i), 1e-300)
                          for i in range(len(filt.arcs))])
        bad = int((slack < -1e-10).sum())
        l8[name] = {"arcs": len(slack), "violations": bad, "min_rel_slack": float(slack.min())}
        rows.append([f"arc_segment:{name}", len(slack), bad, float(slack.min())])
    violations = helper["violations"] + sum(v["violations"] for v in l8.values())
    summary = {"helper": helper, "arc_segment": l8, "violations": violations}
    return ["check", "samples", "violations", "min_rel_slack"], rows, summary, violations


def exp_martingale(params: ParamSet, Ms=None, depth: int = 4, trees: int = 3):
    from .verify.martingale import martingale_for_curve, random_tree, tree_from_cubes, verify_martingale

    ctx = params.ctx
    Ms = [params.M] if Ms is None else list(Ms)
    rows, reports = [], []
    built = []
    for name, curve in filtration_corpus(params.seed).items():
        curve, _ = curve.normalized(ctx)
        builds = [(f"random{k}", random_tree(ctx, curve, depth, seed=params.seed * 1000 + k))
                  for k in range(trees)]
        forest, _, _ = curve_filtration(ctx, curve, params)
        builds.append(("cubes", tree_from_cubes(ctx, curve, forest)))
        built.append((name, curve, builds))
    for M in Ms:
        for name, curve, builds in built:
            for label, nodes in builds:
                rep = verify_martingale(martingale_for_curve(ctx, curve, nodes, M, params.eps0),
                                        samples=params.samples, seed=params.seed)
                rep["curve"], rep["tree"] = name, label
                reports.append(rep)
                rows.append([M, name, label, rep["nodes"], rep["depth"], rep["max_density"],
                             rep["density_bound"], rep["sum_diam"], rep["prop_bound"], rep["ok"]])
    bad = sum(not r["ok"] for r in reports)
    header = ["M", "curve", "tree", "nodes", "depth", "max_density", "density_bound", "sum_diam", "prop_bound", "ok"]
    return header, rows, {"eps0": params.eps0, "Ms": Ms, "trees": reports, "violations": bad}, bad


def exp_filtration_audit(params: ParamSet, synthetic: bool = True):
    from .filtration import complete_filtration, synthetic_prefiltration

    ctx = params.ctx
    rows, out = [], {}
    instances = []
    for name, curve in filtration_corpus(params.seed).items():
        curve, _ = curve.normalized(ctx)
        _, pre, filt = curve_filtration(ctx, curve, params)
        instances.append((f"cubes:{name}", pre, filt))
    if synthetic:
        curve, _ = filtration_corpus(params.seed)["oscillating"].normalized(ctx)
        pre = synthetic_prefiltration(ctx, curve, 5, 0.2, 3, seed=params.seed)
        instances.append(("synthetic3:oscillating", pre, complete_filtration(ctx, pre, params.delta, min_J=5)))
    for label, pre, filt in instances:
        r = filtration_checks(ctx, pre, filt)
        out[label] = r
        rows.append([label, len(r["levels"]), r["arcs"], len(r["prefiltration_problems"]) + len(r["audit_problems"]),
                     r["arc_segment_min_rel_slack"], r["chord_ok"], r["telescoping_ok"], r["dtau_max_ratio"],
                     r["mp4_checked"], r["mp4_ok"], r["ok"]])
    bad = sum(not r["ok"] for r in out.values())
    header = ["instance", "levels", "arcs", "problems", "arc_segment_min_rel_slack", "chord_ok", "telescoping_ok",
              "dtau_max_ratio", "mp4_checked", "mp4_ok", "ok"]
    return header, rows, {"instances": out, "violations": bad}, bad


EXPERIMENTS = {
    "dichotomy": exp_dichotomy,
    "mainbound": exp_mainbound,
    "prop4": exp_prop4,
    "lemmas": exp_lemmas,
    "martingale": exp_martingale,
    "filtration-audit": exp_filtration_audit,
}


def run_experiment(name: str, params: ParamSet, out_dir, **options) -> dict:
    """Run a preset and write ``<name>.csv``, ``<name>.json`` and ``manifest.json`` into ``out_dir``.

    Returns the file paths, the summary and the number of violations.
    """
    if name not in EXPERIMENTS:
        raise UnknownExperimentError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    from ._kernels import apply_thread_cap

    apply_thread_cap()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    header, rows, summary, violations = EXPERIMENTS[name](params, **options)
    csv_path, json_path, man_path = out / f"{name}.csv", out / f"{name}.json", out / "manifest.json"
    io.write_csv(csv_path, header, rows)
    io.write_json(json_path, {"experiment": name, "params": params.to_dict(), "options": options,
                              "violations": violations, "summary": summary})
    io.write_json(man_path, {"experiment": name, "params": params.to_dict(), "seed": params.seed,
                             "options": options, "files": [csv_path.name, json_path.name],
                             "package_version": _version(),
                             "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                             "elapsed_s": time.perf_counter() - t0})
    return {"files": [str(csv_path), str(json_path), str(man_path)], "summary": summary, "violations": violations}


def _version() -> str:
    from importlib.metadata import PackageNotFoundError, version

    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"
