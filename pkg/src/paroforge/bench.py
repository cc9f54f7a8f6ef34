"""Instance generators and the ARO / PARO / PRO comparison protocol."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from importlib import resources

import numpy as np

from .geometry import sample_uniform, vertices_of
from .model import TwoStageProblem, UncertaintySet, parse_problem
from .pareto import algorithm1, max_difference_scenario, pro_ldr
from .robust import optimal_recourse, solve_aro_vertices, worst_case, OptimalRecourseRule, LinearDecisionRule
from .toy import radiation_therapy

COLUMNS = (
    "instance", "seed", "opt", "wc_aro", "wc_paro", "wc_pro", "wc_pro_ldr",
    "l1_paro_aro", "l1_paro_pro", "l1_aro_pro",
    "imp_nom_aro", "imp_nom_pro", "imp_nom_proldr",
    "imp_avg_aro", "imp_avg_pro", "imp_avg_proldr",
    "imp_max_aro", "imp_max_pro", "imp_max_proldr",
    "runtime_ms", "status",
)
METRIC_COLUMNS = COLUMNS[2:19]


def rt_example(delta: float = 0.5) -> TwoStageProblem:
    """Radiation-therapy toy problem with demands in ``[50, 60]^2``."""
    return radiation_therapy(delta)


def load_rt_json() -> TwoStageProblem:
    """The bundled ``rt_example.json`` (delta = 0.5)."""
    text = resources.files("paroforge").joinpath("data/rt_example.json").read_text()
    return parse_problem(text)


@dataclass(frozen=True)
class FacilityLocationConfig:
    n: int = 10
    m: int = 4
    s: float = 15.0
    f_range: tuple[int, int] = (4, 22)
    c_range: tuple[int, int] = (2, 12)
    l: float = 8.0
    u: float = 12.0
    gamma: float = 45.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("need at least one facility and one demand location")
        if self.l > self.u:
            raise ValueError("demand lower bound exceeds upper bound")
        if self.gamma < self.m * self.l:
            raise ValueError("gamma below m * l leaves the uncertainty set empty")
        for lo, hi in (self.f_range, self.c_range):
            if lo > hi:
                raise ValueError("empty integer cost range")

    @classmethod
    def full_scale(cls, seed: int = 0) -> "FacilityLocationConfig":
        return cls(n=20, m=8, gamma=90.0, seed=seed)


def gen_facility_location(config: FacilityLocationConfig) -> TwoStageProblem:
    """Capacitated facility location with binary openings and uncertain demand.

    Stage 2 ships ``y[i*m + j]`` from facility i to location j.  Rows are the
    demand rows ``-sum_i y_ij <= -z_j``, capacity rows
    ``sum_j y_ij - s x_i <= 0``, ``y >= 0`` and ``0 <= x <= 1``.
    """
    rng = np.random.default_rng(config.seed)
    n, m = config.n, config.m
    f = rng.integers(config.f_range[0], config.f_range[1], size=n, endpoint=True).astype(float)
    c = rng.integers(config.c_range[0], config.c_range[1], size=(n, m), endpoint=True).astype(float)
    n_y = n * m
    rows = m + n + n_y + 2 * n
    A0 = np.zeros((rows, n))
    B = np.zeros((rows, n_y))
    r0 = np.zeros(rows)
    R = np.zeros((rows, m))
    for j in range(m):
        B[j, [i * m + j for i in range(n)]] = -1.0
        R[j, j] = -1.0
    for i in range(n):
        B[m + i, i * m:(i + 1) * m] = 1.0
        A0[m + i, i] = -config.s
    base = m + n
    B[base:base + n_y] = -np.eye(n_y)
    base += n_y
    A0[base:base + n] = np.eye(n)
    r0[base:base + n] = 1.0
    A0[base + n:base + 2 * n] = -np.eye(n)
    H = np.vstack([np.ones(m), np.eye(m), -np.eye(m)])
    h = np.concatenate([[config.gamma], np.full(m, config.u), np.full(m, -config.l)])
    U = UncertaintySet(H, h, nominal=np.full(m, 0.5 * (config.l + config.u)))
    return TwoStageProblem.create(c0=f, d=c.ravel(), A0=A0, B=B, r0=r0, R=R, uncertainty=U,
                                  integrality=np.ones(n, bool))


# -- comparison protocol --------------------------------------------------------

def relative_improvement(alt: float, paro: float) -> float:
    """``100 * (alt - paro) / |alt|`` (0 when both vanish)."""
    if alt == 0:
        return 0.0 if paro == 0 else float(np.sign(-paro) * np.inf)
    return 100.0 * (alt - paro) / abs(alt)


@dataclass(frozen=True, eq=False)
class ComparisonRow:
    values: dict
    x_aro: np.ndarray
    x_paro: np.ndarray
    x_pro: np.ndarray
    z_max: np.ndarray

    def __getitem__(self, key):
        return self.values[key]


def run_comparison(problem: TwoStageProblem, sample_count: int = 10, seed: int = 0, *,
                   nominal=None, method: str = "mountain", backend: str = "bnb-highs",
                   max_iters: int = 100, tol: float = 1e-7) -> ComparisonRow:
    """Compare PARO against ARO, PRO and PRO(LDR) on one instance.

    Improvements are ``100 * (alt - paro) / |alt|`` at the nominal scenario,
    averaged over ``sample_count`` hit-and-run scenarios, and at the scenario
    of largest ARO-to-PARO gap.  PRO(LDR) is evaluated with its linear rule,
    everything else with optimal recourse.
    """
    U = problem.uncertainty
    V = vertices_of(U)
    if nominal is None:
        nominal = U.nominal if U.nominal is not None else V.mean(axis=0)
    nominal = np.asarray(nominal, float)
    aro = solve_aro_vertices(problem, V, backend=backend)
    alg = algorithm1(problem, aro.x, method=method, backend=backend, seed=seed, vertices=V,
                     max_iters=max_iters, tol=tol)
    x_aro, x_paro = aro.x, alg.x
    pro = pro_ldr(problem, nominal, vertices=V, backend=backend)
    x_pro, rule = pro.x, pro.rule
    if problem.integrality.any():
        b = problem.integrality
        for x in (x_aro, x_paro, x_pro):
            x[b] = np.round(x[b])

    def val(x, z):
        return optimal_recourse(problem, x, z, backend=backend).objective

    def val_ldr(z):
        return float(problem.c_at(z) @ x_pro + problem.d @ rule(z))

    def imps(z):
        p = val(x_paro, z)
        return (relative_improvement(val(x_aro, z), p), relative_improvement(val(x_pro, z), p),
                relative_improvement(val_ldr(z), p))

    orr = OptimalRecourseRule(backend)
    row = {
        "opt": aro.opt,
        "wc_aro": worst_case(problem, x_aro, orr, V).value,
        "wc_paro": worst_case(problem, x_paro, orr, V).value,
        "wc_pro": worst_case(problem, x_pro, orr, V).value,
        "wc_pro_ldr": worst_case(problem, x_pro, LinearDecisionRule(rule), V).value,
        "l1_paro_aro": float(np.abs(x_paro - x_aro).sum()),
        "l1_paro_pro": float(np.abs(x_paro - x_pro).sum()),
        "l1_aro_pro": float(np.abs(x_aro - x_pro).sum()),
    }
    row["imp_nom_aro"], row["imp_nom_pro"], row["imp_nom_proldr"] = imps(nominal)
    samples = sample_uniform(U, sample_count, seed, vertices=V) if sample_count else np.zeros((0, U.L))
    if len(samples):
        avg = np.mean([imps(z) for z in samples], axis=0)
    else:
        avg = np.zeros(3)
    row["imp_avg_aro"], row["imp_avg_pro"], row["imp_avg_proldr"] = (float(a) for a in avg)
    z_max, _ = max_difference_scenario(problem, x_aro, x_paro, method=method, backend=backend,
                                       seed=seed, vertices=V)
    row["imp_max_aro"], row["imp_max_pro"], row["imp_max_proldr"] = imps(z_max)
    return ComparisonRow(row, x_aro, x_paro, x_pro, z_max)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(round(v, 9) + 0.0)
    return str(v)


def run_benchmark(config: FacilityLocationConfig, instances: int, seed: int, *,
                  sample_count: int = 10, deterministic: bool = False, method: str = "mountain",
                  backend: str = "bnb-highs", max_iters: int = 100, tol: float = 1e-7,
                  progress=None) -> tuple[str, list[dict]]:
    """Run the comparison on ``instances`` generated problems.

    Instance ``k`` uses seed ``seed + k`` for generation and sampling.
    Returns the CSV text (data rows then summary rows) and the data rows.
    """
    rows: list[dict] = []
    for k in range(instances):
        inst_seed = seed + k
        row = {"instance": k, "seed": inst_seed}
        start = time.perf_counter()
        try:
            cfg = FacilityLocationConfig(**{**asdict(config), "seed": inst_seed})
            res = run_comparison(gen_facility_location(cfg), sample_count, inst_seed,
                                 method=method, backend=backend, max_iters=max_iters, tol=tol)
            row.update(res.values)
            row["status"] = "ok"
        except Exception as exc:  # record and keep going
            row["status"] = f"error: {type(exc).__name__}: {exc}"
        row["runtime_ms"] = "" if deterministic else round(1000 * (time.perf_counter() - start))
        rows.append(row)
        if progress is not None:
            progress(row)
    return benchmark_csv(rows, deterministic), rows


def summary_rows(rows: list[dict]) -> list[dict]:
    ok = [r for r in rows if r.get("status") == "ok"]
    out = []
    for label, fn in (("min", np.min), ("median", np.median), ("max", np.max)):
        s = {"instance": label}
        for col in METRIC_COLUMNS:
            vals = [r[col] for r in ok]
            s[col] = float(fn(vals)) if vals else ""
        out.append(s)
    share = {"instance": "share_differing"}
    for col in ("l1_paro_aro", "l1_paro_pro", "l1_aro_pro"):
        share[col] = float(np.mean([r[col] > 0.5 for r in ok])) if ok else ""
    share["status"] = (float(np.mean([r["l1_paro_aro"] > 0.5 or r["l1_paro_pro"] > 0.5 for r in ok]))
                       if ok else "")
    out.append(share)
    return out


def benchmark_csv(rows: list[dict], deterministic: bool = False) -> str:
    buf = io.StringIO()
    if not deterministic:
        buf.write(f"# generated {datetime.now(timezone.utc).isoformat()}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in rows + summary_rows(rows):
        writer.writerow([_fmt(r.get(c, "")) for c in COLUMNS])
    return buf.getvalue()


def table1(delta: float = 0.5) -> dict:
    """Objective values of three policies on three scenarios of the toy problem."""
    p = rt_example(delta)
    scen = [(60.0, 60.0), (50.0, 55.0), (50.0, 50.0)]
    out = {}
    for label, fn in (("x=25 optimal recourse", lambda z: optimal_recourse(p, [25], z).objective),
                      ("x=35 optimal recourse", lambda z: optimal_recourse(p, [35], z).objective),
                      ("x=25 static y=35", lambda z: float(p.c_at(z) @ [25] + p.d @ [35]))):
        out[label] = {str(z): fn(z) for z in scen}
    return out


def dump_json(obj, path=None) -> str:
    text = json.dumps(obj, indent=2, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o))
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text
