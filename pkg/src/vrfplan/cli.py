"""Command line front end: analytic evaluation, simulation, parameter
sweeps, and self-validation.

Verbs:
  analyze   print the analytic blocking report for one configuration
  simulate  run one simulation replication and print its statistics
  sweep     evaluate a grid of configurations, writing one CSV row each
  apply --help to any verb for its flags
  validate  run the internal oracle suites and report pass/fail

Exit codes: 0 success, 1 validation or sweep failure, 2 bad configuration.
Set VRF_LOG=debug|info|warning to control diagnostics on stderr.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import itertools
import json
import logging
import os
import sys
import time

import numpy as np

from . import aggregator, ctmc, rru, sim
from .config import (
    DEFAULT_LINK_CAPACITY_MBPS,
    DEFAULT_SERVICE_RATE,
    PlanningConfig,
    RateSet,
    ThresholdPolicy,
    TrafficSpec,
    config_from_dict,
    default_profile,
    select_rates,
    traffic_from_load,
)
from .errors import InvalidConfigError, VrfError

log = logging.getLogger("vrfplan")

CSV_COLUMNS = (
    "n", "a", "n_d", "gap", "arrival", "events", "seed",
    "pb_analytic", "pb_components", "pb_sim", "pb_sim_ci",
    "blocked_rru", "blocked_fha", "agree", "wall_s",
)
#: Two estimates agree when they differ by at most this many standard errors.
AGREE_SIGMA = 3.0
#: Below this blocking probability two estimates agree unconditionally.
AGREE_FLOOR = 1e-4


def _setup_logging() -> None:
    level = os.environ.get("VRF_LOG", "warning").upper()
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _parse_arrival(text: str) -> sim.ArrivalProcess | tuple[str, float]:
    """Parse 'poisson' or 'weibull:K' into (kind, shape)."""
    if text == "poisson":
        return "poisson", 1.0
    if text.startswith("weibull:"):
        try:
            shape = float(text.split(":", 1)[1])
        except ValueError:
            raise VrfError(f"bad arrival spec {text!r}: shape must be a number")
        return "weibull", shape
    raise VrfError(f"bad arrival spec {text!r}: expected poisson or weibull:K")


def _coordinate_seed(base_seed: int, a: float, n_d: int, gap: int, arrival: str,
                     n: int, events: int) -> int:
    """Deterministic 63-bit seed from the grid coordinates, independent
    of execution order."""
    key = f"{base_seed}|{a:.12g}|{n_d}|{gap}|{arrival}|{n}|{events}"
    return int(hashlib.sha256(key.encode()).hexdigest()[:16], 16) >> 1


def _planning(a: float, n_d: int, n: int, gap: int, mu: float = DEFAULT_SERVICE_RATE,
              link: float = DEFAULT_LINK_CAPACITY_MBPS) -> PlanningConfig:
    profile = default_profile()
    server_count = select_rates(profile, n_d).server_count
    return PlanningConfig(profile=profile, n_d=n_d, threshold_gap=gap,
                          traffic=traffic_from_load(a, mu, server_count),
                          cluster_size=n, link_capacity_mbps=link)


def _sim_config(planning: PlanningConfig, kind: str, shape: float, events: int,
                seed: int, latency: float = 0.0) -> sim.SimConfig:
    arrival = sim.ArrivalProcess(kind=kind, rate=planning.traffic.lam,
                                 shape=shape if kind == "weibull" else 1.0)
    return sim.SimConfig(cluster_size=planning.cluster_size, rate_set=planning.rate_set,
                         thresholds=planning.thresholds, traffic=planning.traffic,
                         link_capacity_mbps=planning.link_capacity_mbps, arrival=arrival,
                         events=events, seed=seed, reconfig_latency=latency)


def _agree_flag(pb_analytic: float, pb_sim: float, stderr: float) -> bool:
    if pb_analytic < AGREE_FLOOR and pb_sim < AGREE_FLOOR:
        return True
    return abs(pb_analytic - pb_sim) <= AGREE_SIGMA * stderr


def _load_planning_file(path: str, gap_override: int | None) -> PlanningConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise InvalidConfigError("<file>", f"cannot read {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfigError("<file>", f"invalid JSON in {path!r}: {exc}") from exc
    if gap_override is not None and isinstance(raw, dict):
        raw["threshold_gap"] = gap_override
    return config_from_dict(raw)


# ---------------------------------------------------------------------------
# analyze

def cmd_analyze(args: argparse.Namespace) -> int:
    planning = _load_planning_file(args.config, args.gap)
    t0 = time.perf_counter()
    spec = aggregator.spec_from_planning(planning)
    space = aggregator.enumerate_states(spec)
    report = aggregator.blocking(spec, space=space)
    wall = time.perf_counter() - t0
    rates = " ".join(f"{r:g}" for r in planning.rate_set.rates)
    print(f"cluster size        {planning.cluster_size}")
    print(f"rates (Mbit/s)      {rates}")
    print(f"normalized load a   {planning.traffic.a:g}")
    print(f"threshold gap       {planning.threshold_gap}")
    print(f"link capacity       {planning.link_capacity_mbps:g} Mbit/s")
    print(f"feasible states     {len(space)}")
    print(f"binomial convention {report.convention} (n = {report.binomial_n})")
    for i, p in enumerate(report.per_rate):
        print(f"P_B component {i}     {_fmt(p)}")
    print(f"P_B total           {_fmt(report.total)}")
    if args.out:
        row = {
            "n": planning.cluster_size, "a": _fmt(planning.traffic.a),
            "n_d": planning.n_d, "gap": planning.threshold_gap,
            "arrival": "", "events": "", "seed": "",
            "pb_analytic": _fmt(report.total),
            "pb_components": ";".join(_fmt(p) for p in report.per_rate),
            "pb_sim": "", "pb_sim_ci": "", "blocked_rru": "", "blocked_fha": "",
            "agree": "", "wall_s": _fmt(wall),
        }
        _write_rows(args.out, [row])
    return 0


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args: argparse.Namespace) -> int:
    planning = _load_planning_file(args.config, args.gap)
    kind, shape = _parse_arrival(args.arrival)
    cfg = _sim_config(planning, kind, shape, args.events, args.seed, args.latency)
    t0 = time.perf_counter()
    stats = sim.run(cfg)
    wall = time.perf_counter() - t0
    print(f"events processed     {stats.events_processed} (warm-up {stats.warmup_events})")
    print(f"arrivals             {stats.arrivals}")
    print(f"accepted             {stats.accepted}")
    print(f"blocked (unit full)  {stats.blocked_rru}")
    print(f"blocked (link)       {stats.blocked_fha}")
    print(f"upgrade attempts     {stats.upgrade_attempts}")
    print(f"P_B flow estimate    {_fmt(stats.estimate_fha_flow)} "
          f"+- {_fmt(stats.ci_half_width)} (95% CI)")
    print(f"P_B per attempt      {_fmt(stats.estimate_fha_per_attempt)}")
    print(f"P_B per arrival      {_fmt(stats.estimate_fha_per_arrival)} (link) "
          f"{_fmt(stats.estimate_rru_per_arrival)} (unit) "
          f"{_fmt(stats.estimate_total_per_arrival)} (total)")
    print(f"mean aggregate rate  {_fmt(stats.c_time_average)} Mbit/s")
    print(f"max aggregate rate   {_fmt(stats.c_max)} Mbit/s")
    if args.out:
        report = aggregator.blocking_for_planning(planning)
        arrival_label = args.arrival
        row = {
            "n": planning.cluster_size, "a": _fmt(planning.traffic.a),
            "n_d": planning.n_d, "gap": planning.threshold_gap,
            "arrival": arrival_label, "events": cfg.events, "seed": cfg.seed,
            "pb_analytic": _fmt(report.total),
            "pb_components": ";".join(_fmt(p) for p in report.per_rate),
            "pb_sim": _fmt(stats.estimate_fha_flow),
            "pb_sim_ci": _fmt(stats.ci_half_width),
            "blocked_rru": stats.blocked_rru, "blocked_fha": stats.blocked_fha,
            "agree": str(_agree_flag(report.total, stats.estimate_fha_flow,
                                     stats.stderr)).lower(),
            "wall_s": _fmt(wall),
        }
        _write_rows(args.out, [row])
    return 0


# ---------------------------------------------------------------------------
# sweep

_PLAN_DEFAULTS = {
    "gap": [1],
    "arrival": ["poisson"],
    "mode": "analytic",
    "events": 1_000_000,
    "base_seed": 0,
    "mu": DEFAULT_SERVICE_RATE,
    "fha_capacity_mbps": DEFAULT_LINK_CAPACITY_MBPS,
}
_PLAN_KEYS = {"a", "n_d", "n"} | set(_PLAN_DEFAULTS)


def _load_plan(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            plan = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise VrfError(f"cannot read plan {path!r}: {exc}")
    if not isinstance(plan, dict):
        raise VrfError("plan must be a JSON object")
    unknown = set(plan) - _PLAN_KEYS
    if unknown:
        raise VrfError(f"unknown plan keys: {sorted(unknown)}")
    for key in ("a", "n_d", "n"):
        if key not in plan or not isinstance(plan[key], list) or not plan[key]:
            raise VrfError(f"plan key {key!r} must be a non-empty list")
    merged = dict(_PLAN_DEFAULTS)
    merged.update(plan)
    if merged["mode"] not in ("analytic", "simulate", "both"):
        raise VrfError(f"plan mode must be analytic, simulate or both, got {merged['mode']!r}")
    for key in ("gap", "arrival"):
        if not isinstance(merged[key], list) or not merged[key]:
            raise VrfError(f"plan key {key!r} must be a non-empty list")
    return merged


def _plan_points(plan: dict) -> list[dict]:
    """Expand the grid in canonical order; validates every coordinate."""
    points = []
    for a, n_d, gap, arrival, n in itertools.product(
            plan["a"], plan["n_d"], plan["gap"], plan["arrival"], plan["n"]):
        kind, shape = _parse_arrival(arrival)
        planning = _planning(a, n_d, n, gap, plan["mu"], plan["fha_capacity_mbps"])
        del planning  # built only to validate the coordinate up front
        points.append({
            "a": a, "n_d": n_d, "gap": gap, "arrival": arrival, "n": n,
            "kind": kind, "shape": shape, "mode": plan["mode"],
            "events": plan["events"],
            "seed": _coordinate_seed(plan["base_seed"], a, n_d, gap, arrival, n,
                                     plan["events"]),
            "mu": plan["mu"], "link": plan["fha_capacity_mbps"],
        })
    return points


def _sweep_point(point: dict) -> dict:
    """Evaluate one grid point; returns a CSV row dict."""
    t0 = time.perf_counter()
    row = {
        "n": point["n"], "a": _fmt(point["a"]), "n_d": point["n_d"],
        "gap": point["gap"], "arrival": "", "events": "", "seed": "",
        "pb_analytic": "", "pb_components": "", "pb_sim": "", "pb_sim_ci": "",
        "blocked_rru": "", "blocked_fha": "", "agree": "", "wall_s": "",
    }
    try:
        planning = _planning(point["a"], point["n_d"], point["n"], point["gap"],
                             point["mu"], point["link"])
        pb_analytic = None
        if point["mode"] in ("analytic", "both"):
            report = aggregator.blocking_for_planning(planning)
            pb_analytic = report.total
            row["pb_analytic"] = _fmt(report.total)
            row["pb_components"] = ";".join(_fmt(p) for p in report.per_rate)
        if point["mode"] in ("simulate", "both"):
            cfg = _sim_config(planning, point["kind"], point["shape"],
                              point["events"], point["seed"])
            stats = sim.run(cfg)
            row.update({
                "arrival": point["arrival"], "events": point["events"],
                "seed": point["seed"],
                "pb_sim": _fmt(stats.estimate_fha_flow),
                "pb_sim_ci": _fmt(stats.ci_half_width),
                "blocked_rru": stats.blocked_rru,
                "blocked_fha": stats.blocked_fha,
            })
            if pb_analytic is not None:
                row["agree"] = str(_agree_flag(pb_analytic, stats.estimate_fha_flow,
                                               stats.stderr)).lower()
    except Exception as exc:        # noqa: BLE001 - row-level isolation
        log.error("grid point %s failed: %s", point, exc)
        row["agree"] = "error"
    row["wall_s"] = _fmt(time.perf_counter() - t0)
    return row


def _write_rows(path: str, rows: list[dict]) -> None:
    new_file = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", encoding="utf-8", newline="") as fh:
        if new_file:
            fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(str(row[c]) for c in CSV_COLUMNS) + "\n")


def cmd_sweep(args: argparse.Namespace) -> int:
    plan = _load_plan(args.plan)
    if args.events is not None:
        plan["events"] = args.events
    if args.seed is not None:
        plan["base_seed"] = args.seed
    points = _plan_points(plan)
    log.info("sweep: %d grid points, mode %s, jobs %d", len(points), plan["mode"], args.jobs)
    out = sys.stdout if args.out is None else open(args.out, "w", encoding="utf-8", newline="")
    failed = False

    def emit(row: dict) -> None:
        nonlocal failed
        failed = failed or row["agree"] == "error"
        out.write(",".join(str(row[c]) for c in CSV_COLUMNS) + "\n")
        out.flush()

    try:
        out.write(",".join(CSV_COLUMNS) + "\n")
        if args.jobs <= 1:
            for point in points:
                emit(_sweep_point(point))
        else:
            # rows come back in any order; emit them in canonical order as
            # soon as every earlier row is available
            with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
                futures = {pool.submit(_sweep_point, p): i for i, p in enumerate(points)}
                ready: dict[int, dict] = {}
                next_emit = 0
                for fut in concurrent.futures.as_completed(futures):
                    ready[futures[fut]] = fut.result()
                    while next_emit in ready:
                        emit(ready.pop(next_emit))
                        next_emit += 1
    finally:
        if out is not sys.stdout:
            out.close()
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# validate

_TABLE_CAPACITIES = (3, 6, 12, 25, 37, 50)


def _random_chain_spec(rng: np.random.Generator) -> rru.RruChainSpec:
    """Random ladder over the standard capacity table, any gap 1..4."""
    while True:
        m = int(rng.integers(2, 5))
        caps = sorted(rng.choice(_TABLE_CAPACITIES, size=m, replace=False).tolist())
        gap = int(rng.integers(1, 5))
        forward = tuple(int(c) for c in caps[:-1])
        reverse = tuple(f - gap for f in forward)
        if reverse[0] < 1:
            continue
        if any(reverse[i] <= forward[i - 1] for i in range(1, m - 1)):
            continue
        rho = float(rng.uniform(0.1, 40.0))
        server_count = int(caps[-1])
        mu = DEFAULT_SERVICE_RATE
        lam = rho * mu
        a = lam / (server_count * mu)
        if not 0.0 < a < 1.0:
            continue
        rates = tuple(76.8 * c / caps[0] for c in caps)
        try:
            return rru.RruChainSpec(
                rate_set=RateSet(rates=rates, capacities=tuple(int(c) for c in caps)),
                thresholds=ThresholdPolicy(forward=forward, reverse=reverse),
                traffic=TrafficSpec(lam=lam, mu=mu, a=a, server_count=server_count),
            )
        except VrfError:
            continue


def _suite_coefficients(rng: np.random.Generator, count: int = 50) -> dict:
    worst = 0.0
    for _ in range(count):
        spec = _random_chain_spec(rng)
        for level in range(1, spec.level_count + 1):
            closed = rru.partition_coefficients(spec, level)
            oracle = np.exp(rru._oracle_log_coefficients(spec, level))
            oracle *= closed[0] / oracle[0]
            err = float(np.max(np.abs(closed / oracle - 1.0)))
            worst = max(worst, err)
    return {"name": "closed-form coefficients vs chain oracle",
            "specs": count, "max_rel_err": worst, "tolerance": 1e-9,
            "status": "pass" if worst < 1e-9 else "fail"}


def _suite_product_form(rng: np.random.Generator, count: int = 25) -> dict:
    worst_pi = 0.0
    worst_db = 0.0
    checked = 0
    for _ in range(count):
        chain = _random_chain_spec(rng)
        if chain.level_count > 3:
            continue
        checked += 1
        n = int(rng.integers(1, 7))
        link = float(rng.uniform(1.2, float(n) + 0.5)) * chain.rate_set.rates[-1]
        rates = rru.transition_rates(chain)
        spec = aggregator.AggregatorSpec(cluster_size=n, rate_set=chain.rate_set,
                                         link_capacity_mbps=link, rates=rates)
        space = aggregator.enumerate_states(spec)
        pf = aggregator.product_form(spec, binomial_n="true", space=space)
        direct = ctmc.steady_state(aggregator.build_generator(spec, space=space))
        worst_pi = max(worst_pi, float(np.max(np.abs(pf - direct))))
        worst_db = max(worst_db, aggregator.detailed_balance_check(spec, binomial_n="true"))
    # negative control: a saturated cluster checked under the capped binomial
    # convention must show a visible imbalance, proving the checker is not
    # vacuously zero; fixed spec keeps the control mass away from boundaries
    control = rru.RruChainSpec(
        rate_set=RateSet(rates=(76.8, 153.6), capacities=(3, 6)),
        thresholds=ThresholdPolicy(forward=(3,), reverse=(2,)),
        traffic=TrafficSpec(lam=1.5, mu=0.5, a=0.5, server_count=6),
    )
    tight = aggregator.AggregatorSpec(
        cluster_size=4, rate_set=control.rate_set,
        link_capacity_mbps=2.5 * control.rate_set.rates[0],
        rates=rru.transition_rates(control))
    negative_ok = aggregator.detailed_balance_check(tight, binomial_n="effective") > 1e-3
    ok = worst_pi < 1e-8 and worst_db < 1e-10 and negative_ok
    return {"name": "product form vs direct solve", "specs": checked,
            "max_abs_err": worst_pi, "max_balance_residual": worst_db,
            "negative_control": negative_ok,
            "status": "pass" if ok else "fail"}


def _suite_sim_agreement() -> dict:
    points = [(0.3, 3, 16), (0.25, 3, 17), (0.2, 1, 9)]
    results = []
    ok = True
    for a, n_d, n in points:
        planning = _planning(a, n_d, n, 1)
        report = aggregator.blocking_for_planning(planning, binomial_n="true")
        seed = _coordinate_seed(0, a, n_d, 1, "poisson", n, 200_000)
        stats = sim.run(_sim_config(planning, "poisson", 1.0, 200_000, seed))
        diff = abs(report.total - stats.estimate_fha_flow)
        point_ok = diff <= AGREE_SIGMA * stats.stderr or diff <= 1e-4
        ok = ok and point_ok
        results.append({"a": a, "n_d": n_d, "n": n, "analytic": report.total,
                        "simulated": stats.estimate_fha_flow,
                        "stderr": stats.stderr, "agree": point_ok})
    return {"name": "analytic vs simulation spot grid", "points": results,
            "status": "pass" if ok else "fail"}


def cmd_validate(args: argparse.Namespace) -> int:
    rng = np.random.default_rng(20240817)
    suites = [
        _suite_coefficients(rng),
        _suite_product_form(rng),
        _suite_sim_agreement(),
    ]
    overall = all(s["status"] == "pass" for s in suites)
    summary = {"status": "pass" if overall else "fail", "suites": suites}
    text = json.dumps(summary, indent=2, default=float)
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    if not overall:
        for suite in suites:
            if suite["status"] != "pass":
                log.error("suite failed: %s", suite["name"])
    return 0 if overall else 1


# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vrfplan", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_an = sub.add_parser("analyze", help="analytic blocking report for one config")
    p_an.add_argument("--config", required=True, help="JSON configuration file")
    p_an.add_argument("--gap", type=int, default=None, help="override threshold gap")
    p_an.add_argument("--out", default=None, help="append a CSV row to this file")
    p_an.set_defaults(func=cmd_analyze)

    p_si = sub.add_parser("simulate", help="run one simulation replication")
    p_si.add_argument("--config", required=True, help="JSON configuration file")
    p_si.add_argument("--events", type=int, default=1_000_000)
    p_si.add_argument("--seed", type=int, required=True)
    p_si.add_argument("--arrival", default="poisson", help="poisson or weibull:K")
    p_si.add_argument("--gap", type=int, default=None, help="override threshold gap")
    p_si.add_argument("--latency", type=float, default=0.0,
                      help="reconfiguration latency (time units)")
    p_si.add_argument("--out", default=None, help="append a CSV row to this file")
    p_si.set_defaults(func=cmd_simulate)

    p_sw = sub.add_parser("sweep", help="evaluate a grid of configurations")
    p_sw.add_argument("--plan", required=True, help="JSON sweep plan")
    p_sw.add_argument("--out", default=None, help="CSV output path (default stdout)")
    p_sw.add_argument("--events", type=int, default=None, help="override plan event count")
    p_sw.add_argument("--seed", type=int, default=None, help="override plan base seed")
    p_sw.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p_sw.set_defaults(func=cmd_sweep)

    p_va = sub.add_parser("validate", help="run the internal oracle suites")
    p_va.add_argument("--out", default=None, help="write the JSON summary here")
    p_va.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VrfError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
