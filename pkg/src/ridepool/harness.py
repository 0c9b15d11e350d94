"""Experiment harness: scenarios, the decision loop, baselines, and outputs.

A run is fully determined by (config, seed): demand, fleet placement, policy
sampling, and learning all draw from seed streams spawned off those values,
iteration orders are fixed, and every output file is written with stable
formatting, so repeated runs are byte-identical.
"""
from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import dispatch, fleet, matching, mireward, trips
from .demand import Batch, PricingParams, Request, batch_requests, load_requests, synth_hotspot_demand
from .dispatch import ACTION_DIM, RL_VARIANTS, TrainConfig
from .hexgrid import HexGrid, build_synthetic_grid, load_grid
from .network import StreetNetwork, load_network, make_grid_network
from .trips import DelayParams

log = logging.getLogger(__name__)

VARIANT_RANDOM = "Random"
VARIANT_NOD = "NOD"
VARIANTS = (VARIANT_RANDOM, VARIANT_NOD, *RL_VARIANTS)

SWEEP_AXES = {
    "PD": "pickup delay bound",
    "NV": "fleet size",
    "C": "vehicle capacity",
    "alpha": "intrinsic reward coefficient",
    "k": "mean-action neighbor count",
}

OUT_ROOT_ENV = "RIDEPOOL_OUT_ROOT"


class ConfigError(ValueError):
    """Bad run configuration."""


@dataclass
class ScenarioConfig:
    """World description: network, regions, fleet, demand, service promises."""

    net_rows: int = 10
    net_cols: int = 10
    edge_seconds: float = 90.0
    edge_meters: float = 500.0
    network_file: str | None = None
    grid_rows: int = 7
    grid_cols: int = 7
    grid_file: str | None = None
    region_diameter_km: float = 0.36
    vehicles: int = 20
    capacity: int = 4
    pickup_delay_s: float = 300.0
    detour_delay_s: float = 600.0
    epoch_s: float = 60.0
    epochs_per_episode: int = 60
    hotspot_regions: list[int] | None = None
    hotspot_rate: float = 2.0
    background_rate: float = 0.03
    requests_file: str | None = None
    price_base: float = 2.0
    price_per_km: float = 1.5
    price_per_min: float = 0.3
    value_alpha: float = 1.0
    value_beta: float = 0.0
    credit_at_match: bool = False
    drain_epoch_cap: int = 240

    def pricing(self) -> PricingParams:
        return PricingParams(self.price_base, self.price_per_km, self.price_per_min)

    def delay_params(self) -> DelayParams:
        return DelayParams(self.pickup_delay_s, self.detour_delay_s)


@dataclass
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    variant: str = "DQN"
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    out_dir: str = "out"
    compare_variants: list[str] = field(default_factory=lambda: ["Random", "NOD", "DQN"])
    log_events: str = "final"  # final | all | none

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        for v in self.compare_variants:
            if v not in VARIANTS:
                raise ConfigError(f"unknown compare variant {v!r}")
        if self.log_events not in ("final", "all", "none"):
            raise ConfigError("log_events must be final, all, or none")
        if not self.seeds:
            raise ConfigError("need at least one seed")


def _dataclass_from_dict(cls, data: dict, where: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")
    kwargs = dict(data)
    if cls is TrainConfig and "hidden" in kwargs:
        kwargs["hidden"] = tuple(kwargs["hidden"])
    return cls(**kwargs)


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    scenario = _dataclass_from_dict(ScenarioConfig, raw.pop("scenario", {}), "scenario")
    train = _dataclass_from_dict(TrainConfig, raw.pop("train", {}), "train")
    allowed = {"variant", "seeds", "out_dir", "compare_variants", "log_events"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown top-level keys {sorted(unknown)}")
    return RunConfig(scenario=scenario, train=train, **raw)


def resolve_out_dir(out_dir: str) -> Path:
    """Apply the output-root environment variable to relative paths."""
    p = Path(out_dir)
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def build_world(cfg: ScenarioConfig) -> tuple[StreetNetwork, HexGrid]:
    if cfg.network_file:
        net = load_network(cfg.network_file)
    else:
        net = make_grid_network(cfg.net_rows, cfg.net_cols, cfg.edge_seconds, cfg.edge_meters)
    if cfg.grid_file:
        grid = load_grid(cfg.grid_file, net)
    else:
        grid = build_synthetic_grid(cfg.grid_rows, cfg.grid_cols, net, cfg.region_diameter_km)
    return net, grid


def demand_rates(cfg: ScenarioConfig, net: StreetNetwork, grid: HexGrid) -> dict[int, float]:
    """Per-region Poisson rates: flat background plus hotspot regions."""
    rates = {r: cfg.background_rate for r in grid.regions}
    hotspots = cfg.hotspot_regions
    if hotspots is None:
        # Deterministic default: the regions holding a low-index and a
        # high-index node, giving two well-separated demand centers.
        lo = net.nodes[len(net.nodes) // 10]
        hi = net.nodes[(9 * len(net.nodes)) // 10]
        hotspots = sorted({grid.region_of(lo), grid.region_of(hi)})
    for r in hotspots:
        if r not in grid.regions:
            raise ConfigError(f"hotspot region {r} not in grid")
        rates[r] = rates.get(r, 0.0) + cfg.hotspot_rate
    return rates


class DispatchEnv:
    """Epoch-stepped environment shared by learners and baselines.

    Batch t collects arrivals in [t*epoch, (t+1)*epoch) and is decided at the
    window's end.  step() dispatches, matches, advances one epoch, and rotates
    in the next batch; after the last batch the fleet drains so committed
    trips finish inside the episode.
    """

    def __init__(self, run_cfg: RunConfig, run_seed: int, mi_enabled: bool):
        self.cfg = run_cfg.scenario
        self.train_cfg = run_cfg.train
        self.run_seed = int(run_seed)
        self.net, self.grid = build_world(self.cfg)
        self.rates = demand_rates(self.cfg, self.net, self.grid)
        self.params = self.cfg.delay_params()
        self.pricing = self.cfg.pricing()
        self.keep_all_events = run_cfg.log_events == "all"
        self.mi_enabled = mi_enabled
        self.posterior = None
        if mi_enabled:
            seed = int(
                np.random.SeedSequence([self.run_seed, 0x1417]).generate_state(1)[0]
            )
            self.posterior = mireward.MLPPosterior(len(self.grid.regions), seed=seed)
        self.epochs = self.cfg.epochs_per_episode
        self._fixed_requests = None
        if self.cfg.requests_file:
            self._fixed_requests = load_requests(
                self.cfg.requests_file, self.net, self.pricing
            )
        self.state: fleet.SimState | None = None
        self.episode = -1
        self.all_events: list[dict] = []
        self.metrics_rows: list[dict] = []
        self.mi_rows: list[dict] = []
        self._mi_samples: list[tuple] = []
        self._mi_bound = 0.0
        self._last_obs: dict[int, fleet.Observation] = {}
        self._t = 0

    # -- episode control -------------------------------------------------

    def reset(self, episode: int) -> dict[int, fleet.Observation]:
        self.episode = int(episode)
        if self.keep_all_events and self.state is not None:
            self.all_events.extend(self.state.events)
        demand_seed = int(
            np.random.SeedSequence([self.run_seed, self.episode, 0xDE]).generate_state(1)[0]
        )
        fleet_seed = int(
            np.random.SeedSequence([self.run_seed, self.episode, 0xF1EE]).generate_state(1)[0]
        )
        if self._fixed_requests is not None:
            requests = self._fixed_requests
        else:
            requests = synth_hotspot_demand(
                self.net, self.grid, self.epochs, self.rates,
                demand_seed, self.cfg.epoch_s, self.pricing,
            )
        self.batches = batch_requests(requests, self.cfg.epoch_s, self.epochs)
        vehicles = fleet.init_fleet(
            self.net, self.cfg.vehicles, self.cfg.capacity, fleet_seed
        )
        self.state = fleet.SimState(
            self.net, self.grid, self.params, vehicles,
            credit_at_match=self.cfg.credit_at_match,
        )
        # Decisions happen at window ends: the clock starts one epoch in,
        # when batch 0 is complete.  Nothing can move before that.
        self.state.clock_s = self.cfg.epoch_s
        self.metrics_rows = []
        self.mi_rows = []
        self._mi_samples = []
        self._mi_bound = 0.0
        self._t = 0
        fleet.set_active_batch(self.state, self.batches[0])
        return self._observe_all()

    def _observe_all(self) -> dict[int, fleet.Observation]:
        obs = {v.id: fleet.observe(self.state, v.id) for v in self.state.vehicles}
        self._last_obs = obs
        return obs

    def positions(self) -> dict[int, int]:
        return {v.id: v.position_node() for v in self.state.vehicles}

    def episode_metrics(self) -> dict:
        return {
            "revenue": self.state.revenue,
            "served": self.state.served,
            "matched": self.state.matched,
            "dropped": self.state.dropped,
            "assignments": self.state.assignments,
        }

    def episode_mi_bound(self) -> float:
        return self._mi_bound if self.mi_enabled else 0.0

    # -- one decision epoch ----------------------------------------------

    def step(self, actions: dict[int, int] | None):
        """Decide the active batch and advance one epoch.

        ``actions`` maps vehicle id to an index into its action set; None
        selects the no-dispatch nearest-first baseline behavior.
        """
        state = self.state
        batch = state.active_batch
        rewards = {v.id: 0.0 for v in state.vehicles}
        if actions is None:
            matched_ids = self._decide_nearest(batch, rewards)
        else:
            matched_ids = self._decide_dispatch(batch, actions, rewards)
        unmatched = [r for r in batch.requests if r.id not in matched_ids]
        fleet.drop_unmatched(state, unmatched)
        if state.seen != state.matched + state.dropped:
            raise fleet.FleetError(
                f"request conservation broken: seen {state.seen} != "
                f"matched {state.matched} + dropped {state.dropped}"
            )

        fleet.advance_epoch(state, self.cfg.epoch_s)
        self.metrics_rows.append(state.metrics_row())

        mi_term = 0.0
        if self.mi_enabled:
            mi_term = self._mi_step(batch)
            for vid in rewards:
                rewards[vid] = mireward.total_reward(
                    rewards[vid], mi_term, self.train_cfg.mi_coef
                )

        self._t += 1
        done = self._t >= len(self.batches)
        if done:
            self._drain()
            state.active_batch = None
        else:
            fleet.set_active_batch(state, self.batches[self._t])
        obs = self._observe_all()
        info = {"mi_term": mi_term, "matched": len(matched_ids)}
        return obs, rewards, done, info

    def _decide_dispatch(self, batch: Batch, actions: dict[int, int], rewards) -> set[int]:
        state = self.state
        trips_by_vehicle: dict[int, list[trips.Trip]] = {}
        choices: dict[int, list[matching.TripChoice]] = {}
        for v in state.vehicles:
            obs = self._last_obs[v.id]
            a = actions[v.id]
            if not 0 <= a < len(obs.action_regions):
                raise dispatch.DispatchError(
                    f"vehicle {v.id}: action {a} outside its action set"
                )
            region = obs.action_regions[a]
            cand = trips.feasible_trips(
                self.net, self.grid, v, region, batch.requests, self.params,
                now_s=state.clock_s,
                alpha=self.cfg.value_alpha, beta=self.cfg.value_beta,
            )
            trips_by_vehicle[v.id] = cand
            choices[v.id] = [
                matching.TripChoice(t.request_ids, t.revenue) for t in cand
            ]
        instance = matching.MatchingInstance.from_dict(choices)
        assignment = matching.solve(instance)
        matched: set[int] = set()
        for v in state.vehicles:
            trip = trips_by_vehicle[v.id][assignment.trip_index(v.id)]
            fleet.apply_assignment(state, trip)
            if trip.requests:
                rewards[v.id] += sum(r.price for r in trip.requests)
                matched.update(trip.request_ids)
        return matched

    def _decide_nearest(self, batch: Batch, rewards) -> set[int]:
        """Greedy nearest-first matching, no regions, no repositioning.

        Repeatedly commit the feasible (vehicle, request) pair with the
        smallest pickup time (ties: vehicle id, then request id), one request
        per insertion, until nothing fits.
        """
        state = self.state
        remaining: dict[int, Request] = {r.id: r for r in batch.requests}
        matched: set[int] = set()
        while remaining:
            best = None
            for v in state.vehicles:
                if v.load >= v.capacity:
                    continue
                start, offset = v.plan_origin()
                for rid in sorted(remaining):
                    req = remaining[rid]
                    pickup_s = offset + self.net.shortest_travel_time(start, req.origin)
                    key = (pickup_s, v.id, rid)
                    if best is not None and key >= best[0]:
                        continue
                    plan = trips.evaluate_insertion(
                        self.net, self.params, state.clock_s, start, offset,
                        v.capacity, v.onboard, v.pending,
                        v.plan_stop_sequence(), (req,),
                    )
                    if plan.feasible:
                        best = (key, v.id, req, plan)
            if best is None:
                break
            _, vid, req, plan = best
            vehicle = state.vehicle(vid)
            trip = trips.Trip(
                vehicle=vid,
                region=self.grid.region_of(req.origin),
                requests=(req,),
                stops=plan.stops,
                revenue=trips.trip_value((req,), self.cfg.value_alpha, self.cfg.value_beta),
                worst_pickup_delay_s=plan.worst_pickup_delay_s,
                worst_detour_delay_s=plan.worst_detour_delay_s,
            )
            fleet.apply_assignment(state, trip)
            rewards[vid] += req.price
            matched.add(req.id)
            del remaining[req.id]
        return matched

    def _mi_step(self, batch: Batch) -> float:
        grid = self.grid
        vcounts = np.zeros(len(grid.regions))
        region_index = {r: i for i, r in enumerate(grid.regions)}
        for v in self.state.vehicles:
            vcounts[region_index[grid.region_of(v.position_node())]] += 1
        rcounts = np.zeros(len(grid.regions))
        for req in batch.requests:
            rcounts[region_index[grid.region_of(req.origin)]] += 1
        p_v = mireward.normalize_counts(vcounts)
        p_e = mireward.normalize_counts(rcounts)
        self._mi_samples.append((p_e, p_v))
        X = np.stack([pe for pe, _ in self._mi_samples])
        P = np.stack([pv for _, pv in self._mi_samples])
        self.posterior.step(X, P, self.train_cfg.mi_lr)
        est = mireward.mi_lower_bound(self._mi_samples, self.posterior)
        self._mi_bound = est.bound
        self.mi_rows.append(
            {
                "epoch": self._t,
                "h_marginal": est.h_marginal,
                "mean_ce": est.mean_ce,
                "bound": est.bound,
            }
        )
        return est.bound

    def _drain(self):
        """Advance without new demand until every vehicle is idle."""
        state = self.state
        steps = 0
        while not state.all_idle() and steps < self.cfg.drain_epoch_cap:
            fleet.advance_epoch(state, self.cfg.epoch_s)
            self.metrics_rows.append(state.metrics_row())
            steps += 1
        if not state.all_idle():
            state.violations.append(
                f"drain cap {self.cfg.drain_epoch_cap} epochs hit with work pending"
            )


# -- run orchestration -----------------------------------------------------


@dataclass
class SeedResult:
    seed: int
    eval_revenue: float
    eval_served: float
    final_episode_revenue: float
    episode_rows: list[dict]
    revenue_curve: list[float]
    mi_series: list[float]
    violations: list[str]


@dataclass
class RunReport:
    variant: str
    results: list[SeedResult]

    @property
    def seeds(self) -> list[int]:
        return [r.seed for r in self.results]

    @property
    def revenue_by_seed(self) -> list[float]:
        return [r.eval_revenue for r in self.results]

    @property
    def mean_revenue(self) -> float:
        return float(np.mean(self.revenue_by_seed))

    @property
    def mean_served(self) -> float:
        return float(np.mean([r.eval_served for r in self.results]))

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "mean_revenue": self.mean_revenue,
            "mean_served": self.mean_served,
            "per_seed": [
                {
                    "seed": r.seed,
                    "eval_revenue": r.eval_revenue,
                    "eval_served": r.eval_served,
                    "final_episode_revenue": r.final_episode_revenue,
                }
                for r in self.results
            ],
        }


def improvement(x: float, y: float) -> float:
    """Relative improvement of x over y."""
    if y == 0:
        raise ZeroDivisionError("baseline value is zero")
    return (x - y) / y


def _run_baseline(env: DispatchEnv, variant: str, episodes: int, seed: int) -> list[dict]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xBA5E]))
    rows = []
    for episode in range(episodes):
        obs = env.reset(episode)
        done = False
        while not done:
            if variant == VARIANT_RANDOM:
                actions = {}
                for vid in sorted(obs):
                    n = len(obs[vid].action_regions)
                    actions[vid] = int(rng.integers(n))
                obs, _, done, _ = env.step(actions)
            else:
                obs, _, done, _ = env.step(None)
        m = env.episode_metrics()
        rows.append(
            {
                "episode": episode,
                "revenue": m["revenue"],
                "served": m["served"],
                "mi_estimate": 0.0,
                "loss": 0.0,
            }
        )
    return rows


def _write_csv(path: Path, rows: list[dict], header: list[str]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([row[k] for k in header])


def _write_events(path: Path, events: list[dict]):
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(ev, sort_keys=True) + "\n")


def save_checkpoint(q: dispatch.QFunction, episode: int, path: Path):
    if q.mode != "mlp":
        raise ConfigError("only mlp Q-functions are checkpointed")
    payload = {
        "mode": q.mode,
        "obs_dim": q.obs_dim,
        "hidden": list(q.hidden),
        "action_dim": ACTION_DIM,
        "episode": episode,
        "weights": [W.tolist() for W in q.net.W],
        "biases": [b.tolist() for b in q.net.b],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_checkpoint(path: Path) -> tuple[dispatch.QFunction, int]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    q = dispatch.QFunction(
        "mlp", obs_dim=int(payload["obs_dim"]), hidden=tuple(payload["hidden"])
    )
    q.net.W = [np.array(W, dtype=np.float64) for W in payload["weights"]]
    q.net.b = [np.array(b, dtype=np.float64) for b in payload["biases"]]
    return q, int(payload["episode"])


def run_variant(
    run_cfg: RunConfig,
    variant: str | None = None,
    out_dir: Path | None = None,
    write_outputs: bool = True,
) -> RunReport:
    """Train or evaluate one variant over the configured seeds."""
    variant = variant or run_cfg.variant
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    results = []
    base = out_dir if out_dir is not None else resolve_out_dir(run_cfg.out_dir)
    vdir = Path(base) / variant.replace("+", "_")
    for seed in run_cfg.seeds:
        mi_enabled = variant.endswith("+MI")
        env = DispatchEnv(run_cfg, run_seed=seed, mi_enabled=mi_enabled)
        q = None
        if variant in RL_VARIANTS:
            q, rows = dispatch.train(env, run_cfg.train, variant, seed)
            window = rows[-run_cfg.train.eval_episodes:]
        else:
            rows = _run_baseline(env, variant, run_cfg.train.eval_episodes, seed)
            window = rows
        result = SeedResult(
            seed=seed,
            eval_revenue=float(np.mean([r["revenue"] for r in window])),
            eval_served=float(np.mean([r["served"] for r in window])),
            final_episode_revenue=env.state.revenue,
            episode_rows=rows,
            revenue_curve=[
                row["revenue"] for row in env.metrics_rows[: env.epochs]
            ],
            mi_series=[r["mi_estimate"] for r in rows],
            violations=list(env.state.violations),
        )
        results.append(result)
        if write_outputs:
            sdir = vdir / f"seed{seed}"
            sdir.mkdir(parents=True, exist_ok=True)
            _write_csv(
                sdir / "training_log.csv",
                rows,
                ["episode", "revenue", "served", "mi_estimate", "loss"],
            )
            _write_csv(
                sdir / "metrics.csv",
                env.metrics_rows,
                ["epoch", "revenue", "served", "active", "dropped"],
            )
            if run_cfg.log_events != "none":
                events = (
                    env.all_events + env.state.events
                    if run_cfg.log_events == "all"
                    else env.state.events
                )
                _write_events(sdir / "events.jsonl", events)
            if mi_enabled:
                _write_csv(
                    sdir / "mi_log.csv",
                    env.mi_rows,
                    ["epoch", "h_marginal", "mean_ce", "bound"],
                )
            if q is not None:
                save_checkpoint(q, run_cfg.train.episodes, sdir / "checkpoint.json")
        log.info("%s seed %d: eval revenue %.2f", variant, seed, result.eval_revenue)
    report = RunReport(variant=variant, results=results)
    if write_outputs:
        vdir.mkdir(parents=True, exist_ok=True)
        with open(vdir / "report.json", "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
    return report


def emit_plot_data(reports: dict[str, RunReport], out_dir: Path):
    """Write per-variant curve files for plots.

    revenue_curve_<variant>.csv: mean cumulative revenue per decision epoch of
    the final episode (same length for every variant).  mi_curve_<variant>.csv:
    mean intrinsic bound per episode.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for variant, report in sorted(reports.items()):
        tag = variant.replace("+", "_")
        curves = [r.revenue_curve for r in report.results]
        rows = []
        if curves:
            length = min(len(c) for c in curves)
            for t in range(length):
                rows.append(
                    {
                        "epoch": t,
                        "cum_revenue": float(np.mean([c[t] for c in curves])),
                    }
                )
        _write_csv(out_dir / f"revenue_curve_{tag}.csv", rows, ["epoch", "cum_revenue"])
        mi = [r.mi_series for r in report.results]
        rows = []
        if mi:
            length = min(len(s) for s in mi)
            for e in range(length):
                rows.append(
                    {"episode": e, "mi_bound": float(np.mean([s[e] for s in mi]))}
                )
        _write_csv(out_dir / f"mi_curve_{tag}.csv", rows, ["episode", "mi_bound"])


def _apply_axis(run_cfg: RunConfig, axis: str, value: float) -> RunConfig:
    scenario = run_cfg.scenario
    train = run_cfg.train
    if axis == "PD":
        scenario = replace(scenario, pickup_delay_s=float(value))
    elif axis == "NV":
        scenario = replace(scenario, vehicles=int(value))
    elif axis == "C":
        scenario = replace(scenario, capacity=int(value))
    elif axis == "alpha":
        train = replace(train, mi_coef=float(value))
    elif axis == "k":
        train = replace(train, neighbor_k=int(value))
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    return replace(run_cfg, scenario=scenario, train=train)


def ablation_sweep(
    run_cfg: RunConfig,
    axis: str,
    values: list[float],
    out_dir: Path | None = None,
    write_outputs: bool = True,
) -> list[dict]:
    """Run the comparison variants at each axis value; one wide row per value.

    Row columns: the axis value, each variant's mean revenue, and the relative
    improvement for every ordered variant pair.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    base = out_dir if out_dir is not None else resolve_out_dir(run_cfg.out_dir)
    rows = []
    variants = run_cfg.compare_variants
    for value in values:
        cfg = _apply_axis(run_cfg, axis, value)
        row: dict = {"axis": axis, "value": value}
        means: dict[str, float] = {}
        for variant in variants:
            vdir = Path(base) / f"sweep_{axis}_{value:g}" if write_outputs else None
            report = run_variant(cfg, variant, out_dir=vdir, write_outputs=write_outputs)
            means[variant] = report.mean_revenue
            row[f"revenue_{variant}"] = report.mean_revenue
        for i, hi in enumerate(variants):
            for lo in variants[:i]:
                row[f"impr_{hi}_over_{lo}"] = improvement(means[hi], means[lo])
        rows.append(row)
    if write_outputs and rows:
        base = Path(base)
        base.mkdir(parents=True, exist_ok=True)
        _write_csv(base / f"sweep_{axis}.csv", rows, list(rows[0].keys()))
    return rows
