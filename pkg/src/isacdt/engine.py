"""Deterministic scenario execution for the four experiment presets.

Randomness discipline: every trial derives its own 64-bit stream seed from
the root seed through a splitmix64-style finalizer (`stream_seed`), so trial
order and execution mode (serial or process-parallel) never change results.
Aggregation uses math.fsum and merges trial results in trial-index order.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

import numpy as np

from .comm import (UlaCodebook, all_beam_gains, channel_from_geometry,
                   spectral_efficiency, track_sensing_assisted)
from .errors import ConfigError, UndefinedMetricError
from .fusion import (OccupancyGrid, fuse_average, fuse_grids, fuse_weighted,
                     grid_to_pgm, grid_update_from_scan, map_accuracy)
from .gossip import (ContactPolicy, PolicyKind, build_contact_graph,
                     discovery_fraction, gossip_round, initial_states,
                     rounds_to_threshold)
from .signal import (Detection, Measurement, OfdmConfig, PointTarget,
                     batch_single_target_echo_ranges, estimate_delay_doppler,
                     measurement_from_detection, synthesize_echo)
from .twin import (DataRepository, EnvironmentModel, LocalTwin,
                   RepositoryEvent, TopologyGraph, TrackState,
                   build_local_twin, ingest)
from .world import (FloorPlan, MachineKind, MachineNode, Rect, Trajectory,
                    Vec2, factory_default_plan, ground_truth_observables,
                    raycast)

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """splitmix64 finalizer; the documented seed-mixing primitive."""
    z = x & _MASK64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


def stream_seed(root: int, *indices: int) -> int:
    """Derive a per-trial stream seed: fold each index with XOR + splitmix64."""
    h = root & _MASK64
    for i in indices:
        h = splitmix64(h ^ (i & _MASK64))
    return h


class ExperimentKind(Enum):
    COOP_LOCALIZATION = "COOP_LOCALIZATION"
    SLAM_RECON = "SLAM_RECON"
    BEAM_TRACKING = "BEAM_TRACKING"
    NEIGHBOR_DISCOVERY = "NEIGHBOR_DISCOVERY"


@dataclass
class MetricsTable:
    columns: dict[str, list] = field(default_factory=dict)
    metadata: dict[str, str] = field(default_factory=dict)

    def add_row(self, **values) -> None:
        if not self.columns:
            self.columns = {k: [] for k in values}
        if set(values) != set(self.columns):
            raise ValueError("row keys do not match table columns")
        for k in self.columns:
            self.columns[k].append(values[k])

    def column(self, name: str) -> list:
        return self.columns[name]

    def to_csv(self) -> str:
        lines = [f"# {k}={v}" for k, v in sorted(self.metadata.items())]
        names = list(self.columns)
        lines.append(",".join(_csv_quote(n) for n in names))
        n_rows = len(self.columns[names[0]]) if names else 0
        for i in range(n_rows):
            lines.append(",".join(_csv_format(self.columns[k][i]) for k in names))
        return "\n".join(lines) + "\n"


def _csv_format(v) -> str:
    if isinstance(v, str):
        return _csv_quote(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _csv_quote(s: str) -> str:
    if any(c in s for c in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


@dataclass
class ScenarioConfig:
    name: str
    experiment: ExperimentKind
    seed: int
    trials: int
    plan: FloorPlan
    nodes: list[MachineNode]
    trajectories: dict[str, Trajectory]
    ofdm: OfdmConfig
    snr_db: float
    detection_threshold: float
    twin_regions: int
    rebuild_interval_s: float
    ingest_delay_s: float
    params: dict[str, Any]
    raw: dict[str, Any] = field(default_factory=dict)

    def scenario_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


_WORLD_PRESETS = {"factory_default", "open_hall"}


def _plan_from_dict(d: dict) -> FloorPlan:
    preset = d.get("preset", "factory_default")
    if preset == "factory_default":
        return factory_default_plan()
    if preset == "open_hall":
        return FloorPlan(bounds=Rect(0.0, 0.0, 60.0, 30.0))
    raise ConfigError("world.preset", f"unknown preset {preset!r}; "
                      f"choose one of {sorted(_WORLD_PRESETS)}")


class ConfigValidationError(ConfigError):
    """Aggregate of every ConfigError found while validating a config."""

    def __init__(self, errors: list[ConfigError]):
        self.errors = errors
        self.field_path = errors[0].field_path
        Exception.__init__(self, "\n".join(str(e) for e in errors))


def config_from_dict(d: dict[str, Any]) -> ScenarioConfig:
    """Validate a plain config dict (parsed TOML or embedded preset).

    Collects every violated invariant and raises one ConfigValidationError
    naming each offending field path.
    """
    errors: list[ConfigError] = []

    def need(path: str, container: dict, key: str, typ=None):
        if key not in container:
            raise ConfigError(path, "missing required field")
        v = container[key]
        if typ is not None and not isinstance(v, typ):
            raise ConfigError(path, f"expected {typ.__name__}, got {type(v).__name__}")
        return v

    def check(fn):
        try:
            return fn()
        except ConfigError as exc:
            errors.append(exc)
            return None

    name = str(d.get("name", "unnamed"))

    def _experiment():
        exp_name = need("experiment", d, "experiment", str)
        try:
            return ExperimentKind(exp_name)
        except ValueError:
            raise ConfigError("experiment", f"unknown experiment {exp_name!r}; "
                              f"valid: {[e.value for e in ExperimentKind]}") from None
    experiment = check(_experiment)

    seed = int(d.get("seed", 1))
    trials = int(d.get("trials", 1))
    if trials < 1:
        errors.append(ConfigError("trials", f"must be >= 1, got {trials}"))

    world = d.get("world", {})
    plan = check(lambda: _plan_from_dict(world)) or factory_default_plan()

    nodes: list[MachineNode] = []
    for i, nd in enumerate(world.get("nodes", [])):
        path = f"world.nodes[{i}]"

        def _node(nd=nd, path=path):
            try:
                node = MachineNode(
                    id=need(f"{path}.id", nd, "id", str),
                    kind=MachineKind(nd.get("kind", "AGV")),
                    pose=Vec2(float(need(f"{path}.x", nd, "x")),
                              float(need(f"{path}.y", nd, "y"))),
                    heading=float(nd.get("heading", 0.0)),
                    velocity=Vec2(float(nd.get("vx", 0.0)), float(nd.get("vy", 0.0))),
                    antenna_count=int(nd.get("antenna_count", 1)),
                    isac_capable=bool(nd.get("isac_capable", True)))
            except ConfigError:
                raise
            except Exception as exc:
                raise ConfigError(path, str(exc)) from None
            if not plan.bounds.contains(node.pose):
                raise ConfigError(f"{path}.x", "node pose outside floor bounds")
            return node
        node = check(_node)
        if node is not None:
            nodes.append(node)

    trajectories: dict[str, Trajectory] = {}
    for i, td in enumerate(world.get("trajectories", [])):
        path = f"world.trajectories[{i}]"

        def _traj(td=td, path=path):
            nid = need(f"{path}.node", td, "node", str)
            wps = []
            for j, wp in enumerate(need(f"{path}.waypoints", td, "waypoints", list)):
                p = Vec2(float(wp[1]), float(wp[2]))
                if not plan.bounds.contains(p):
                    raise ConfigError(f"{path}.waypoints[{j}]",
                                      f"waypoint ({p.x}, {p.y}) outside floor bounds")
                wps.append((float(wp[0]), p))
            return nid, Trajectory(waypoints=tuple(wps))
        got = check(_traj)
        if got is not None:
            trajectories[got[0]] = got[1]

    sig = d.get("signal", {})

    def _ofdm():
        try:
            return OfdmConfig(
                carrier_freq=float(sig.get("carrier_freq_hz", 28e9)),
                bandwidth=float(sig.get("bandwidth_hz", 1.23e9)),
                num_subcarriers=int(sig.get("num_subcarriers", 1024)),
                num_symbols=int(sig.get("num_symbols", 64)))
        except Exception as exc:
            raise ConfigError("signal", str(exc)) from None
    ofdm = check(_ofdm) or OfdmConfig()
    snr_db = float(sig.get("snr_db", 10.0))
    detection_threshold = float(sig.get("detection_threshold", 20.0))

    tw = d.get("twin", {})
    twin_regions = int(tw.get("regions", 2))
    if twin_regions < 1:
        errors.append(ConfigError("twin.regions", "must be >= 1"))

    cfg = ScenarioConfig(
        name=name, experiment=experiment or ExperimentKind.COOP_LOCALIZATION,
        seed=seed, trials=max(trials, 1), plan=plan, nodes=nodes,
        trajectories=trajectories, ofdm=ofdm, snr_db=snr_db,
        detection_threshold=detection_threshold, twin_regions=twin_regions,
        rebuild_interval_s=float(tw.get("rebuild_interval_s", 0.1)),
        ingest_delay_s=float(tw.get("ingest_delay_s", 0.01)),
        params=dict(d.get("params", {})), raw=d)
    if experiment is not None:
        check(lambda: _validate_experiment(cfg))
    if errors:
        raise ConfigValidationError(errors)
    return cfg


def _validate_experiment(cfg: ScenarioConfig) -> None:
    p = cfg.params
    if cfg.experiment is ExperimentKind.COOP_LOCALIZATION:
        bs = p.get("bs_positions", _DEFAULT_BS_RING)
        if len(bs) < 1:
            raise ConfigError("params.bs_positions", "need at least one BS")
        for k in p.get("k_values", [1, 2, 4, 8]):
            if k > len(bs):
                raise ConfigError("params.k_values",
                                  f"K={k} exceeds {len(bs)} configured BSs")
        tx, ty = p.get("target", _DEFAULT_TARGET)
        max_r = max(math.hypot(x - tx, y - ty) for x, y in bs)
        if max_r >= cfg.ofdm.unambiguous_range:
            raise ConfigError("signal.num_subcarriers",
                              f"unambiguous range {cfg.ofdm.unambiguous_range:.1f} m "
                              f"below max BS-target range {max_r:.1f} m")
    elif cfg.experiment is ExperimentKind.SLAM_RECON:
        agvs = p.get("agv_trajectories", _DEFAULT_AGV_LOOPS)
        if len(agvs) < 1:
            raise ConfigError("params.agv_trajectories", "need at least one AGV")
        for i, wps in enumerate(agvs):
            for j, (t, x, y) in enumerate(wps):
                if not cfg.plan.bounds.contains(Vec2(x, y)):
                    raise ConfigError(
                        f"params.agv_trajectories[{i}].waypoints[{j}]",
                        f"waypoint ({x}, {y}) outside floor bounds")
    elif cfg.experiment is ExperimentKind.BEAM_TRACKING:
        for n in p.get("n_values", [8, 16, 32, 64]):
            if n < 1:
                raise ConfigError("params.n_values", "antenna counts must be >= 1")
    elif cfg.experiment is ExperimentKind.NEIGHBOR_DISCOVERY:
        if int(p.get("num_nodes", 30)) < 2:
            raise ConfigError("params.num_nodes", "need at least 2 nodes")


def _pmap(fn, args: list, jobs: int) -> list:
    """Order-preserving map; process pool when jobs > 1."""
    if jobs <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        chunk = max(1, len(args) // (jobs * 4))
        return list(ex.map(fn, args, chunksize=chunk))


# ---------------------------------------------------------------------------
# Experiment 1: cooperative target localization (Fig. 4a analogue)
# ---------------------------------------------------------------------------

_DEFAULT_BS_RING = [(18.0, 15.0), (42.0, 15.0), (30.0, 27.0), (30.0, 3.0),
                    (21.0, 24.0), (39.0, 24.0), (21.0, 6.0), (39.0, 6.0)]
_DEFAULT_TARGET = (30.0, 15.0)


def _coop_trial(args) -> Optional[tuple]:
    (seed, bs_xy, snrs, target_xy, ofdm_tuple, threshold, antenna_count) = args
    cfg = OfdmConfig(*ofdm_tuple)
    rng = np.random.default_rng(seed)
    target = MachineNode(id="target", kind=MachineKind.AGV,
                         pose=Vec2(*target_xy), heading=0.0)
    sensors = [MachineNode(id="bs", kind=MachineKind.BS, pose=Vec2(bx, by),
                           heading=0.0, antenna_count=antenna_count)
               for bx, by in bs_xy]
    observed = [ground_truth_observables(s, target) for s in sensors]
    if cfg.num_symbols == 1:
        dets = batch_single_target_echo_ranges(
            cfg, np.array([o[0] for o in observed]), np.array(snrs), 1.0, rng,
            threshold)
    else:
        dets = []
        for (true_range, _, _), snr in zip(observed, snrs):
            found = estimate_delay_doppler(
                synthesize_echo(cfg, [PointTarget(range=true_range, amplitude=snr)],
                                1.0, rng), threshold)
            dets.append(found[0] if found else None)
    measurements: list[Measurement] = []
    sq_errors: list[float] = []
    for sensor, (_, azimuth, _), det in zip(sensors, observed, dets):
        if det is None:
            return None
        beamwidth = 2.0 / antenna_count
        sigma_b = beamwidth / math.sqrt(2.0 * det.snr_estimate)
        bearing = azimuth + sigma_b * rng.standard_normal()
        meas = measurement_from_detection(det, sensor, bearing, cfg)
        measurements.append(meas)
        sq_errors.append((meas.position - target.pose).dot(meas.position - target.pose))
    pa = fuse_average(measurements)
    pw = fuse_weighted(measurements)
    err_avg = (pa - target.pose).dot(pa - target.pose)
    err_w = (pw - target.pose).dot(pw - target.pose)
    return (tuple(sq_errors), err_avg, err_w)


def exp_coop_localization(cfg: ScenarioConfig, jobs: int = 1) -> MetricsTable:
    p = cfg.params
    bs_all = [tuple(map(float, xy)) for xy in p.get("bs_positions", _DEFAULT_BS_RING)]
    target = tuple(map(float, p.get("target", _DEFAULT_TARGET)))
    k_values = [int(k) for k in p.get("k_values", [1, 2, 4, 8])]
    snr_values = [float(s) for s in p.get("snr_db_values", [cfg.snr_db])]
    offsets = [float(o) for o in p.get("snr_offsets_db", [])]
    ofdm_tuple = (cfg.ofdm.carrier_freq, cfg.ofdm.bandwidth,
                  cfg.ofdm.num_subcarriers, cfg.ofdm.num_symbols)
    antennas = int(p.get("bs_antenna_count", 16))

    table = MetricsTable(metadata={"scenario": cfg.scenario_hash(),
                                   "seed": str(cfg.seed), "experiment": cfg.name})
    for ci, (k, snr_db) in enumerate((k, s) for k in k_values for s in snr_values):
        snrs = []
        for i in range(k):
            off = offsets[i % len(offsets)] if offsets else 0.0
            snrs.append(10.0 ** ((snr_db + off) / 10.0))
        args = [(stream_seed(cfg.seed, ci, t), tuple(bs_all[:k]), tuple(snrs),
                 target, ofdm_tuple, cfg.detection_threshold, antennas)
                for t in range(cfg.trials)]
        results = _pmap(_coop_trial, args, jobs)
        ok = [r for r in results if r is not None]
        failed = len(results) - len(ok)
        if not ok:
            table.add_row(K=k, snr_db=snr_db, rmse_single=math.nan,
                          rmse_avg=math.nan, rmse_weighted=math.nan,
                          failed_trials=failed)
            continue
        per_bs_rmse = [math.sqrt(math.fsum(r[0][i] for r in ok) / len(ok))
                       for i in range(k)]
        table.add_row(
            K=k, snr_db=snr_db,
            rmse_single=min(per_bs_rmse),
            rmse_avg=math.sqrt(math.fsum(r[1] for r in ok) / len(ok)),
            rmse_weighted=math.sqrt(math.fsum(r[2] for r in ok) / len(ok)),
            failed_trials=failed)
    return table


# ---------------------------------------------------------------------------
# Experiment 2: multi-AGV environment reconstruction (Figs. 4b-4d analogue)
# ---------------------------------------------------------------------------

# outer perimeter loop and central corridor shuttle of the factory hall
_DEFAULT_AGV_LOOPS = [
    [(0.0, 4.0, 3.0), (35.0, 56.0, 3.0), (51.0, 56.0, 27.0), (86.0, 4.0, 27.0),
     (102.0, 4.0, 3.0)],
    [(0.0, 4.0, 15.0), (35.0, 56.0, 15.0), (70.0, 4.0, 15.0)],
]


def _measured_scan(plan: FloorPlan, pos: Vec2, num_rays: int, max_range: float,
                   cfg: OfdmConfig, snr: float, noise_power: float,
                   rng: np.random.Generator,
                   threshold: float) -> list[tuple[float, Optional[float]]]:
    bearings = [2.0 * math.pi * i / num_rays for i in range(num_rays)]
    hits = [raycast(plan, pos, b, max_range) for b in bearings]
    entries: list[tuple[float, Optional[float]]] = [
        (b, None) for b, h in zip(bearings, hits) if h is None]
    hit_pairs = [(b, h) for b, h in zip(bearings, hits) if h is not None]
    if not hit_pairs:
        return entries
    if cfg.num_symbols == 1:
        dets = batch_single_target_echo_ranges(
            cfg, np.array([h for _, h in hit_pairs]),
            np.full(len(hit_pairs), snr), noise_power, rng, threshold)
    else:
        dets = []
        for _, h in hit_pairs:
            found = estimate_delay_doppler(
                synthesize_echo(cfg, [PointTarget(range=h, amplitude=snr)],
                                noise_power, rng), threshold)
            dets.append(found[0] if found else None)
    for (b, _), det in zip(hit_pairs, dets):
        # a missed detection contributes no evidence at all for that ray
        if det is not None:
            entries.append((b, det.range_estimate))
    return entries


def _slam_seed(args) -> tuple:
    (seed, plan_key, agv_wps, ofdm_tuple, snr, noise_power, threshold,
     num_rays, max_range, frame_dt, cell_size, want_grids) = args
    plan = factory_default_plan() if plan_key == "factory_default" else \
        FloorPlan(bounds=Rect(0.0, 0.0, 60.0, 30.0))
    cfg = OfdmConfig(*ofdm_tuple)
    rng = np.random.default_rng(seed)
    # empty waypoint lists are dormant AGVs that never scan
    trajs = [Trajectory(tuple((t, Vec2(x, y)) for t, x, y in wps))
             for wps in agv_wps if wps]
    b = plan.bounds
    grids = {}
    for key in ("active0", "passive0", "active1", "passive1"):
        grids[key] = OccupancyGrid.for_bounds(b.xmin, b.ymin, b.xmax, b.ymax,
                                              cell_size)
    t_end = max((tr.t_end for tr in trajs), default=-1.0)
    t = 0.0
    while t <= t_end + 1e-9:
        poses = [tr.sample(min(t, tr.t_end))[0] for tr in trajs]
        for i, pos in enumerate(poses):
            scan = _measured_scan(plan, pos, num_rays, max_range, cfg, snr,
                                  noise_power, rng, threshold)
            grids[f"active{i}"] = grid_update_from_scan(
                grids[f"active{i}"], pos, 0.0, scan, max_range)
            if len(poses) > 1:
                # passive sensing of the other AGV's transmission, modeled as a
                # monostatic-equivalent scan from the transmitter's position
                other = poses[1 - i]
                pscan = _measured_scan(plan, other, num_rays, max_range, cfg,
                                       snr, noise_power, rng, threshold)
                grids[f"passive{i}"] = grid_update_from_scan(
                    grids[f"passive{i}"], other, 0.0, pscan, max_range)
        t += frame_dt
    single = grids["active0"]
    parts = [grids["active0"], grids["passive0"]]
    if len(trajs) > 1:
        parts += [grids["active1"], grids["passive1"]]
    dual = fuse_grids(parts)
    acc_single = map_accuracy(single, plan)
    acc_dual = map_accuracy(dual, plan)
    if want_grids:
        return (acc_single, acc_dual, grid_to_pgm(single), grid_to_pgm(dual))
    return (acc_single, acc_dual, None, None)


def exp_slam_recon(cfg: ScenarioConfig,
                   jobs: int = 1) -> tuple[MetricsTable, dict[str, bytes]]:
    p = cfg.params
    agv_wps = p.get("agv_trajectories", _DEFAULT_AGV_LOOPS)
    plan_key = cfg.raw.get("world", {}).get("preset", "factory_default")
    ofdm_tuple = (cfg.ofdm.carrier_freq, cfg.ofdm.bandwidth,
                  cfg.ofdm.num_subcarriers, cfg.ofdm.num_symbols)
    snr = 10.0 ** (cfg.snr_db / 10.0)
    noise_power = float(p.get("noise_power", 1.0))
    args = [(stream_seed(cfg.seed, t), plan_key,
             tuple(tuple(tuple(w) for w in wps) for wps in agv_wps), ofdm_tuple,
             snr, noise_power, cfg.detection_threshold,
             int(p.get("num_rays", 36)), float(p.get("max_range", 30.0)),
             float(p.get("frame_dt", 1.0)), float(p.get("cell_size", 0.25)),
             t == 0)
            for t in range(cfg.trials)]
    results = _pmap(_slam_seed, args, jobs)
    table = MetricsTable(metadata={"scenario": cfg.scenario_hash(),
                                   "seed": str(cfg.seed), "experiment": cfg.name})
    artifacts: dict[str, bytes] = {}
    for t, (acc_s, acc_d, pgm_s, pgm_d) in enumerate(results):
        table.add_row(variant="single", seed=t, map_accuracy=acc_s)
        table.add_row(variant="dual-fused", seed=t, map_accuracy=acc_d)
        if pgm_s is not None:
            artifacts["map_single.pgm"] = pgm_s
            artifacts["map_dual_fused.pgm"] = pgm_d
    return table, artifacts


# ---------------------------------------------------------------------------
# Experiment 3: sensing-assisted beam tracking (Fig. 5a analogue)
# ---------------------------------------------------------------------------

def _beam_seed(args) -> list[tuple]:
    (seed, n, bs_xy, bs_heading, path_wps, frame_dt, ofdm_tuple, snr, threshold,
     snr0, rebuild_interval, ingest_delay, bounds_tuple) = args
    cfg = OfdmConfig(*ofdm_tuple)
    rng = np.random.default_rng(seed)
    codebook = UlaCodebook(n)
    plan = FloorPlan(bounds=Rect(*bounds_tuple))
    bs = MachineNode(id="bs", kind=MachineKind.BS, pose=Vec2(*bs_xy),
                     heading=bs_heading, antenna_count=n)
    traj = Trajectory(tuple((t, Vec2(x, y)) for t, x, y in path_wps))
    repo = DataRepository()
    twin: Optional[LocalTwin] = None
    last_rebuild = -math.inf
    region = plan.bounds
    rows = []
    prev_best: Optional[int] = None
    t = traj.t_start
    frame = 0
    while t <= traj.t_end + 1e-9:
        pos, vel = traj.sample(t)
        im = MachineNode(id="im", kind=MachineKind.AGV, pose=pos,
                         heading=math.atan2(vel.y, vel.x), velocity=vel)
        channel = channel_from_geometry(bs, im, plan)
        gains = all_beam_gains(codebook, channel)
        true_best = int(np.argmax(gains))

        # sensing: echo, detection, world-frame measurement into the repo
        true_range, azimuth, radial = ground_truth_observables(bs, im)
        if cfg.num_symbols == 1:
            det = batch_single_target_echo_ranges(
                cfg, np.array([true_range]), np.array([snr]), 1.0, rng,
                threshold)[0]
        else:
            found = estimate_delay_doppler(
                synthesize_echo(cfg, [PointTarget(range=true_range,
                                                  radial_velocity=radial,
                                                  amplitude=snr)], 1.0, rng),
                threshold)
            det = found[0] if found else None
        if det is not None:
            sigma_b = (2.0 / n) / math.sqrt(2.0 * det.snr_estimate)
            bearing = bs.heading + azimuth + sigma_b * rng.standard_normal()
            meas = measurement_from_detection(det, bs, bearing, cfg, timestamp=t)
            ingest(repo, RepositoryEvent(timestamp=t, source_id="bs", payload=meas,
                                         arrival_time=t + ingest_delay))
        if t - last_rebuild >= rebuild_interval:
            twin = build_local_twin(repo, region, now=t)
            last_rebuild = t

        fb_beam = prev_best if prev_best is not None else true_best
        track_ids = sorted(twin.environment.tracks) if twin else []
        if track_ids:
            sense_beam = track_sensing_assisted(codebook, twin, track_ids[0], t,
                                                bs_pose=bs.pose,
                                                bs_heading=bs.heading)
        else:
            sense_beam = fb_beam
        rows.append((n, frame,
                     spectral_efficiency(float(gains[fb_beam]), snr0),
                     spectral_efficiency(float(gains[sense_beam]), snr0),
                     spectral_efficiency(float(gains[true_best]), snr0),
                     true_best, fb_beam, sense_beam))
        prev_best = true_best
        t += frame_dt
        frame += 1
    return rows


def exp_beam_tracking(cfg: ScenarioConfig, jobs: int = 1) -> MetricsTable:
    p = cfg.params
    n_values = [int(n) for n in p.get("n_values", [8, 16, 32, 64])]
    bs_xy = tuple(map(float, p.get("bs_position", (0.0, 15.0))))
    bs_heading = float(p.get("bs_heading", 0.0))
    path = p.get("im_path",
                 [(0.0, 20.0, 29.0), (5.6, 20.0, 1.0)])  # 10 m/s crossing
    frame_dt = float(p.get("frame_dt", 0.01))
    snr0 = 10.0 ** (float(p.get("snr0_db", 0.0)) / 10.0)
    ofdm_tuple = (cfg.ofdm.carrier_freq, cfg.ofdm.bandwidth,
                  cfg.ofdm.num_subcarriers, cfg.ofdm.num_symbols)
    snr = 10.0 ** (cfg.snr_db / 10.0)
    b = cfg.plan.bounds
    args = [(stream_seed(cfg.seed, ni, t), n, bs_xy, bs_heading,
             tuple(tuple(w) for w in path), frame_dt, ofdm_tuple, snr,
             cfg.detection_threshold, snr0, cfg.rebuild_interval_s,
             cfg.ingest_delay_s, (b.xmin, b.ymin, b.xmax, b.ymax))
            for ni, n in enumerate(n_values) for t in range(cfg.trials)]
    results = _pmap(_beam_seed, args, jobs)
    table = MetricsTable(metadata={"scenario": cfg.scenario_hash(),
                                   "seed": str(cfg.seed), "experiment": cfg.name})
    idx = 0
    for ni, n in enumerate(n_values):
        for t in range(cfg.trials):
            for (nn, frame, se_fb, se_sense, se_best, bb, fb, sb) in results[idx]:
                table.add_row(N=nn, seed=t, frame=frame, se_feedback=se_fb,
                              se_sensing=se_sense, true_best_se=se_best,
                              true_best_beam=bb, feedback_beam=fb,
                              sensing_beam=sb)
            idx += 1
    return table


# ---------------------------------------------------------------------------
# Experiment 4: neighbor discovery (Fig. 5b analogue)
# ---------------------------------------------------------------------------

def _discovery_seed(args) -> tuple:
    (seed, num_nodes, comm_range, num_sectors, bounds_tuple, max_rounds,
     threshold) = args
    b = Rect(*bounds_tuple)
    placement_rng = np.random.default_rng(stream_seed(seed, 0))
    for _ in range(64):
        positions = {f"n{i}": Vec2(float(placement_rng.uniform(b.xmin, b.xmax)),
                                   float(placement_rng.uniform(b.ymin, b.ymax)))
                     for i in range(num_nodes)}
        nodes = [MachineNode(id=nid, kind=MachineKind.AGV, pose=pos, heading=0.0)
                 for nid, pos in sorted(positions.items())]
        graph = build_contact_graph(nodes, comm_range)
        if any(graph.values()):
            break
    else:
        raise UndefinedMetricError("could not place a connected node set")

    # exact twin: one static track per node at its true position
    grid = OccupancyGrid.for_bounds(b.xmin, b.ymin, b.xmax, b.ymax, 1.0)
    tracks = {f"trk_{nid}": TrackState(track_id=f"trk_{nid}", position=pos,
                                       velocity=Vec2(0.0, 0.0),
                                       covariance=np.eye(2) * 0.01,
                                       last_update=0.0,
                                       history=[(0.0, pos, np.eye(2) * 0.01)])
              for nid, pos in positions.items()}
    twin = LocalTwin(region=b, elements={}, topology=TopologyGraph(),
                     environment=EnvironmentModel(grid=grid, tracks=tracks),
                     built_at=0.0)
    track_map = {nid: f"trk_{nid}" for nid in positions}

    traces = {}
    r90 = {}
    for key, policy, sub in (
            ("gossip", ContactPolicy(kind=PolicyKind.UNIFORM_GOSSIP), 1),
            ("dt", ContactPolicy(kind=PolicyKind.DT_GOSSIP, twin=twin,
                                 track_of_node=track_map), 2)):
        rng = np.random.default_rng(stream_seed(seed, sub))
        states = initial_states(graph)
        trace = []
        for rnd in range(max_rounds):
            gossip_round(states, graph, positions, policy, rng,
                         num_sectors=num_sectors, round_time=float(rnd))
            trace.append(discovery_fraction(states))
            if trace[-1] >= 1.0:
                break
        traces[key] = trace
        r90[key] = rounds_to_threshold(trace, threshold)
    return traces["gossip"], traces["dt"], r90["gossip"], r90["dt"]


def exp_neighbor_discovery(cfg: ScenarioConfig, jobs: int = 1) -> MetricsTable:
    p = cfg.params
    b = cfg.plan.bounds
    args = [(stream_seed(cfg.seed, t), int(p.get("num_nodes", 30)),
             float(p.get("comm_range", 15.0)), int(p.get("num_sectors", 8)),
             (b.xmin, b.ymin, b.xmax, b.ymax), int(p.get("max_rounds", 64)),
             float(p.get("threshold", 0.9)))
            for t in range(cfg.trials)]
    results = _pmap(_discovery_seed, args, jobs)
    table = MetricsTable(metadata={"scenario": cfg.scenario_hash(),
                                   "seed": str(cfg.seed), "experiment": cfg.name})
    for t, (tg, td, r90g, r90d) in enumerate(results):
        n_rounds = max(len(tg), len(td))
        for r in range(n_rounds):
            fg = tg[min(r, len(tg) - 1)]
            fd = td[min(r, len(td) - 1)]
            table.add_row(seed=t, round=r + 1, frac_gossip=fg, frac_dt_gossip=fd,
                          r90_gossip=r90g, r90_dt=r90d)
    return table


# ---------------------------------------------------------------------------

def run_scenario(cfg: ScenarioConfig,
                 jobs: int = 1) -> tuple[MetricsTable, dict[str, bytes]]:
    """Dispatch to the experiment named in the config; deterministic per
    (config, seed, any jobs value)."""
    if cfg.experiment is ExperimentKind.COOP_LOCALIZATION:
        return exp_coop_localization(cfg, jobs), {}
    if cfg.experiment is ExperimentKind.SLAM_RECON:
        return exp_slam_recon(cfg, jobs)
    if cfg.experiment is ExperimentKind.BEAM_TRACKING:
        return exp_beam_tracking(cfg, jobs), {}
    if cfg.experiment is ExperimentKind.NEIGHBOR_DISCOVERY:
        return exp_neighbor_discovery(cfg, jobs), {}
    raise ConfigError("experiment", f"unhandled experiment {cfg.experiment}")
