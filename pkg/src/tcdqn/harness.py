"""Experiment orchestration: training, evaluation, baselines, ablations and plot data.

Every run writes a metrics CSV with the same columns (``METRIC_COLUMNS``),
one row per episode. Given a config and seed, all files except those that
embed wall-clock time are byte-for-byte reproducible; wall-clock capture is
off unless ``record_wallclock`` is set.
"""
from __future__ import annotations

import copy
import csv
import logging
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines as bl
from .agent import TOGGLES, Agent
from .config import RunConfig, dump_config
from .env import SignalEnv, scenario_flow
from .neural import load_checkpoint, save_checkpoint
from .replay import PriorityBuffer, Transition, UniformBuffer

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("episode", "omega_T", "reward", "actions_taken", "phase_changes", "departures",
                  "epsilon", "beta", "wallclock_ms")


class HarnessError(RuntimeError):
    pass


class MetricsParseError(ValueError):
    pass


@dataclass
class EpisodeRecord:
    episode: int
    omega_T: int
    reward: float
    actions_taken: int
    phase_changes: int
    departures: int
    epsilon: float
    beta: float
    wallclock_ms: float = 0.0
    mean_queue: float = 0.0

    def row(self) -> list:
        return [getattr(self, c) for c in METRIC_COLUMNS]


# -- construction ------------------------------------------------------------

def rng_streams(seed: int, n: int = 3) -> list[np.random.Generator]:
    """Independent generators for traffic, learner and controller randomness."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def build_env(cfg: RunConfig, rng: np.random.Generator, scenario: int | None = None, frame_log=None) -> SignalEnv:
    spec = cfg.intersection()
    flow = cfg.flow() if scenario is None else scenario_flow(spec, scenario, cfg.env.episode_length)
    return SignalEnv(spec, cfg.timings, flow, cfg.reward, rng, cfg.env.count_scale, frame_log=frame_log)


def build_agent(cfg: RunConfig, env: SignalEnv, rng: np.random.Generator) -> Agent:
    r = cfg.replay
    if cfg.agent.use_per:
        buffer = PriorityBuffer(r.capacity, r.alpha, r.beta0, r.beta_increment, r.eps)
    else:
        buffer = UniformBuffer(r.capacity)
    return Agent(env.obs_dim, env.action_count, cfg.agent, rng=rng, buffer=buffer)


def build_controller(cfg: RunConfig, kind: str, env: SignalEnv, rng: np.random.Generator):
    if kind == "ft":
        if cfg.baselines.ft_plan is not None:
            plan = bl.FixedTimePlan(tuple(tuple(e) for e in cfg.baselines.ft_plan), cfg.timings.transition)
        else:
            plan = bl.default_ft_plan(env.spec, env.flow, cfg.timings)
        return bl.FixedTimeController(plan)
    if kind == "sotl":
        return bl.SotlController(bl.SotlParams(cfg.baselines.sotl_threshold, cfg.baselines.sotl_hold))
    if kind == "random":
        return bl.RandomController(env.action_count, rng)
    raise HarnessError(f"unknown controller {kind!r}; expected ft, sotl or random")


class AgentPolicy:
    name = "agent"

    def __init__(self, agent: Agent, greedy: bool = False):
        self.agent, self.greedy = agent, greedy

    def act(self, env, obs) -> int:
        return self.agent.select_action(obs, greedy=self.greedy)


# -- episode loop --------------------------------------------------------------

def run_episode(env: SignalEnv, policy, episode: int, agent: Agent | None = None, learn: bool = False,
                record_wallclock: bool = False, actions: list | None = None) -> EpisodeRecord:
    start = time.perf_counter()
    obs = env.reset()
    total, steps, changes, departures = 0.0, 0, 0, 0
    while True:
        a = policy.act(env, obs)
        if actions is not None:
            actions.append(a)
        res = env.step(a)
        total += res.reward
        steps += 1
        changes += int(res.phase_changed)
        departures += res.departures
        if learn:
            agent.remember(Transition(obs, a, res.reward, res.obs, res.terminal), frames=res.frames)
            agent.train_step()
        obs = res.obs
        if res.terminal:
            break
    if learn:
        agent.episodes += 1
    eps = agent.epsilon if agent is not None and learn else 0.0
    beta = agent.buffer.beta if agent is not None and learn else 0.0
    ms = (time.perf_counter() - start) * 1000.0 if record_wallclock else 0.0
    return EpisodeRecord(episode, env.omega, total, steps, changes, departures, eps, beta, round(ms, 3),
                         env.mean_queue)


# -- files -------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(round(x, 12))
    return str(x)


def write_metrics(path, records) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for rec in records:
            w.writerow([_fmt(v) for v in rec.row()])
    return path


def read_metrics(path) -> list[dict]:
    """Parse a metrics CSV; malformed lines raise :class:`MetricsParseError` with the line number."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != METRIC_COLUMNS:
            raise MetricsParseError(f"{path}:1: expected header {','.join(METRIC_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(METRIC_COLUMNS):
                raise MetricsParseError(f"{path}:{lineno}: expected {len(METRIC_COLUMNS)} fields, got {len(row)}")
            try:
                rec = {c: float(v) for c, v in zip(METRIC_COLUMNS, row)}
            except ValueError as exc:
                raise MetricsParseError(f"{path}:{lineno}: {exc}") from None
            rows.append(rec)
    return rows


def smooth(values, decay: float = 0.99) -> list[float]:
    """Exponentially weighted running average seeded with the first value."""
    out = []
    s = None
    for x in values:
        s = float(x) if s is None else decay * s + (1.0 - decay) * float(x)
        out.append(s)
    return out


def write_series(path, episodes, raw, smoothed) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("episode", "omega_T", "omega_T_smoothed"))
        for e, r, s in zip(episodes, raw, smoothed):
            w.writerow((int(e), _fmt(float(r)), _fmt(s)))
    return Path(path)


def _prepare_out(out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise HarnessError(f"output directory {out} is not writable: {exc.strerror}") from None
    return out


def save_agent(path, agent: Agent, cfg: RunConfig):
    save_checkpoint(path, agent.online,
                    normalization={"count_scale": cfg.env.count_scale, "action_count": agent.action_count},
                    extras=agent.state_arrays(), meta={"counters": agent.counters(), "config": cfg.to_dict()})


# -- runs --------------------------------------------------------------------

@dataclass
class TrainingResult:
    records: list[EpisodeRecord]
    metrics_path: Path
    smoothed_path: Path
    checkpoints: list[Path] = field(default_factory=list)
    agent: Agent | None = None


def run_training(cfg: RunConfig, progress: bool = False) -> TrainingResult:
    out = _prepare_out(cfg.out_dir)
    (out / "config.yaml").write_text(dump_config(cfg))
    env_rng, agent_rng, _ = rng_streams(cfg.seed)
    env = build_env(cfg, env_rng)
    agent = build_agent(cfg, env, agent_rng)
    policy = AgentPolicy(agent)
    records, checkpoints = [], []
    for ep in range(1, cfg.episodes + 1):
        rec = run_episode(env, policy, ep, agent, learn=True, record_wallclock=cfg.record_wallclock)
        records.append(rec)
        if progress and ep % 100 == 0:
            recent = [r.omega_T for r in records[-100:]]
            log.info("episode %d  mean omega_T(100) %.1f  eps %.3f", ep, np.mean(recent), rec.epsilon)
        if cfg.checkpoint_every and ep % cfg.checkpoint_every == 0 and ep != cfg.episodes:
            path = out / f"checkpoint_{ep:06d}.tcq"
            save_agent(path, agent, cfg)
            checkpoints.append(path)
    final = out / "final.tcq"
    save_agent(final, agent, cfg)
    checkpoints.append(final)
    metrics = write_metrics(out / "metrics.csv", records)
    omegas = [r.omega_T for r in records]
    smoothed = write_series(out / "smoothed.csv", [r.episode for r in records], omegas,
                            smooth(omegas, cfg.smoothing))
    return TrainingResult(records, metrics, smoothed, checkpoints, agent)


def _evaluate(cfg: RunConfig, make_policy, scenario: int | None, seeds: int, episodes: int,
              label: str, out_name: str):
    out = _prepare_out(cfg.out_dir)
    records = []
    n = 0
    for k in range(seeds):
        env_rng, _, ctrl_rng = rng_streams(cfg.seed + k)
        env = build_env(cfg, env_rng, scenario)
        policy = make_policy(env, ctrl_rng)
        for _ in range(episodes):
            n += 1
            records.append(run_episode(env, policy, n, record_wallclock=cfg.record_wallclock))
    write_metrics(out / f"{out_name}_metrics.csv", records)
    summary = {
        "controller": label,
        "scenario": scenario if scenario is not None else "train",
        "seeds": seeds,
        "episodes": episodes,
        "mean_omega_T": float(np.mean([r.omega_T for r in records])),
        "mean_reward": float(np.mean([r.reward for r in records])),
    }
    with open(out / f"{out_name}_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(summary.keys())
        w.writerow(_fmt(v) for v in summary.values())
    return summary, records


def run_eval(cfg: RunConfig, checkpoint, scenario: int | None = None, seeds: int | None = None,
             episodes: int | None = None):
    """Greedy (noise-free, epsilon = 0) evaluation of a saved agent over ``seeds`` traffic seeds."""
    seeds = seeds or cfg.eval.seeds
    episodes = episodes or cfg.eval.episodes
    probe = build_env(cfg, np.random.default_rng(0), scenario)
    agent = build_agent(cfg, probe, np.random.default_rng(0))
    load_checkpoint(checkpoint, agent.online)

    def make_policy(env, rng):
        return AgentPolicy(agent, greedy=True)

    tag = f"eval_s{scenario}" if scenario is not None else "eval"
    return _evaluate(cfg, make_policy, scenario, seeds, episodes, "agent", tag)


def run_baseline(cfg: RunConfig, kind: str, scenario: int | None = None, seeds: int | None = None,
                 episodes: int | None = None):
    seeds = seeds or cfg.eval.seeds
    episodes = episodes or cfg.eval.episodes

    def make_policy(env, rng):
        return build_controller(cfg, kind, env, rng)

    tag = f"{kind}_s{scenario}" if scenario is not None else kind
    return _evaluate(cfg, make_policy, scenario, seeds, episodes, kind, tag)


def sweep_fixed_time(cfg: RunConfig, episodes: int = 100, seed: int | None = None, scenario: int | None = None):
    """Mean episode wait of every plan in the configured grid; returns ``(best_plan, {entries: mean})``."""
    seed = cfg.seed if seed is None else seed
    spec = cfg.intersection()
    results = {}
    for plan in bl.ft_plan_grid(spec.action_count, cfg.timings, cfg.baselines.ft_windows):
        env_rng, _, _ = rng_streams(seed)
        env = build_env(cfg, env_rng, scenario)
        ctrl = bl.FixedTimeController(plan)
        results[plan.entries] = float(np.mean([run_episode(env, ctrl, e).omega_T for e in range(episodes)]))
    best = min(results, key=results.get)
    return bl.FixedTimePlan(best, cfg.timings.transition), results


def variant_configs(cfg: RunConfig, toggles=TOGGLES) -> dict[str, RunConfig]:
    """Full model, one variant per disabled toggle, and the all-off vanilla DQN."""
    variants = {"full": copy.deepcopy(cfg)}
    for name in TOGGLES:
        setattr(variants["full"].agent, f"use_{name}", True)
    for name in toggles:
        if name not in TOGGLES:
            raise HarnessError(f"unknown toggle {name!r}")
        v = copy.deepcopy(variants["full"])
        setattr(v.agent, f"use_{name}", False)
        variants[f"no_{name}"] = v
    vanilla = copy.deepcopy(variants["full"])
    for name in TOGGLES:
        setattr(vanilla.agent, f"use_{name}", False)
    variants["vanilla"] = vanilla
    return variants


def run_ablation(cfg: RunConfig, toggles=TOGGLES, seeds=(0, 1, 2)) -> dict:
    """Train every variant on every seed; writes per-run metrics and a median-curve summary."""
    root = _prepare_out(cfg.out_dir)
    paths: dict[str, list[Path]] = {}
    curves: dict[str, list[list[float]]] = {}
    for name, vcfg in variant_configs(cfg, toggles).items():
        for seed in seeds:
            run_cfg = copy.deepcopy(vcfg)
            run_cfg.seed = int(seed)
            run_cfg.out_dir = str(root / name / f"seed_{seed}")
            res = run_training(run_cfg)
            paths.setdefault(name, []).append(res.metrics_path)
            curves.setdefault(name, []).append([r.omega_T for r in res.records])
    summary = root / "median_curves.csv"
    names = list(curves)
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", *names])
        for e in range(cfg.episodes):
            w.writerow([e + 1, *(_fmt(float(statistics.median(c[e] for c in curves[n]))) for n in names)])
    return {"runs": paths, "summary": summary}


def emit_plot_data(metrics_paths, out_dir, decay: float = 0.99, svg: bool = False) -> list[Path]:
    """Per-run (raw, smoothed) wait-time series, optionally with an SVG line chart each."""
    metrics_paths = [Path(p) for p in metrics_paths]
    if not metrics_paths:
        raise HarnessError("emit_plot_data needs at least one metrics file")
    out = _prepare_out(out_dir)
    written = []
    for i, path in enumerate(metrics_paths):
        rows = read_metrics(path)
        episodes = [int(r["episode"]) for r in rows]
        raw = [r["omega_T"] for r in rows]
        stem = f"{i:02d}_{path.parent.name or 'run'}_{path.stem}"
        series = write_series(out / f"{stem}_series.csv", episodes, raw, smooth(raw, decay))
        written.append(series)
        if svg:
            written.append(_line_chart(out / f"{stem}.svg", episodes, raw, smooth(raw, decay), path))
    return written


def _line_chart(path, episodes, raw, smoothed, source) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(episodes, raw, alpha=0.3, lw=0.8, label="per episode")
    ax.plot(episodes, smoothed, lw=2, label="weighted average")
    ax.set_xlabel("episode")
    ax.set_ylabel("total wait (vehicle-frames)")
    ax.set_title(Path(source).parent.name or Path(source).stem)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return Path(path)
