"""Experiment harness: instance generators, run loop, batch runner, output.

A run warm-starts with one pull per arm, then loops: check the stopping
monitor(s), pick an arm with the sampler (optionally restricted to the
active pieces), pull, update statistics, and in theory mode advance the
sampling-side sets. Runs are pure functions of (config, seed); records are
emitted as CSV plus a JSON summary, with elimination events in a separate
trace file.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import stopping as stopping_mod
from .allocation import optimal_weights
from .model import (LINEAR, UNSTRUCTURED, BanditInstance, RngStream,
                    Statistics, sample_reward, unstructured_instance)
from .problems import (BAI, OSI, TOPM, PieceEvaluator, ProblemSpec, answer_of,
                       boundary_tie, pieces_of)
from .samplers import SamplerSettings, make_sampler
from .stopping import ResetSchedule, SamplingSets, StoppingMonitor, Threshold

RUN_CSV_HEADER = ("run_id,algo,stopping,elim_sampling,problem,structure,K,d,"
                  "delta,seed,samples,correct,wall_ns,per_iter_ns,minimizations")
TRACE_CSV_HEADER = "run_id,t,problem,piece_kind,piece_a,piece_b"

STEP_CAP = 10_000_000


# ---------------------------------------------------------------------------
# Instance generators
# ---------------------------------------------------------------------------


def gen_linear_f2_small(seed: int, K: int = 50, d: int = 10) -> BanditInstance:
    """Block construction: arm 1 is e_1 with mean 1, gaps in [0.2, 1].

    theta is the all-ones vector. Unit 3-vectors v are drawn uniformly and
    accepted when sum(v) lies in [0, 0.8]; each accepted draw is embedded
    into every 3-coordinate block after the first coordinate, adding
    (d - 1) // 3 arms, until K arms exist.
    """
    if d < 4:
        raise ValueError("need d >= 4 for the block construction")
    rng = np.random.default_rng(seed)
    n_blocks = (d - 1) // 3
    feats = [np.eye(d)[0]]
    while len(feats) < K:
        v = rng.uniform(-1.0, 1.0, 3)
        v /= np.linalg.norm(v)
        if 0.0 <= v.sum() <= 0.8:
            for b in range(n_blocks):
                arm = np.zeros(d)
                arm[1 + 3 * b: 4 + 3 * b] = v
                feats.append(arm)
    return BanditInstance(np.array(feats[:K]), np.ones(d), LINEAR)


def _theta_pattern(n_canon: int) -> np.ndarray:
    a = (n_canon - 1) // 2
    return np.array([1.0] + [0.9] * a + [0.8] * (n_canon - 1 - a))


def gen_linear_f2_large(seed: int, task: str = BAI, K: int = 50, d: int = 20,
                        n_canon: int | None = None, tail_bound: float = 0.5,
                        theta_pattern=None) -> BanditInstance:
    """Canonical first arms plus rejection-sampled random unit arms.

    For bai/topm the pattern of leading means is 1, 0.9 (x4), 0.8 (x5) at
    the default scale and random arms are accepted when their mean is at
    most ``tail_bound``. For osi the leading means have magnitudes in
    [0.1, 0.2] with random signs and random arms need |mean| >= 0.5.
    """
    rng = np.random.default_rng(seed)
    n_canon = d // 2 if n_canon is None else n_canon
    if not 1 <= n_canon <= min(K, d):
        raise ValueError("n_canon out of range")
    theta = np.zeros(d)
    if task == OSI:
        mags = rng.uniform(0.1, 0.2, n_canon)
        signs = rng.choice([-1.0, 1.0], n_canon)
        theta[:n_canon] = mags * signs
    else:
        pat = _theta_pattern(n_canon) if theta_pattern is None \
            else np.asarray(theta_pattern, dtype=float)
        if len(pat) != n_canon:
            raise ValueError("theta_pattern length must equal n_canon")
        theta[:n_canon] = pat
    theta[n_canon:] = rng.uniform(-0.5, 0.5, d - n_canon)
    feats = [np.eye(d)[k] for k in range(n_canon)]
    while len(feats) < K:
        v = rng.uniform(-1.0, 1.0, d)
        v /= np.linalg.norm(v)
        mean = v @ theta
        ok = abs(mean) >= 0.5 if task == OSI else mean <= tail_bound
        if ok:
            feats.append(v)
    return BanditInstance(np.array(feats), theta, LINEAR)


def gen_unstructured(seed: int, task: str = BAI, K: int = 40) -> BanditInstance:
    """Fixed leading means with a uniformly drawn tail.

    bai/topm: means 1, .9, .8, .7, .6 then U[0, 0.5]. osi: means .1, -.2,
    .3, -.4 then uniform on [-1, -.5] union [.5, 1].
    """
    rng = np.random.default_rng(seed)
    if task == OSI:
        head = np.array([0.1, -0.2, 0.3, -0.4])[: min(4, K)]
        tail = rng.uniform(0.5, 1.0, max(K - len(head), 0))
        tail *= rng.choice([-1.0, 1.0], len(tail))
    else:
        head = np.array([1.0, 0.9, 0.8, 0.7, 0.6])[: min(5, K)]
        tail = rng.uniform(0.0, 0.5, max(K - len(head), 0))
    return unstructured_instance(np.concatenate([head, tail]))


def gen_example_g(K: int = 5, epsilon: float = 0.2) -> BanditInstance:
    """Two orthonormal near-optimal arms plus far arms in the third quadrant.

    phi_1 = e_1, phi_2 = e_2, theta = (1, 1 - epsilon); the remaining arms
    are unit vectors with both coordinates negative, so their means are
    nonpositive. The characteristic value is epsilon^2 / 8.
    """
    if K < 3:
        raise ValueError("need K >= 3")
    if not 0.0 < epsilon < 0.5:
        raise ValueError("epsilon must be in (0, 1/2)")
    feats = np.zeros((K, 2))
    feats[0] = (1.0, 0.0)
    feats[1] = (0.0, 1.0)
    for i in range(2, K):
        ang = np.pi + 0.5 * np.pi * (i - 1) / (K - 1)
        feats[i] = (np.cos(ang), np.sin(ang))
    return BanditInstance(feats, np.array([1.0, 1.0 - epsilon]), LINEAR)


# ---------------------------------------------------------------------------
# Config and records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = BAI
    structure: str = LINEAR
    instance: str = "f2_small"
    algo: str = "lingame"
    stopping: str = "selective"
    elim_sampling: bool = False
    delta: float = 0.01
    reps: int = 1
    seed: int = 0
    m: int | None = None
    epsilon: float = 0.2
    K: int | None = None
    d: int | None = None
    n_canon: int | None = None
    tail_bound: float = 0.5
    threshold_mode: str = stopping_mod.HEURISTIC
    tbar0: int = 2
    c1: float = 2.0
    c2: float = 2.0
    solver_tol: float = 1e-6
    solver_max_iter: int = 2000
    tracking: str = "cumulative"
    learner_rate_scale: float = 1.0
    gain_cap: float | None = None
    recompute_every: int = 1
    step_cap: int = STEP_CAP
    out: str | None = None

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0, 1)")
        if self.problem == TOPM and self.m is None:
            raise ValueError("topm requires m")
        if (self.elim_sampling and self.threshold_mode == stopping_mod.HEURISTIC
                and self.stopping == "llr"):
            raise ValueError("heuristic-mode elimination at sampling shares the "
                             "stopping set and needs an elimination stopping rule")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha1(text.encode()).hexdigest()[:12]


@dataclass
class RunRecord:
    run_id: str
    config_hash: str
    algo: str
    stopping: str
    elim_sampling: bool
    problem: str
    structure: str
    K: int
    d: int
    delta: float
    seed: int
    samples: int
    answer: object
    correct: bool
    tie_flagged: bool
    capped: bool
    wall_ns: int
    per_iter_ns: float
    minimizations: int
    active_sizes: list
    elim_events: list  # (t, piece_a, piece_b or None)

    def replay_key(self) -> dict:
        """Everything that must be identical on a seeded replay."""
        d = dataclasses.asdict(self)
        for k in ("wall_ns", "per_iter_ns", "run_id"):
            d.pop(k)
        return d

    def csv_row(self) -> list:
        return [self.run_id, self.algo, self.stopping,
                "on" if self.elim_sampling else "off", self.problem,
                self.structure, self.K, self.d, repr(self.delta), self.seed,
                self.samples, int(self.correct), self.wall_ns,
                f"{self.per_iter_ns:.1f}", self.minimizations]


def derive_seed(base: int, rep: int) -> int:
    """Well-mixed per-repetition seed, stable across platforms."""
    return int(np.random.SeedSequence([int(base), int(rep)]).generate_state(1)[0])


def make_instance(config: ExperimentConfig):
    """Instance and problem spec from a config (generators seeded by config.seed)."""
    name = config.instance
    if name.startswith("file:"):
        inst = BanditInstance.from_json(Path(name[5:]).read_text())
    elif name == "f2_small":
        inst = gen_linear_f2_small(config.seed, K=config.K or 50, d=config.d or 10)
    elif name == "f2_large":
        inst = gen_linear_f2_large(config.seed, task=config.problem,
                                   K=config.K or 50, d=config.d or 20,
                                   n_canon=config.n_canon,
                                   tail_bound=config.tail_bound)
    elif name == "uns40":
        inst = gen_unstructured(config.seed, task=config.problem, K=config.K or 40)
    elif name == "example_g":
        inst = gen_example_g(K=config.K or 5, epsilon=config.epsilon)
    else:
        raise ValueError(f"unknown instance {name!r}")
    if inst.structure != config.structure:
        raise ValueError(f"instance {name!r} has structure {inst.structure}, "
                         f"config says {config.structure}")
    spec = ProblemSpec(config.problem, inst.K, config.m)
    return inst, spec


# ---------------------------------------------------------------------------
# Run loop
# ---------------------------------------------------------------------------


@dataclass
class SimResult:
    samples: int
    answer: object
    capped: bool
    tie_flagged: bool
    wall_ns: int
    iters: int
    per_iter_ns: float
    active_sizes: list


def simulate(inst: BanditInstance, spec: ProblemSpec, thr: Threshold, sampler,
             monitors: list, rng: RngStream, *, elim_sampling: bool = False,
             sampling_sets: SamplingSets | None = None,
             step_cap: int = STEP_CAP, track_sizes: bool = True) -> SimResult:
    """Run one trajectory until every monitor stops (or the cap is hit).

    The first monitor is primary: it provides the recorded answer and, in
    heuristic mode with elimination at sampling, its active set restricts
    the sampler. Extra monitors observe the same trajectory.
    """
    stats = Statistics(inst)
    for k in range(inst.K):
        stats.update(k, sample_reward(inst, k, rng))
    t = stats.t
    primary = monitors[0]
    sizes = [(t, primary.active_size())] if track_sizes else []
    wall = 0
    iters = 0
    capped = False
    tie_flagged = False
    while True:
        t0 = time.perf_counter_ns()
        iters += 1
        ev = PieceEvaluator.from_stats(spec, stats)
        i_hat = answer_of(spec, ev.means)
        if sampling_sets is not None and t > inst.K:
            sampling_sets.step(ev, i_hat, t, stopping_mod.alpha(thr, t))
        beta_t = stopping_mod.beta(thr, t)
        for mon in monitors:
            if not mon.stopped:
                was_stopped = mon.stopped
                mon.step(ev, i_hat, t, beta_t)
                if mon is primary and mon.stopped and not was_stopped:
                    tie_flagged = boundary_tie(spec, ev.means)
        if track_sizes:
            size = primary.active_size()
            if size != sizes[-1][1]:
                sizes.append((t, size))
        if all(mon.stopped for mon in monitors):
            wall += time.perf_counter_ns() - t0
            break
        if t >= step_cap:
            wall += time.perf_counter_ns() - t0
            capped = True
            break
        if elim_sampling:
            if sampling_sets is not None:
                active = sampling_sets.active_pieces(i_hat)
            else:
                active = primary.active_pieces(i_hat)
            if not active:  # sampling set drained before stopping: fall back
                active = pieces_of(spec, i_hat)
        else:
            active = pieces_of(spec, i_hat)
        k = sampler.next_arm(stats, t, i_hat, active)
        stats.update(k, sample_reward(inst, k, rng))
        t += 1
        wall += time.perf_counter_ns() - t0
    samples = primary.stopped_at if primary.stopped else t
    return SimResult(samples=samples, answer=primary.answer, capped=capped,
                     tie_flagged=tie_flagged, wall_ns=wall, iters=iters,
                     per_iter_ns=wall / max(iters, 1), active_sizes=sizes)


def run_single(config: ExperimentConfig, seed: int) -> RunRecord:
    """One seeded run of the configured experiment."""
    inst, spec = make_instance(config)
    thr = Threshold(config.delta, config.threshold_mode, config.c1, config.c2)
    settings = SamplerSettings(tracking=config.tracking,
                               solver_tol=config.solver_tol,
                               solver_max_iter=config.solver_max_iter,
                               recompute_every=config.recompute_every,
                               learner_rate_scale=config.learner_rate_scale,
                               gain_cap=config.gain_cap)
    sampler = make_sampler(config.algo, spec, inst, thr, settings)
    monitor = StoppingMonitor(spec, config.stopping)
    sampling_sets = None
    if config.elim_sampling and config.threshold_mode == stopping_mod.THEORY:
        rule = config.stopping if config.stopping in ("selective", "full") \
            else "selective"
        sampling_sets = SamplingSets(spec, rule, ResetSchedule(config.tbar0))
    rng = RngStream(seed)
    sim = simulate(inst, spec, thr, sampler, [monitor], rng,
                   elim_sampling=config.elim_sampling,
                   sampling_sets=sampling_sets, step_cap=config.step_cap)
    truth = answer_of(spec, inst.means())
    events = []
    for (t_ev, piece) in monitor.events:
        if spec.kind == TOPM:
            events.append((t_ev, piece[0], piece[1]))
        else:
            events.append((t_ev, piece, None))
    return RunRecord(
        run_id=f"{config.hash()}-{seed}",
        config_hash=config.hash(),
        algo=config.algo,
        stopping=config.stopping,
        elim_sampling=config.elim_sampling,
        problem=config.problem,
        structure=config.structure,
        K=inst.K,
        d=inst.d,
        delta=config.delta,
        seed=seed,
        samples=sim.samples,
        answer=sim.answer,
        correct=(sim.answer == truth),
        tie_flagged=sim.tie_flagged,
        capped=sim.capped,
        wall_ns=sim.wall_ns,
        per_iter_ns=sim.per_iter_ns,
        minimizations=monitor.minimizations,
        active_sizes=sim.active_sizes,
        elim_events=events,
    )


def _worker(args):
    config, seed = args
    return run_single(config, seed)


def max_workers() -> int:
    cap = os.environ.get("PE_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def run_batch(config: ExperimentConfig, seeds=None):
    """Run ``config.reps`` seeded runs (parallel across processes) and summarize."""
    if seeds is None:
        seeds = [derive_seed(config.seed, r) for r in range(config.reps)]
    tasks = [(config, s) for s in seeds]
    workers = min(max_workers(), len(tasks))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_worker, tasks,
                                    chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        records = [run_single(c, s) for c, s in tasks]
    return records, summarize(records, config)


def summarize(records: list, config: ExperimentConfig) -> dict:
    samples = np.array([r.samples for r in records], dtype=float)
    return {
        "config": config.to_dict(),
        "config_hash": config.hash(),
        "runs": len(records),
        "samples_mean": float(samples.mean()),
        "samples_std": float(samples.std(ddof=1)) if len(records) > 1 else 0.0,
        "per_iter_ns_mean": float(np.mean([r.per_iter_ns for r in records])),
        "error_rate": float(np.mean([not r.correct for r in records])),
        "minimizations_mean": float(np.mean([r.minimizations for r in records])),
        "capped_runs": int(sum(r.capped for r in records)),
    }


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------


def emit(records: list, out_dir, summary: dict | None = None) -> dict:
    """Write runs.csv, trace.csv and summary.json; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"runs": out / "runs.csv", "trace": out / "trace.csv",
             "summary": out / "summary.json"}
    with open(paths["runs"], "w", newline="") as fh:
        fh.write(RUN_CSV_HEADER + "\n")
        writer = csv.writer(fh)
        for rec in records:
            writer.writerow(rec.csv_row())
    with open(paths["trace"], "w", newline="") as fh:
        fh.write(TRACE_CSV_HEADER + "\n")
        writer = csv.writer(fh)
        for rec in records:
            for (t_ev, a, b) in rec.elim_events:
                kind = {"bai": "arm", "topm": "pair", "osi": "sign"}[rec.problem]
                writer.writerow([rec.run_id, t_ev, rec.problem, kind, a,
                                 "" if b is None else b])
    if summary is not None:
        paths["summary"].write_text(json.dumps(summary, indent=2))
    return paths


def read_runs_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
