"""Shared property-check routines used by the CLI verify command and tests.

Each check returns plain data so callers can assert or print. They compare
the efficient implementations against independent oracles: numerical
minimization for the closed-form piece infima, literal per-answer piece
bookkeeping for the elimination stopping rules, and brute-force replay of
the reset-schedule intersection identity.
"""

from __future__ import annotations

import numpy as np

from . import stopping as stopping_mod
from .model import (LINEAR, UNSTRUCTURED, BanditInstance, RngStream,
                    Statistics, sample_reward, unstructured_instance)
from .problems import (BAI, OSI, TOPM, NaiveEliminationMonitor,
                       PieceEvaluator, ProblemSpec, answer_of, inf_llr_piece,
                       naive_inf_llr, pieces_of)
from .samplers import make_sampler
from .stopping import (ResetSchedule, SamplingSets, StoppingMonitor,
                       Threshold, beta)


def random_linear_instance(seed: int, K: int, d: int,
                           min_gap: float = 0.15) -> BanditInstance:
    """Random unit-feature linear instance with a unique best arm.

    Redraws until every suboptimal mean is at least ``min_gap`` below the
    best one, so stopping times stay at desk scale.
    """
    rng = np.random.default_rng(seed)
    while True:
        feats = rng.normal(size=(K, d))
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
        theta = rng.normal(size=d)
        theta /= np.linalg.norm(theta)
        means = np.sort(feats @ theta)[::-1]
        if means[0] - means[1] >= min_gap:
            return BanditInstance(feats, theta, LINEAR)


def shared_ordering_run(inst: BanditInstance, spec: ProblemSpec,
                        delta: float, algo: str, seed: int,
                        rules=("full", "selective", "llr"),
                        step_cap: int = 2_000_000) -> dict:
    """One trajectory observed by one monitor per rule.

    The sampler never reads any monitor state (no elimination at sampling),
    so all rules see the identical path. Returns per-rule stopping times,
    answers and cumulative minimization counts, plus a flag for whether the
    per-step counter of the selective rule ever exceeded the llr one.
    """
    from .harness import simulate

    thr = Threshold(delta)
    sampler = make_sampler(algo, spec, inst, thr)
    monitors = [StoppingMonitor(spec, rule) for rule in rules]
    rng = RngStream(seed)
    sim = simulate(inst, spec, thr, sampler, monitors, rng,
                   elim_sampling=False, step_cap=step_cap, track_sizes=False)
    out = {"capped": sim.capped}
    for rule, mon in zip(rules, monitors):
        out[rule] = {"tau": mon.stopped_at, "answer": mon.answer,
                     "minimizations": mon.minimizations,
                     "events": list(mon.events)}
    return out


def random_case(rng: np.random.Generator, problem: str, structure: str):
    """Random (statistics, answer, piece) triple with every arm pulled."""
    K = int(rng.integers(4, 7))
    if structure == UNSTRUCTURED:
        feats = np.eye(K)
        d = K
    else:
        d = int(rng.integers(2, 5))
        feats = rng.normal(size=(K, d))
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
    theta = rng.normal(size=d)
    inst = BanditInstance(feats, theta, structure)
    counts = rng.integers(1, 40, K)
    sums = counts * (feats @ theta) + np.sqrt(counts) * rng.normal(size=K)
    stats = Statistics.from_pull_data(inst, counts, sums)
    m = int(rng.integers(1, K)) if problem == TOPM else None
    spec = ProblemSpec(problem, K, m)
    if problem == BAI:
        i = int(rng.integers(K))
    elif problem == TOPM:
        i = tuple(sorted(rng.choice(K, m, replace=False).tolist()))
    else:
        i = tuple(int(b) for b in rng.integers(0, 2, K))
    pieces = pieces_of(spec, i)
    p = pieces[int(rng.integers(len(pieces)))]
    return spec, stats, i, p


def check_geometry_oracle(cases_per_combo: int = 1000, seed: int = 20_240_601):
    """Max |closed form - numerical oracle| over random cases."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for problem in (BAI, TOPM, OSI):
        for structure in (LINEAR, UNSTRUCTURED):
            for _ in range(cases_per_combo):
                spec, stats, i, p = random_case(rng, problem, structure)
                val, _ = inf_llr_piece(spec, stats, i, p)
                ref = naive_inf_llr(spec, stats, i, p)
                worst = max(worst, abs(val - ref))
    return worst


def paired_naive_run(inst: BanditInstance, spec: ProblemSpec, thr: Threshold,
                     rule: str, seed: int, algo: str = "lingame",
                     step_cap: int = 500_000):
    """Shared trajectory: efficient monitor vs enumeration bookkeeping.

    Returns dict with (tau, answer) under both implementations. Sampling is
    independent of either monitor so the trajectory is identical.
    """
    sampler = make_sampler(algo, spec, inst, thr)
    eff = StoppingMonitor(spec, rule)
    naive = NaiveEliminationMonitor(spec, rule)
    rng = RngStream(seed)
    stats = Statistics(inst)
    for k in range(inst.K):
        stats.update(k, sample_reward(inst, k, rng))
    t = stats.t
    naive_stop = None
    while not (eff.stopped and naive_stop is not None):
        ev = PieceEvaluator.from_stats(spec, stats)
        i_hat = answer_of(spec, ev.means)
        b = beta(thr, t)
        if not eff.stopped:
            eff.step(ev, i_hat, t, b)
        if naive_stop is None:
            ans = naive.step(ev, i_hat, b)
            if ans is not None:
                naive_stop = (t, ans)
        if t >= step_cap:
            raise RuntimeError("paired run hit the step cap")
        k = sampler.next_arm(stats, t, i_hat, pieces_of(spec, i_hat))
        stats.update(k, sample_reward(inst, k, rng))
        t += 1
    return {"efficient": (eff.stopped_at, eff.answer), "naive": naive_stop}


def check_enumeration_equivalence(n_seeds: int = 5, delta: float = 0.01,
                                  rules=("selective", "full")) -> bool:
    """Efficient active-piece encodings agree with the enumeration oracle."""
    from .harness import gen_unstructured

    setups = [
        (unstructured_instance([1.0, 0.7, 0.5, 0.3, 0.1]), ProblemSpec(BAI, 5)),
        (unstructured_instance([1.0, 0.8, 0.5, 0.3, 0.1]), ProblemSpec(TOPM, 5, 2)),
        (gen_unstructured(3, task=OSI, K=4), ProblemSpec(OSI, 4)),
    ]
    thr = Threshold(delta)
    for inst, spec in setups:
        for rule in rules:
            for s in range(n_seeds):
                res = paired_naive_run(inst, spec, thr, rule, seed=1000 + s)
                if res["efficient"] != res["naive"]:
                    return False
    return True


def replay_sampling_sets(n_arms: int, test_log: list, schedule: ResetSchedule,
                         t: int) -> set:
    """Brute-force surviving-arm set: intersection of per-step test
    survivors since the second-last reset. ``test_log`` holds
    (t, surviving arm set); arms not tested at a step survive it.
    """
    resets = schedule.reset_times(t)
    start = resets[-2] if len(resets) >= 2 else 1
    active = set(range(n_arms))
    for (s, survivors) in test_log:
        if start <= s <= t:
            active &= survivors
    return active


def check_reset_mechanics(tbar0: int = 2, horizon: int = 300) -> dict:
    """Drive sampling sets on a scripted trajectory; verify reset times and
    the intersection identity against brute-force replay at every step.

    The script eliminates arm 1 early under a huge empirical gap, then
    flips the empirical answer to the unpulled arm 2 so no further tests
    fire; the stored pre-reset set keeps arm 1 out until the reset at 256
    revives it.
    """
    inst = unstructured_instance([0.5, 0.2, -0.3])
    spec = ProblemSpec(BAI, 3)
    thr = Threshold(0.1, stopping_mod.THEORY, c1=2.0, c2=2.0)
    schedule = ResetSchedule(tbar0)
    sets = SamplingSets(spec, "selective", schedule)
    stats = Statistics(inst)
    stats.update(0, 8.0)
    stats.update(1, -8.0)  # start at t = 2 so the first reset fires
    all_arms = set(range(inst.K))
    test_log = []
    ident_ok = True
    n_eliminations = 0
    n_revivals = 0
    prev = None
    for t in range(2, horizon + 1):
        ev = PieceEvaluator.from_stats(spec, stats)
        i_hat = answer_of(spec, ev.means)
        a = stopping_mod.alpha(thr, t)
        pieces = pieces_of(spec, i_hat)
        vals = ev.values(i_hat, pieces)
        fired = {p for p, v in zip(pieces, vals) if v >= a}
        test_log.append((t, all_arms - fired))
        sets.step(ev, i_hat, t, a)
        cur = set(sets.active_pieces(i_hat))
        expected = replay_sampling_sets(inst.K, test_log, schedule, t) - {i_hat}
        if cur != expected:
            ident_ok = False
        if prev is not None:
            n_eliminations += len(prev - cur)
            n_revivals += len(cur - prev)
        prev = cur
        # big early gap, then crash arm 0 so the empirical answer moves to
        # the never-pulled arm 2 and no further elimination can fire
        arm = t % 2
        if t < 14:
            x = 8.0 if arm == 0 else -8.0
        elif t == 14:
            x = -200.0 if arm == 0 else 0.0
        else:
            x = 0.0
        stats.update(arm, x)
    resets_ok = sets.resets_done == schedule.reset_times(horizon)
    return {"resets_ok": resets_ok, "identity_ok": ident_ok,
            "resets": sets.resets_done, "eliminations": n_eliminations,
            "revivals": n_revivals}
