"""Scratch harness for calibrating environment constants (not shipped)."""

from __future__ import annotations

import sys
import time

import numpy as np

import madlab.policy as P
import madlab.optim as O
from madlab.debate import ensemble_answer
from madlab.metrics import MetricConfig, full_profile
from madlab.rewards import CoefficientSet

MCFG = MetricConfig()


def evaluate(env, questions, policies, eval_tag="eval"):
    rows = []
    for q in questions:
        traj = env.rollout_debate(q, policies, P.derive_key(env.config.seed, eval_tag, q.question_id))
        prof = full_profile(traj, MCFG)
        rows.append((ensemble_answer(traj) == q.ground_truth, prof))
    acc = np.mean([r[0] for r in rows])
    usys = np.mean([r[1].u_sys for r in rows])
    uintra = np.mean([r[1].u_intra for r in rows])
    uinter = np.mean([r[1].u_inter for r in rows])
    return acc, usys, uintra, uinter, rows


def separation(rows):
    fail = np.array([p.u_sys for ok, p in rows if not ok])
    succ = np.array([p.u_sys for ok, p in rows if ok])
    if len(fail) < 2 or len(succ) < 2:
        return float("nan")
    nf, ns = len(fail), len(succ)
    pooled = np.sqrt(((nf - 1) * fail.var(ddof=1) + (ns - 1) * succ.var(ddof=1)) / (nf + ns - 2))
    return (fail.mean() - succ.mean()) / pooled


def selective_gain(rows):
    order = np.argsort([p.u_sys for ok, p in rows], kind="stable")
    correct = np.array([ok for ok, p in rows])[order]
    half = int(np.ceil(len(rows) * 0.5))
    return correct[:half].mean() - correct.mean()


def run_seed(seed, iters=200, train_n=500, eval_n=200, do_train=True):
    env = P.DebateEnv(P.EnvConfig(seed=seed))
    train_qs = env.generate_questions(train_n, "train")
    eval_qs = env.generate_questions(eval_n, "eval")
    pols0 = env.initial_policies()
    acc0, usys0, ui0, ue0, rows0 = evaluate(env, eval_qs, pols0)
    d = separation(rows0)
    sel = selective_gain(rows0)
    out = dict(acc0=acc0, usys0=usys0, d=d, sel=sel)
    if do_train:
        t0 = time.time()
        state, _ = O.train(env, train_qs, CoefficientSet.uniform(5), O.ClipConfig(iterations=iters), MCFG, seed=seed)
        acc1, usys1, ui1, ue1, rows1 = evaluate(env, eval_qs, state.policies)
        out.update(acc1=acc1, usys1=usys1, dacc=acc1 - acc0,
                   usys_drop=(usys0 - usys1) / usys0 if usys0 else float("nan"),
                   secs=time.time() - t0)
    return out


if __name__ == "__main__":
    seeds = [int(s) for s in sys.argv[1:]] or [0]
    for s in seeds:
        r = run_seed(s)
        print(
            f"seed {s}: acc0={r['acc0']:.3f} usys0={r['usys0']:.3f} d={r['d']:.2f} sel=+{r['sel']*100:.1f}pp"
            + (f" | acc1={r['acc1']:.3f} usys1={r['usys1']:.3f} dacc=+{r['dacc']*100:.1f}pp drop={r['usys_drop']*100:.0f}% ({r['secs']:.0f}s)"
               if "acc1" in r else "")
        )
