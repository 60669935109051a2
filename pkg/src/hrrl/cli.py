"""Command line entry point: ``hrrl {train,heatmap,verify,eval}``."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import oracle, verify
from .approx import FeedForwardNet, NetFormatError
from .config import ConfigError, RunConfig, format_config, load_config
from .learner import LearnerState, train
from .runlog import RunLog, fmt
from .world import initial_state, points_in_polygon

log = logging.getLogger("hrrl")

HEATMAP_BOX = ((1.0, 9.0), (0.0, 6.0))
N_SUMMARY_WINDOWS = 20


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    over = {}
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "steps", None) is not None and args.command == "train":
        over["steps"] = args.steps
    if over:
        cfg = cfg.replace(**over)
        cfg.validate()
    return cfg


def _learner_from_nets(cfg: RunConfig, f_path, j_path) -> LearnerState:
    ls = LearnerState.create(cfg)
    ls.f_net = FeedForwardNet.load(f_path)
    ls.j_net = FeedForwardNet.load(j_path)
    ls.epsilon = 0.0
    return ls


# ----------------------------------------------------------------------
# train


def window_means(values: np.ndarray, n_windows: int = N_SUMMARY_WINDOWS) -> list[tuple[int, int, float]]:
    """(first step, last step, mean) over equal consecutive windows, 1-based steps."""
    n = len(values)
    edges = np.linspace(0, n, min(n_windows, n) + 1).round().astype(int)
    return [(int(a) + 1, int(b), float(values[a:b].mean())) for a, b in zip(edges[:-1], edges[1:])]


def cmd_train(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    every = int(os.environ.get("HRRL_LOG_EVERY", "1") or 1)
    ls = LearnerState.create(cfg)
    _, ls, runlog = train(initial_state(cfg), ls, cfg.steps, cfg, runlog=RunLog(cfg.steps))
    with open(out / "runlog.csv", "w", newline="") as fh:
        runlog.write_csv(fh, every)
    ls.f_net.save(out / "f_net.bin")
    ls.j_net.save(out / "j_net.bin")
    (out / "config.txt").write_text(format_config(cfg))
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window", "first_step", "last_step", "mean_drive"])
        for i, (a, b, m) in enumerate(window_means(runlog.column("drive"))):
            w.writerow([i + 1, a, b, fmt(m)])
    print(f"trained {cfg.steps} steps; numeric anomalies: {ls.anomalies}")
    return 0


# ----------------------------------------------------------------------
# heatmap


def heatmap_rows(j_value, deprived: int, nx: int, ny: int, cfg: RunConfig) -> list[tuple[float, float, float]]:
    """Evaluate ``j_value`` on cell centres of an nx by ny grid over the arena box.

    The probe state has resource ``deprived`` fully depleted, every other
    internal deviation zero and heading 0. Cells outside the arena get nan.
    """
    if not 1 <= deprived <= 4:
        raise ValueError("deprived index must be 1..4")
    if nx < 1 or ny < 1:
        raise ValueError("grid must be at least 1 x 1")
    (x0, x1), (y0, y1) = HEATMAP_BOX
    xs = x0 + (np.arange(nx) + 0.5) * (x1 - x0) / nx
    ys = y0 + (np.arange(ny) + 0.5) * (y1 - y0) / ny
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    zeta = np.zeros((len(pts), 9))
    zeta[:, deprived - 1] = -cfg.x_star[deprived - 1]
    zeta[:, 6:8] = pts
    values = np.asarray(j_value(zeta), dtype=float)
    values[~points_in_polygon(pts, cfg.arena)] = np.nan
    return [(float(p[0]), float(p[1]), float(v)) for p, v in zip(pts, values)]


def heatmap_argmin(rows) -> tuple[float, float]:
    best = min((r for r in rows if not math.isnan(r[2])), key=lambda r: r[2])
    return best[0], best[1]


def write_heatmap(fh, rows) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["x", "y", "J"])
    for x, y, j in rows:
        w.writerow([fmt(x), fmt(y), "nan" if math.isnan(j) else fmt(j)])


def cmd_heatmap(args) -> int:
    cfg = _config(args)
    ls = LearnerState.create(cfg)
    ls.j_net = FeedForwardNet.load(args.j_net)
    rows = heatmap_rows(ls.j_value, args.deprived, args.grid[0], args.grid[1], cfg)
    if args.out in (None, "-"):
        write_heatmap(sys.stdout, rows)
    else:
        with open(args.out, "w", newline="") as fh:
            write_heatmap(fh, rows)
    return 0


# ----------------------------------------------------------------------
# verify


def cmd_verify(args) -> int:
    cfg = _config(args)
    results = verify.run_all(cfg)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}")
    ok = verify.all_passed(results)
    print("all checks passed" if ok else "some checks FAILED")
    return 0 if ok else 1


# ----------------------------------------------------------------------
# eval

EVAL_COLUMNS = ("episode", "policy", "start_x", "start_y", "start_heading", "mean_drive",
                "consume_1", "consume_2", "consume_3", "consume_4", "sleep_episodes", "oracle_J")


def evaluate_policies(policies, n_episodes: int, steps: int, cfg: RunConfig, seed: int,
                      oracle_j: bool = True) -> list[list]:
    """Rows of EVAL_COLUMNS for every (episode, policy)."""
    if n_episodes <= 0:
        return []
    starts = oracle.sample_start_states(np.random.default_rng([seed, 11]), n_episodes, cfg)
    rows = []
    for p in policies:
        stats = oracle.rollout_stats(starts, p, steps, cfg)
        if oracle_j:
            js = oracle.integrate(starts, [p] * len(starts), [cfg.gamma], cfg.dt_oracle, cfg.horizon_tol, cfg).J[:, 0]
        else:
            js = np.full(len(starts), np.nan)
        for i, (s, st) in enumerate(zip(starts, stats)):
            rows.append([i, p.name, s.zeta.pos_x, s.zeta.pos_y, s.zeta.heading, st.mean_drive,
                         *st.consume_events, st.sleep_episodes, js[i]])
    return rows


def cmd_eval(args) -> int:
    cfg = _config(args)
    nets = Path(args.nets)
    ls = _learner_from_nets(cfg, nets / "f_net.bin", nets / "j_net.bin")
    policies = [oracle.GreedyPolicy(ls), oracle.RandomPolicy(cfg.seed)]
    rows = evaluate_policies(policies, args.episodes, args.steps or 2000, cfg, cfg.seed,
                             oracle_j=not args.no_oracle)
    fh = sys.stdout if args.out in (None, "-") else open(args.out, "w", newline="")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVAL_COLUMNS)
        for r in rows:
            w.writerow([r[0], r[1], *(fmt(v) for v in r[2:6]), *r[6:11],
                        "nan" if math.isnan(r[11]) else fmt(r[11])])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hrrl", description="Continuous-time homeostatic RL agent")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", metavar="PATH", help="key = value config file (defaults if omitted)")
        sp.add_argument("--seed", type=int, help="override the config seed")

    t = sub.add_parser("train", help="run the learning loop and write logs and nets")
    common(t)
    t.add_argument("--out", required=True, metavar="DIR")
    t.add_argument("--steps", type=int, help="override the number of training steps")
    t.set_defaults(func=cmd_train)

    h = sub.add_parser("heatmap", help="evaluate a trained J over the arena")
    common(h)
    h.add_argument("--j-net", required=True, metavar="PATH")
    h.add_argument("--deprived", type=int, required=True, choices=(1, 2, 3, 4))
    h.add_argument("--grid", type=int, nargs=2, default=(32, 24), metavar=("NX", "NY"))
    h.add_argument("--out", metavar="PATH", help="CSV path, stdout if omitted")
    h.set_defaults(func=cmd_heatmap)

    v = sub.add_parser("verify", help="run the built-in consistency checks")
    common(v)
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("eval", help="score greedy and random rollouts")
    common(e)
    e.add_argument("--nets", required=True, metavar="DIR", help="directory with f_net.bin and j_net.bin")
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--steps", type=int, help="steps per episode (default 2000)")
    e.add_argument("--no-oracle", action="store_true", help="skip the oracle J column")
    e.add_argument("--out", metavar="PATH", help="CSV path, stdout if omitted")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, NetFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
