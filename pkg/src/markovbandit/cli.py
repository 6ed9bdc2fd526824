"""Command-line experiment runner.

Every subcommand reads one JSON config and writes CSV/JSONL artifacts plus a
``summary.json`` into the output directory::

    markovbandit learn --config runs/example1.json --out runs/ex1
    markovbandit report --out runs/ex1

Exit status is 0 on success, 2 for a bad config and 3 when a solver fails.
"""

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from markovbandit import __version__
from markovbandit.average import AverageLearner, DivergenceError
from markovbandit.core import ModelError, model_from_dict
from markovbandit.discounted import DiscountedLearner
from markovbandit.environments import (
    ConstrainedProblem,
    MissingObjective,
    assemble_game,
    preset,
    shift_rewards,
)
from markovbandit.evaluation import (
    BracketInvalid,
    Verdict,
    bisect_delta,
    feasibility_verdict,
    mc_constraint_values,
)
from markovbandit.oracle import (
    IterationBudgetExceeded,
    cmdp_lp_discounted,
    feasibility_value,
    fixed_point_discounted,
    rvi_average,
)

log = logging.getLogger("markovbandit")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3
ALGORITHMS = ("discounted", "average", "oracle-fixed-point", "oracle-rvi", "oracle-lp")
SCHEMA = 1

# stream ids for seed derivation
LEARNER, EVALUATOR = 0, 1


class ConfigError(ValueError):
    def __init__(self, field_name, message):
        super().__init__(f"config field {field_name!r}: {message}")
        self.field = field_name


class SolverError(RuntimeError):
    pass


def derive_seed(root: int, *key: int) -> np.random.SeedSequence:
    """Independent stream ``key`` of the root seed (counter-based, order free)."""
    return np.random.SeedSequence(root, spawn_key=tuple(key))


# -- config -------------------------------------------------------------------

@dataclass
class EvaluationConfig:
    n_traj: int = 10_000
    n_traj_checkpoint: int = 200
    every: int = 0
    tol: float = 1e-3
    margin: float = 0.05
    horizon: int | None = None  # average criterion only


@dataclass
class ExperimentConfig:
    environment: object = "example1"
    environment_options: dict = field(default_factory=dict)
    algorithm: str = "discounted"
    steps: int = 5000
    seeds: list = field(default_factory=lambda: [0])
    eps: float = 0.05
    eps_floor: float = 0.01
    snapshot_every: int = 100
    delta: float | None = None
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    bisection: dict | None = None
    out: str | None = None


def _number(doc, key, kind, default, minimum=None):
    value = doc.get(key, default)
    if value is None:
        return None
    try:
        value = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected {kind.__name__}, got {value!r}") from None
    if minimum is not None and value < minimum:
        raise ConfigError(key, f"must be >= {minimum}, got {value}")
    return value


def parse_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    known = set(ExperimentConfig.__dataclass_fields__) | {"seed", "K", "explore"}
    for key in doc:
        if key not in known:
            raise ConfigError(key, "unknown field")
    cfg = ExperimentConfig()
    cfg.environment = doc.get("environment", cfg.environment)
    if not isinstance(cfg.environment, (str, dict)):
        raise ConfigError("environment", "expected a preset name or an inline model document")
    cfg.environment_options = doc.get("environment_options", {})
    if not isinstance(cfg.environment_options, dict):
        raise ConfigError("environment_options", "expected an object")
    cfg.algorithm = doc.get("algorithm", cfg.algorithm)
    if cfg.algorithm not in ALGORITHMS:
        raise ConfigError("algorithm", f"unknown algorithm {cfg.algorithm!r}; choose from {list(ALGORITHMS)}")
    cfg.steps = _number(doc, "K" if "K" in doc else "steps", int, cfg.steps, 0)
    if "seed" in doc:
        seeds = [doc["seed"]]
    else:
        seeds = doc.get("seeds", cfg.seeds)
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds", "expected a nonempty list of integers")
    try:
        cfg.seeds = [int(s) for s in seeds]
    except (TypeError, ValueError):
        raise ConfigError("seeds", f"expected integers, got {seeds!r}") from None
    if any(s < 0 for s in cfg.seeds):
        raise ConfigError("seeds", "seeds must be nonnegative")
    explore = doc.get("explore", {})
    if not isinstance(explore, dict):
        raise ConfigError("explore", "expected an object with eps and floor")
    cfg.eps = _number(explore, "eps", float, cfg.eps, 0.0)
    cfg.eps_floor = _number(explore, "floor", float, cfg.eps_floor, 0.0)
    cfg.snapshot_every = _number(doc, "snapshot_every", int, cfg.snapshot_every, 0)
    cfg.delta = _number(doc, "delta", float, None)
    ev = doc.get("evaluation", {})
    if not isinstance(ev, dict):
        raise ConfigError("evaluation", "expected an object")
    cfg.evaluation = EvaluationConfig(
        n_traj=_number(ev, "n_traj", int, 10_000, 1),
        n_traj_checkpoint=_number(ev, "n_traj_checkpoint", int, 200, 2),
        every=_number(ev, "every", int, 0, 0),
        tol=_number(ev, "tol", float, 1e-3, 1e-12),
        margin=_number(ev, "margin", float, 0.05, 0.0),
        horizon=_number(ev, "horizon", int, None, 1),
    )
    bis = doc.get("bisection")
    if bis is not None:
        if isinstance(bis, list) and len(bis) in (2, 3):
            bis = dict(zip(("delta_lo", "delta_hi", "delta_tol"), bis))
        if not isinstance(bis, dict) or "delta_lo" not in bis or "delta_hi" not in bis:
            raise ConfigError("bisection", "expected [lo, hi] or {delta_lo, delta_hi, delta_tol}")
        cfg.bisection = {
            "delta_lo": _number(bis, "delta_lo", float, None),
            "delta_hi": _number(bis, "delta_hi", float, None),
            "delta_tol": _number(bis, "delta_tol", float, 0.01, 1e-12),
        }
    out = doc.get("out")
    cfg.out = None if out is None else str(out)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"not valid JSON ({exc.msg} at line {exc.lineno})") from None
    return parse_config(doc)


def build_environment(cfg: ExperimentConfig):
    """Return (problem, game). ``problem`` is what the evaluator audits."""
    env = cfg.environment
    if isinstance(env, dict):
        try:
            model = model_from_dict(env.get("model", env))
        except ModelError as exc:
            raise ConfigError("environment", str(exc)) from None
        if cfg.delta is not None:
            raise ConfigError("delta", "shifting needs a preset environment with an objective")
        return model, model
    try:
        problem = preset(env, **cfg.environment_options)
    except KeyError as exc:
        raise ConfigError("environment", exc.args[0]) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError("environment_options", str(exc)) from None
    if cfg.delta is not None:
        try:
            problem = shift_rewards(problem, cfg.delta)
        except MissingObjective as exc:
            raise ConfigError("delta", str(exc)) from None
    return problem, assemble_game(problem)


# -- artifacts ----------------------------------------------------------------

class CsvOut:
    """CSV with a versioned schema comment on the first line and the header after it."""

    def __init__(self, path, name, columns, note=""):
        self.fh = open(path, "w", newline="")
        self.fh.write(f"# markovbandit {name} schema {SCHEMA}{'; ' + note if note else ''}\n")
        self.writer = csv.writer(self.fh, lineterminator="\n")
        self.writer.writerow(columns)

    def row(self, values):
        self.writer.writerow(["" if v is None else _cell(v) for v in values])

    def close(self):
        self.fh.close()


def _cell(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not np.isfinite(v):
            raise SolverError(f"non-finite value {v} in artifact")
        return repr(v)
    return str(v)


def read_csv(path):
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return np.asarray(x, dtype=float).tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, Verdict):
        return x.value
    raise TypeError(f"cannot serialize {type(x).__name__}")


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


# -- learning -----------------------------------------------------------------

AVERAGE_HORIZON = 1000


def _evaluate(problem, policy, n_traj, ev, seed):
    if problem.gamma is None:
        # time averages are costly: audit with the checkpoint count over a fixed window
        return mc_constraint_values(problem, policy, n_traj=min(n_traj, ev.n_traj_checkpoint),
                                    tol=ev.tol, seed=seed, horizon=ev.horizon or AVERAGE_HORIZON)
    return mc_constraint_values(problem, policy, n_traj=n_traj, tol=ev.tol, seed=seed)


def learn_one(cfg, problem, game, seed, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    average = cfg.algorithm == "average"
    if average != (not game.discounted):
        raise ConfigError("algorithm", f"{cfg.algorithm!r} does not match the environment's "
                          f"{'average' if game.gamma is None else 'discounted'} criterion")
    cls = AverageLearner if average else DiscountedLearner
    learner = cls(game, eps=cfg.eps, eps_floor=cfg.eps_floor, seed=derive_seed(seed, LEARNER))
    ev = cfg.evaluation
    trace = CsvOut(out / "trace.csv", "trace",
                   ["step", "s", "a", "o", "alpha_or_beta", "q_updated_value", "f_value"])
    cons = CsvOut(out / "constraints.csv", "constraints",
                  ["step", "constraint_index", "mean", "half_width"])
    snaps = open(out / "snapshots.jsonl", "w")
    checkpoint = 0

    def snapshot():
        rec = {"step": learner.k, "Q": learner.Q.tolist(), "policy": learner.policy().tolist()}
        if average:
            rec["f"] = learner.f
        snaps.write(json.dumps(rec) + "\n")

    def evaluate(n_traj):
        nonlocal checkpoint
        est = _evaluate(problem, learner.policy(), n_traj, ev, derive_seed(seed, EVALUATOR, checkpoint))
        checkpoint += 1
        for j, e in enumerate(est):
            cons.row([learner.k, j, e.mean, e.half_width])
        return est

    t0 = time.perf_counter()
    final = None
    try:
        snapshot()
        for k in range(1, cfg.steps + 1):
            rec = learner.step()
            trace.row([rec.step, rec.state, rec.action, rec.opponent, float(rec.rate),
                       float(rec.q_value), rec.f_value])
            if k == cfg.steps:
                break
            if cfg.snapshot_every and k % cfg.snapshot_every == 0:
                snapshot()
            if ev.every and k % ev.every == 0 and not average:
                evaluate(ev.n_traj_checkpoint)
        if cfg.steps:
            snapshot()
        final = evaluate(ev.n_traj)
    finally:
        trace.close()
        cons.close()
        snaps.close()
    verdict = feasibility_verdict(final, ev.margin)
    summary = {
        "version": __version__,
        "environment": cfg.environment if isinstance(cfg.environment, str) else "inline",
        "algorithm": cfg.algorithm,
        "seed": seed,
        "steps": cfg.steps,
        "delta": cfg.delta,
        "verdict": verdict,
        "constraints": [{"mean": e.mean, "half_width": e.half_width, "n_trajectories": e.n_trajectories,
                         "horizon": e.horizon} for e in final],
        "final_policy": learner.policy(),
        "wall_time_s": round(time.perf_counter() - t0, 3),
    }
    if average:
        summary["gain_estimate"] = learner.f
    write_json(out / "summary.json", summary)
    return summary


def cmd_learn(cfg, out: Path):
    if cfg.algorithm not in ("discounted", "average"):
        raise ConfigError("algorithm", "learn runs the 'discounted' or 'average' learner")
    problem, game = build_environment(cfg)
    if len(cfg.seeds) == 1:
        summary = learn_one(cfg, problem, game, cfg.seeds[0], out)
        log.info("seed %d: %s", cfg.seeds[0], summary["verdict"].value)
        return
    verdicts = {}
    for seed in cfg.seeds:
        summary = learn_one(cfg, problem, game, seed, out / f"seed_{seed}")
        verdicts[str(seed)] = summary["verdict"]
        log.info("seed %d: %s", seed, summary["verdict"].value)
    write_json(out / "summary.json", {
        "version": __version__, "environment": cfg.environment if isinstance(cfg.environment, str)
        else "inline", "algorithm": cfg.algorithm, "seeds": cfg.seeds, "verdicts": verdicts})


# -- oracles, evaluation and bisection -----------------------------------------

def cmd_oracle(cfg, out: Path):
    if cfg.bisection is not None:
        return cmd_bisect(cfg, out)
    problem, game = build_environment(cfg)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    summary = {"version": __version__, "algorithm": cfg.algorithm, "delta": cfg.delta,
               "environment": cfg.environment if isinstance(cfg.environment, str) else "inline"}
    if cfg.algorithm == "oracle-fixed-point":
        Q, policy = fixed_point_discounted(game)
        summary.update(Q=Q, policy=policy, value=feasibility_value(game))
    elif cfg.algorithm == "oracle-rvi":
        sol = rvi_average(game)
        summary.update(Q=sol.Q_star, policy=sol.policy, v_star=sol.v_star, H_star=sol.H_star,
                       value=float(sol.v_star.min()))
    elif cfg.algorithm == "oracle-lp":
        if not isinstance(problem, ConstrainedProblem):
            raise ConfigError("environment", "oracle-lp needs a preset constrained problem")
        sol = cmdp_lp_discounted(problem)
        summary.update(feasible=sol.feasible, value=sol.value, policy=sol.policy,
                       occupancy=sol.occupancy)
    else:
        raise ConfigError("algorithm", "oracle needs oracle-fixed-point, oracle-rvi or oracle-lp")
    summary["wall_time_s"] = round(time.perf_counter() - t0, 3)
    write_json(out / "summary.json", summary)
    log.info("value %s", summary.get("value"))


def _load_policy(out: Path):
    path = out / "snapshots.jsonl"
    if not path.exists():
        raise ConfigError("--out", f"no snapshots.jsonl in {out} to take a policy from")
    last = None
    with open(path) as fh:
        for line in fh:
            if line.strip():
                last = line
    return np.array(json.loads(last)["policy"])


def cmd_evaluate(cfg, out: Path):
    """Audit the final policy stored in ``out`` (or a uniform policy when there is none)."""
    problem, game = build_environment(cfg)
    try:
        policy = _load_policy(out)
    except ConfigError:
        policy = np.full((game.n_states, game.n_actions), 1.0 / game.n_actions)
        log.info("no stored policy; evaluating the uniform policy")
    if policy.shape != (game.n_states, game.n_actions):
        raise ConfigError("--out", f"stored policy has shape {policy.shape}, "
                          f"environment needs {(game.n_states, game.n_actions)}")
    out.mkdir(parents=True, exist_ok=True)
    ev = cfg.evaluation
    est = _evaluate(problem, policy, ev.n_traj, ev, derive_seed(cfg.seeds[0], EVALUATOR))
    cons = CsvOut(out / "evaluation.csv", "evaluation",
                  ["constraint_index", "mean", "half_width", "n_trajectories", "horizon"])
    for j, e in enumerate(est):
        cons.row([j, e.mean, e.half_width, e.n_trajectories, e.horizon])
    cons.close()
    verdict = feasibility_verdict(est, ev.margin)
    write_json(out / "evaluation.json", {"version": __version__, "verdict": verdict,
                                         "seed": cfg.seeds[0], "delta": cfg.delta})
    log.info("verdict %s", verdict.value)


def make_solver(cfg, base_problem):
    """Map a delta to a verdict using the configured algorithm."""
    ev = cfg.evaluation

    def lp(delta):
        ok = cmdp_lp_discounted(shift_rewards(base_problem, delta)).feasible
        return Verdict.FEASIBLE if ok else Verdict.INFEASIBLE

    def fixed_point(delta):
        v = feasibility_value(assemble_game(shift_rewards(base_problem, delta)))
        return Verdict.FEASIBLE if v >= 0 else Verdict.INFEASIBLE

    def learner(delta):
        problem = shift_rewards(base_problem, delta)
        game = assemble_game(problem)
        seed = cfg.seeds[0]
        lrn = DiscountedLearner(game, eps=cfg.eps, eps_floor=cfg.eps_floor,
                                seed=derive_seed(seed, LEARNER))
        for _ in range(cfg.steps):
            lrn.step()
        est = _evaluate(problem, lrn.policy(), ev.n_traj, ev, derive_seed(seed, EVALUATOR))
        return feasibility_verdict(est, ev.margin)

    solvers = {"oracle-lp": lp, "oracle-fixed-point": fixed_point, "discounted": learner}
    if cfg.algorithm not in solvers:
        raise ConfigError("algorithm", f"bisection supports {sorted(solvers)}")
    return solvers[cfg.algorithm]


def cmd_bisect(cfg, out: Path):
    if cfg.bisection is None:
        raise ConfigError("bisection", "missing; expected [delta_lo, delta_hi]")
    if cfg.delta is not None:
        raise ConfigError("delta", "cannot be combined with bisection")
    problem, _ = build_environment(cfg)
    if not isinstance(problem, ConstrainedProblem) or problem.objective is None:
        raise ConfigError("environment", "bisection needs a preset with an objective (e.g. queue)")
    if problem.gamma is None:
        raise ConfigError("environment_options", "bisection supports the discounted criterion")
    solver = make_solver(cfg, problem)
    b = cfg.bisection
    t0 = time.perf_counter()
    try:
        delta_star, history = bisect_delta(solver, b["delta_lo"], b["delta_hi"], b["delta_tol"])
    except BracketInvalid as exc:
        raise ConfigError("bisection", str(exc)) from None
    out.mkdir(parents=True, exist_ok=True)
    rows = CsvOut(out / "bisection.csv", "bisection", ["delta", "verdict"])
    for d, v in history:
        rows.row([float(d), v.value])
    rows.close()
    write_json(out / "summary.json", {
        "version": __version__, "algorithm": cfg.algorithm, "delta_star": delta_star,
        "bisection": b, "verdicts": [[d, v] for d, v in history], "seed": cfg.seeds[0],
        "wall_time_s": round(time.perf_counter() - t0, 3)})
    log.info("delta* = %.6f", delta_star)


# -- report -------------------------------------------------------------------

def _snapshots(run: Path):
    with open(run / "snapshots.jsonl") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _run_dirs(out: Path):
    if (out / "snapshots.jsonl").exists():
        return [out]
    dirs = sorted((p for p in out.glob("seed_*") if (p / "snapshots.jsonl").exists()),
                  key=lambda p: int(p.name.split("_")[1]))
    if not dirs:
        raise ConfigError("--out", f"{out} holds no learning run (snapshots.jsonl)")
    return dirs


def emit_report(out: Path) -> list[Path]:
    """Write plot-ready CSVs derived from the run artifacts in ``out``."""
    out = Path(out)
    runs = _run_dirs(out)
    written = []
    first = _snapshots(runs[0])
    Q0 = np.array(first[0]["Q"])
    if Q0.shape == (1, 2, 2):
        rows = CsvOut(out / "fig1.csv", "fig1", ["step", "Q11", "Q12", "Q21", "Q22"])
        for snap in first:
            q = np.array(snap["Q"])[0]
            rows.row([snap["step"], q[0, 0], q[0, 1], q[1, 0], q[1, 1]])
        rows.close()
        written.append(out / "fig1.csv")
    if Q0.shape[0] == 1:
        # worst seed of the l1 distance between the learned strategy and uniform play
        per_run = [{s["step"]: np.abs(np.array(s["policy"])[0] - 1 / Q0.shape[1]).sum()
                    for s in _snapshots(r)} for r in runs]
        steps = sorted(set.intersection(*(set(d) for d in per_run)))
        rows = CsvOut(out / "fig2.csv", "fig2", ["step", "l1_error"],
                      note="l1_error = max over seeds of sum_j |p_hat_j - 1/n|")
        for k in steps:
            rows.row([k, max(float(d[k]) for d in per_run)])
        rows.close()
        written.append(out / "fig2.csv")
    for run in runs:
        summary_path = run / "summary.json"
        cons_path = run / "constraints.csv"
        if not summary_path.exists() or not cons_path.exists():
            continue
        delta = json.loads(summary_path.read_text()).get("delta")
        if delta is None:
            continue
        table = {}
        n_con = 0
        for r in read_csv(cons_path):
            j = int(r["constraint_index"])
            n_con = max(n_con, j + 1)
            table.setdefault(int(r["step"]), {})[j] = float(r["mean"])
        name = f"fig3_{delta:g}.csv" if run == out else f"fig3_{delta:g}_{run.name}.csv"
        rows = CsvOut(out / name, "fig3", ["step"] + [f"c{j}" for j in range(n_con)])
        for k in sorted(table):
            rows.row([k] + [table[k].get(j) for j in range(n_con)])
        rows.close()
        written.append(out / name)
    return written


# -- entry point --------------------------------------------------------------

COMMANDS = {"learn": cmd_learn, "oracle": cmd_oracle, "evaluate": cmd_evaluate,
            "bisect": cmd_bisect}


def build_parser():
    parser = argparse.ArgumentParser(prog="markovbandit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("learn", "oracle", "evaluate", "bisect", "report"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON experiment config", required=name != "report")
        p.add_argument("--out", help="output directory (overrides the config's 'out')")
        p.add_argument("--seed", type=int, help="root seed (overrides the config's seeds)")
        p.add_argument("--quiet", action="store_true", help="only report errors")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    try:
        if args.command == "report":
            if args.out is None and args.config is None:
                raise ConfigError("--out", "report needs the run directory")
            out = Path(args.out) if args.out else Path(load_config(args.config).out or ".")
            for path in emit_report(out):
                log.info("wrote %s", path)
            return EXIT_OK
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed", "must be nonnegative")
            cfg.seeds = [args.seed]
        out = args.out or cfg.out
        if out is None:
            raise ConfigError("out", "no output directory; pass --out or set 'out'")
        COMMANDS[args.command](cfg, Path(out))
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (IterationBudgetExceeded, DivergenceError, SolverError, RuntimeError,
            FloatingPointError) as exc:
        log.error("solver error: %s", exc)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
