"""
Command-line surface: optimize, simulate, rollout, plan, compare and --reproduce
"""

import argparse
import json
import logging
import os
import re
import sys
from pathlib import Path
from typing import Any, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .common.logger import reset_logger_config, reset_package_loggers
from .core import CountTensor, EstimatorConfig, missing_information
from .environments import EnvironmentBundle, build_example, load_environment, render_ascii
from .exceptions import CapacityError, ControlSetError, EnvironmentFormatError, NumericError
from .export import (
    load_counts,
    save_counts,
    write_cem_trace_csv,
    write_curve_csv,
    write_json,
    write_trajectory_csv,
)
from .measures import InfoMeasure
from .optimizer import CemConfig, OptimizerResult, ParamSpace, cem_optimize, exhaustive_search
from .planner import DEFAULT_DISCOUNT, PlanningProblem, plan_exit
from .policies import (
    ControlSetParams,
    GreedyPolicy,
    ParametricPolicy,
    ParamShape,
    Policy,
    RandomPolicy,
    initial_control_sets,
)
from .rollout import RolloutConfig, RolloutPolicy
from .simulator import (
    ObjectiveEstimate,
    SimConfig,
    Trajectory,
    continue_exploration,
    mean_missing_information_curve,
    run_many,
)
from .utils import get_fixture_path, get_package_version, list_fixtures, normalized_fixture_name

__all__ = ["ExperimentConfig", "PlanConfig", "main", "parse_param_space", "parse_vector"]

logger = logging.getLogger(__name__)
reset_logger_config(logger)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3

_EXAMPLE_NAME = re.compile(r"^example([1-6])$")


class PlanConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    # 1-based goal state; the environment's own goal when omitted
    goal: Optional[int] = Field(default=None, ge=1)
    discount: float = Field(default=DEFAULT_DISCOUNT, gt=0.0, lt=1.0)
    model: Optional[Path] = None
    variant: Optional[str] = None


class ExperimentConfig(BaseModel):
    """Everything one command needs; builtin experiments ship as JSON documents of this model"""

    model_config = ConfigDict(extra="forbid")

    name: str = "experiment"
    env: Optional[str] = None
    env_file: Optional[Path] = None
    variant: Optional[str] = None
    p: float = Field(default=0.0, ge=0.0, le=1.0)
    policy: Literal["parametric", "optimize", "greedy", "random"] = "optimize"
    r: Optional[tuple[int, ...]] = None
    param_space: Optional[str] = None
    horizon: int = Field(ge=1)
    method: Literal["exhaustive", "cem"] = "exhaustive"
    trajectories: int = Field(default=1, ge=1)
    rollout_trajectories: Optional[int] = Field(default=None, ge=1)
    # None: 1 on deterministic runs, 100 otherwise
    rollouts_per_control: Optional[int] = Field(default=None, ge=1)
    seed: int = Field(default=0, ge=0)
    alpha: float = Field(default=0.05, gt=0.0)
    cem: CemConfig = Field(default_factory=CemConfig)
    plan: Optional[PlanConfig] = None
    out: Optional[Path] = None

    @model_validator(mode="after")
    def _check_references(self) -> "ExperimentConfig":
        if (self.env is None) == (self.env_file is None):
            raise ValueError("Exactly one of `env` and `env_file` is required")
        if self.env is not None and not _EXAMPLE_NAME.match(normalized_fixture_name(self.env)):
            raise ValueError(f"Unknown builtin environment `{self.env}`. Expected example1..example6")
        if self.env_file is not None and not self.env_file.is_file():
            raise ValueError(f"Environment file `{self.env_file}` does not exist")
        if self.policy == "parametric" and self.r is None:
            raise ValueError("Policy `parametric` needs a parameter vector `r`")
        if self.plan is not None and self.plan.model is not None and not self.plan.model.is_file():
            raise ValueError(f"Model file `{self.plan.model}` does not exist")
        return self

    @property
    def estimator(self) -> EstimatorConfig:
        return EstimatorConfig(alpha=self.alpha)

    @property
    def measure(self) -> InfoMeasure:
        return InfoMeasure(cfg=self.estimator)

    def sim_config(self, num_trajectories: Optional[int] = None) -> SimConfig:
        return SimConfig(
            horizon=self.horizon,
            num_trajectories=num_trajectories or self.trajectories,
            master_seed=self.seed,
        )


def parse_vector(text: str) -> tuple[int, ...]:
    """``"1,1,7"`` or ``"(1, 1, 7)"``"""
    body = text.strip().strip("()[]")
    try:
        return tuple(int(v) for v in body.split(",") if v.strip())
    except ValueError:
        raise ControlSetError(f"Invalid parameter vector `{text}`. Expected comma-separated integers")


def parse_param_space(
    text: Optional[str], shape: ParamShape, num_states: int, num_controls: int, horizon: int
) -> ParamSpace:
    """``state=1:2,control=1:2,time=1:20,entries=1,shared=false``; omitted keys keep the defaults"""
    ranges: dict[str, tuple[int, int]] = {}
    entries, shared = shape.num_entries, shape.shared_time_constant
    for item in (text or "").split(","):
        if not item.strip():
            continue
        key, _, value = item.partition("=")
        key, value = key.strip(), value.strip()
        if key in ("state", "control", "time"):
            lower, sep, upper = value.partition(":")
            if not sep:
                raise ValueError(f"Invalid range `{value}` for `{key}`. Expected lower:upper")
            ranges[key] = (int(lower), int(upper))
        elif key == "entries":
            entries = int(value)
        elif key == "shared":
            shared = value.lower() in ("true", "1", "yes")
        else:
            raise ValueError(f"Unknown parameter space key `{key}`")
    return ParamSpace.for_shape(
        ParamShape(num_entries=entries, shared_time_constant=shared),
        num_states,
        num_controls,
        horizon,
        state_range=ranges.get("state"),
        control_range=ranges.get("control"),
        time_range=ranges.get("time"),
    )


def load_bundle(cfg: ExperimentConfig, variant: Optional[str] = None) -> EnvironmentBundle:
    if cfg.env_file is not None:
        if variant is not None:
            raise ValueError("Variants apply to builtin environments only")
        return load_environment(cfg.env_file)
    n = int(_EXAMPLE_NAME.match(normalized_fixture_name(cfg.env)).group(1))
    return build_example(n, p=cfg.p, variant=variant)


def _space(cfg: ExperimentConfig, bundle: EnvironmentBundle) -> ParamSpace:
    return parse_param_space(
        cfg.param_space,
        bundle.param_shape,
        bundle.cmc.num_states,
        bundle.cmc.num_controls,
        cfg.horizon,
    )


def _emit(cfg: ExperimentConfig, filename: str, record: dict) -> None:
    if cfg.out is not None:
        write_json(cfg.out / filename, record)
    print(json.dumps(record, indent=2))


def cmd_optimize(cfg: ExperimentConfig, bundle: Optional[EnvironmentBundle] = None) -> OptimizerResult:
    bundle = bundle or load_bundle(cfg, cfg.variant)
    space = _space(cfg, bundle)
    sim_cfg = cfg.sim_config()
    logger.info(f"[optimize env={bundle.name}] method={cfg.method} horizon={cfg.horizon} candidates={space.size}")
    if cfg.method == "exhaustive":
        result = exhaustive_search(bundle.cmc, space, cfg.measure, bundle.entrance, sim_cfg)
    else:
        result = cem_optimize(bundle.cmc, space, cfg.measure, bundle.entrance, sim_cfg, cfg.cem)
    if cfg.out is not None and result.trace:
        write_cem_trace_csv(cfg.out / "cem_trace.csv", result.trace)
    _emit(cfg, "optimize.json", result.to_record())
    return result


def _parametric(cfg: ExperimentConfig, bundle: EnvironmentBundle, r: Sequence[int]) -> ParametricPolicy:
    shape = _space(cfg, bundle).shape
    params = ControlSetParams.from_vector(r, shape)
    return ParametricPolicy.for_cmc(bundle.cmc, params, cfg.measure)


def resolve_policy(
    cfg: ExperimentConfig, bundle: EnvironmentBundle, kind: Optional[str] = None
) -> tuple[Policy, Optional[tuple[int, ...]]]:
    """The configured policy and, for parametric policies, its parameter vector"""
    kind = kind or cfg.policy
    if kind == "greedy":
        return GreedyPolicy(cfg.measure, bundle.cmc.available), None
    if kind == "random":
        return RandomPolicy(bundle.cmc.available), None
    r = cfg.r if kind == "parametric" else cmd_optimize(cfg, bundle).r
    return _parametric(cfg, bundle, r), tuple(r)


def _summary(
    policy: Policy, r: Optional[Sequence[int]], trajectories: list[Trajectory]
) -> dict[str, Any]:
    estimate = ObjectiveEstimate.from_totals([t.total_h for t in trajectories])
    first = trajectories[0]
    return {
        "policy": policy.name,
        "r": None if r is None else list(r),
        "trajectories": len(trajectories),
        "initial_missing_info": first.initial_missing_information,
        "final_missing_info": float(np.mean([t.final_missing_information for t in trajectories])),
        "objective_mean": estimate.mean,
        "objective_stderr": estimate.stderr,
        "sampling_division": first.sampling_division().tolist(),
    }


def cmd_simulate(cfg: ExperimentConfig, bundle: Optional[EnvironmentBundle] = None) -> dict[str, Any]:
    bundle = bundle or load_bundle(cfg, cfg.variant)
    policy, r = resolve_policy(cfg, bundle)
    trajectories = run_many(bundle.cmc, policy, bundle.entrance, None, cfg.sim_config(), cfg.measure)
    summary = _summary(policy, r, trajectories)
    if cfg.out is not None:
        write_trajectory_csv(cfg.out / "trajectory.csv", trajectories)
        write_curve_csv(cfg.out / "curve.csv", {policy.name: mean_missing_information_curve(trajectories)})
        (cfg.out / "counts.json").write_bytes(save_counts(trajectories[0].counts))
    _emit(cfg, "summary.json", summary)
    return summary


def _rollout_trajectories(
    cfg: ExperimentConfig, bundle: EnvironmentBundle, base: Policy
) -> tuple[RolloutPolicy, list[Trajectory]]:
    n = cfg.rollout_trajectories or cfg.trajectories
    rollout_cfg = RolloutConfig(
        base=base,
        horizon=cfg.horizon,
        rollouts_per_control=cfg.rollouts_per_control,
        master_seed=cfg.seed,
        num_workers=1 if n > 1 else None,
    )
    policy = RolloutPolicy(bundle.cmc, rollout_cfg, cfg.measure)
    trajectories = run_many(bundle.cmc, policy, bundle.entrance, None, cfg.sim_config(n), cfg.measure)
    return policy, trajectories


def cmd_rollout(cfg: ExperimentConfig, bundle: Optional[EnvironmentBundle] = None) -> dict[str, Any]:
    bundle = bundle or load_bundle(cfg, cfg.variant)
    base, r = resolve_policy(cfg, bundle)
    policy, trajectories = _rollout_trajectories(cfg, bundle, base)
    summary = _summary(policy, r, trajectories)
    summary["base"] = base.name
    if cfg.out is not None:
        write_trajectory_csv(cfg.out / "rollout_trajectory.csv", trajectories)
        write_curve_csv(cfg.out / "rollout_curve.csv", {policy.name: mean_missing_information_curve(trajectories)})
    _emit(cfg, "rollout_summary.json", summary)
    return summary


def _learn_counts(
    cfg: ExperimentConfig, bundle: EnvironmentBundle, policy: Policy
) -> CountTensor:
    plan_cfg = cfg.plan or PlanConfig()
    if plan_cfg.model is not None:
        F = load_counts(plan_cfg.model)
        if F.shape != bundle.cmc.transitions.shape:
            raise EnvironmentFormatError(
                f"Model counts have shape `{F.shape}`. Expected `{bundle.cmc.transitions.shape}`"
            )
        return F
    sim_cfg = cfg.sim_config(1)
    return run_many(bundle.cmc, policy, bundle.entrance, None, sim_cfg, cfg.measure)[0].counts


def cmd_plan(cfg: ExperimentConfig, bundle: Optional[EnvironmentBundle] = None) -> dict[str, Any]:
    """Learn (or load) counts, optionally keep exploring a changed maze, then plan the exit"""
    plan_cfg = cfg.plan or PlanConfig()
    bundle = bundle or load_bundle(cfg)
    goal = plan_cfg.goal - 1 if plan_cfg.goal is not None else bundle.goal
    if goal is None:
        raise ValueError(f"Environment `{bundle.name}` declares no goal; pass --goal")
    if cfg.r is not None:
        policy, r = resolve_policy(cfg, bundle, "parametric")
    elif plan_cfg.model is not None:
        # a loaded model needs no search; unrestricted sets and greedy re-learning
        policy, r = GreedyPolicy(cfg.measure, bundle.cmc.available), None
    else:
        policy, r = resolve_policy(cfg, bundle)
    F = _learn_counts(cfg, bundle, policy)

    target = bundle
    if plan_cfg.variant is not None:
        target = load_bundle(cfg, plan_cfg.variant)
        explorer = _parametric(cfg, target, r) if r is not None else GreedyPolicy(cfg.measure, target.cmc.available)
        F = continue_exploration(target.cmc, explorer, target.entrance, F, cfg.sim_config(1), measure=cfg.measure).counts

    params = None if r is None else ControlSetParams.from_vector(r, _space(cfg, bundle).shape)
    admissible = initial_control_sets(params, target.cmc.available)
    problem = PlanningProblem.from_counts(F, [goal], cfg.estimator, plan_cfg.discount, admissible)
    plan = plan_exit(problem, target.entrance)
    record = plan.to_record()
    record["missing_info"] = missing_information(target.cmc, F, cfg.estimator)
    if target.grid is not None:
        print(render_ascii(target, plan.path), file=sys.stderr)
    suffix = "" if plan_cfg.variant is None else f"_{normalized_fixture_name(plan_cfg.variant)}"
    _emit(cfg, f"plan{suffix}.json", record)
    return record


def cmd_compare(cfg: ExperimentConfig, bundle: Optional[EnvironmentBundle] = None) -> dict[str, Any]:
    """Parametric, greedy, random and rollout-over-greedy on one environment"""
    bundle = bundle or load_bundle(cfg, cfg.variant)
    curves: dict[str, np.ndarray] = {}
    results: dict[str, Any] = {}
    parametric, r = resolve_policy(cfg, bundle, "parametric" if cfg.r is not None else "optimize")
    greedy = GreedyPolicy(cfg.measure, bundle.cmc.available)
    for policy in (parametric, greedy, RandomPolicy(bundle.cmc.available)):
        trajectories = run_many(bundle.cmc, policy, bundle.entrance, None, cfg.sim_config(), cfg.measure)
        curves[policy.name] = mean_missing_information_curve(trajectories)
        results[policy.name] = _summary(policy, r if policy is parametric else None, trajectories)
    rollout, trajectories = _rollout_trajectories(cfg, bundle, greedy)
    curves[rollout.name] = mean_missing_information_curve(trajectories)
    results[rollout.name] = _summary(rollout, None, trajectories)
    if cfg.out is not None:
        write_curve_csv(cfg.out / "compare_curves.csv", curves)
    _emit(cfg, "compare.json", results)
    return results


def reproduce(name: str, overrides: dict[str, Any]) -> None:
    """Run optimize, simulate, rollout (and plan when configured) for a builtin experiment"""
    path = get_fixture_path("experiments", name)
    if path is None:
        raise FileNotFoundError(
            f"No builtin experiment named `{name}`. Available: {', '.join(list_fixtures('experiments'))}"
        )
    document = json.loads(path.read_text(encoding="utf-8"))
    document.update(overrides)
    cfg = ExperimentConfig.model_validate(document)
    bundle = load_bundle(cfg, cfg.variant)
    logger.info(f"[reproduce {cfg.name}] horizon={cfg.horizon} method={cfg.method}")
    result = cmd_optimize(cfg, bundle)
    pinned = cfg.model_copy(update={"policy": "parametric", "r": result.r})
    cmd_simulate(pinned, bundle)
    cmd_rollout(pinned, bundle)
    if cfg.plan is not None:
        cmd_plan(pinned.model_copy(update={"plan": cfg.plan.model_copy(update={"variant": None})}), bundle)
        if cfg.plan.variant is not None:
            cmd_plan(pinned, bundle)


COMMANDS = {
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "rollout": cmd_rollout,
    "plan": cmd_plan,
    "compare": cmd_compare,
}


def _add_experiment_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--env", help="Builtin environment, example1 .. example6")
    parser.add_argument("--env-file", type=Path, help="Environment JSON document")
    parser.add_argument("--variant", help="Environment variant, e.g. modified-maze")
    parser.add_argument("--p", type=float, help="Example 1 self-transition probability")
    parser.add_argument(
        "--policy",
        choices=["parametric", "optimize", "greedy", "random"],
        help="Exploration policy (base policy for rollout)",
    )
    parser.add_argument("--r", help="Parameter vector, e.g. 1,1,7")
    parser.add_argument("--param-space", help="e.g. state=1:2,control=1:2,time=1:20,entries=1,shared=false")
    parser.add_argument("--horizon", type=int, help="Number of exploration periods N")
    parser.add_argument("--trajectories", type=int, help="Monte-Carlo trajectories")
    parser.add_argument("--rollouts-per-control", type=int, help="Monte-Carlo tails per successor")
    parser.add_argument("--alpha", type=float, help="Dirichlet prior pseudo-count")
    parser.add_argument("--seed", type=int, help="Master seed for every random stream")
    parser.add_argument("--method", choices=["exhaustive", "cem"], help="Policy-space search")
    parser.add_argument("--out", type=Path, help="Output directory for CSV / JSON artifacts")


def _add_plan_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", type=Path, help="Learned counts JSON (skips learning)")
    parser.add_argument("--discount", type=float, help="Planning discount factor")
    parser.add_argument("--goal", type=int, help="Goal state (1-based)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmc-explore",
        description="Learn controllable Markov chains by informative exploration",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  cmc-explore optimize --env example1 --horizon 20 --method exhaustive
  cmc-explore simulate --env example1 --horizon 20 --policy parametric --r 1,1,7 --out runs/ex1
  cmc-explore compare --env example6 --horizon 80 --trajectories 1000 --r 2,2,56
  cmc-explore plan --env example4 --model runs/ex4/counts.json --r 10,12,14,1,1,2,361 --goal 23
  cmc-explore --reproduce example4 --out runs/ex4
        """,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {get_package_version()}")
    parser.add_argument("--reproduce", metavar="EXAMPLE", help="Run a builtin experiment pipeline")
    parser.add_argument("--out", type=Path, help="Output directory for --reproduce")
    parser.add_argument("--log-level", help="Overrides CMC_EXPLORE_LOGGING_LEVEL for this run")
    subparsers = parser.add_subparsers(dest="command")
    for name, command in COMMANDS.items():
        sub = subparsers.add_parser(name, help=(command.__doc__ or name).strip().splitlines()[0])
        _add_experiment_args(sub)
        if name == "plan":
            _add_plan_args(sub)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values = {
        key: getattr(args, key, None)
        for key in (
            "env", "env_file", "variant", "p", "policy", "param_space", "horizon", "method",
            "trajectories", "rollouts_per_control", "seed", "alpha", "out",
        )
    }
    document = {k: v for k, v in values.items() if v is not None}
    if getattr(args, "r", None):
        document["r"] = parse_vector(args.r)
        document.setdefault("policy", "parametric")
    if args.command == "plan":
        plan = {
            "goal": args.goal,
            "discount": args.discount,
            "model": args.model,
            "variant": document.pop("variant", None),
        }
        document["plan"] = {k: v for k, v in plan.items() if v is not None}
    return ExperimentConfig.model_validate(document)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.log_level:
        os.environ["CMC_EXPLORE_LOGGING_LEVEL"] = args.log_level.upper()
        reset_package_loggers()
    try:
        if args.reproduce:
            overrides = {"out": args.out} if args.out is not None else {}
            reproduce(args.reproduce, overrides)
            return EXIT_OK
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        cfg = config_from_args(args)
        COMMANDS[args.command](cfg)
        return EXIT_OK
    except (NumericError, CapacityError) as e:
        logger.error(f"[{args.command or 'reproduce'}] {e}")
        return EXIT_NUMERIC
    except (ValidationError, ControlSetError, EnvironmentFormatError, FileNotFoundError, ValueError) as e:
        logger.error(f"[{args.command or 'reproduce'}] {e}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
