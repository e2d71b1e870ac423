"""Command-line verbs for experiments and delay/schedule audits"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

from pydantic import ValidationError

from asyncopt.core.config import settings
from asyncopt.core.errors import AsyncOptError, ConfigError
from asyncopt.models.schemas import (
    DelayKind,
    DelayParams,
    EngineKind,
    ExperimentConfig,
    PolicyKind,
    StepSizePolicy,
)
from asyncopt.models.trace import DelaySequence
from asyncopt.services.delay_service import DelayService
from asyncopt.services.experiment_service import REFERENCE_B_VALUES, ExperimentService
from asyncopt.services.export_service import ExportService
from asyncopt.services.schedule_service import ScheduleService

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ADMISSIBILITY = 3


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    """One --flag per ExperimentConfig field; values are validated by pydantic"""
    parser.add_argument("--config", help="flat key=value experiment file")
    for name, field in ExperimentConfig.model_fields.items():
        flag = "--" + name.replace("_", "-")
        if field.annotation is bool:
            parser.add_argument(flag, dest=name, action="store_true", default=None)
        else:
            parser.add_argument(flag, dest=name, default=None, help=field.description)


def _add_delay_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--a", type=float, required=True)
    parser.add_argument("--b", type=float, required=True)
    parser.add_argument("--c", type=float, default=0.0)


def _delay_params(args: argparse.Namespace) -> DelayParams:
    try:
        return DelayParams(a=args.a, b=args.b, c=args.c)
    except ValidationError as e:
        raise ConfigError(f"Invalid delay parameters: {e}") from e


def _overrides(args: argparse.Namespace) -> Dict[str, object]:
    return {name: getattr(args, name) for name in ExperimentConfig.model_fields}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asyncopt",
        description="Simulate PIAG and Async-BCD under unbounded delays and audit their guarantees",
    )
    verbs = parser.add_subparsers(dest="command", required=True)

    run = verbs.add_parser("run", help="run one experiment")
    _add_config_flags(run)

    sweep = verbs.add_parser("sweep", help="run one experiment per delay exponent b")
    _add_config_flags(sweep)
    sweep.add_argument("--b-values", dest="b_values", type=float, nargs="+", default=list(REFERENCE_B_VALUES))
    sweep.add_argument("--workers", type=int, default=settings.sweep_workers)

    validate = verbs.add_parser("validate-delays", help="check a delay CSV against the delay bound")
    validate.add_argument("delays", help="CSV with columns k,tau[,tau_1,...]")
    _add_delay_flags(validate)

    admissibility = verbs.add_parser(
        "check-admissibility", help="check the step-size window-sum condition"
    )
    _add_delay_flags(admissibility)
    admissibility.add_argument("--delays", help="delay CSV; generated when omitted")
    admissibility.add_argument(
        "--delay-kind", choices=[DelayKind.STOCHASTIC.value, DelayKind.ADVERSARIAL.value],
        default=DelayKind.STOCHASTIC.value,
    )
    admissibility.add_argument("--horizon", type=int, default=settings.default_horizon)
    admissibility.add_argument("--seed", type=int, default=0)
    admissibility.add_argument("--n-components", dest="n_components", type=int, default=1)
    admissibility.add_argument("--h", type=float, default=settings.default_h)
    admissibility.add_argument("--smoothness", type=float, default=1.0, help="L or L-hat")
    admissibility.add_argument(
        "--engine", choices=[e.value for e in EngineKind], default=EngineKind.PIAG.value
    )
    admissibility.add_argument("--gamma", type=float, help="check a constant step size instead")

    adversarial = verbs.add_parser("build-adversarial", help="write the adversarial delay sequence")
    _add_delay_flags(adversarial)
    adversarial.add_argument("--horizon", type=int, required=True)
    adversarial.add_argument("--output", required=True, help="destination CSV")
    return parser


def cmd_run(args: argparse.Namespace) -> int:
    config = ExperimentService.load_config(args.config, _overrides(args))
    result = ExperimentService().run_experiment(config)
    print(ExportService.format_summary(result.summary), end="")
    print(f"Artifacts written to {result.output_dir}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    overrides = _overrides(args)
    overrides.pop("b", None)
    config = ExperimentService.load_config(args.config, overrides)
    result = ExperimentService().sweep(config, args.b_values, workers=args.workers)
    for b in result.b_values:
        print(f"b={b:g}: final error {result.errors[b][len(result.ks) - 1]!r}")
    print(f"ordered_by_b = {str(result.ordered).lower()}")
    return EXIT_OK


def cmd_validate_delays(args: argparse.Namespace) -> int:
    params = _delay_params(args)
    seq = ExportService.read_delays_csv(args.delays, params, validate=False)
    first = DelayService.validate_delay_bound(seq, params)
    if first is not None:
        bound = DelayService.delay_bound(params, first)
        print(f"FAIL: tau={int(seq.values[first])} exceeds the delay bound {bound!r} at k={first}")
        return EXIT_CONFIG
    print(f"PASS: {seq.horizon + 1} steps satisfy the delay bound")
    return EXIT_OK


def _delays_for_check(args: argparse.Namespace, params: DelayParams) -> DelaySequence:
    if args.delays:
        return ExportService.read_delays_csv(args.delays, params, validate=False)
    if args.delay_kind == DelayKind.ADVERSARIAL.value:
        return DelayService.build_adversarial_delays(params, args.horizon)
    return DelayService.sample_stochastic_delays(params, args.horizon, args.n_components, args.seed)


def cmd_check_admissibility(args: argparse.Namespace) -> int:
    params = _delay_params(args)
    seq = _delays_for_check(args, params)
    try:
        if args.gamma is not None:
            policy = StepSizePolicy(
                kind=PolicyKind.CONSTANT, h=args.h, smoothness=args.smoothness, gamma=args.gamma
            )
        else:
            policy = ScheduleService.schedule_for(
                EngineKind(args.engine), args.h, args.smoothness, params
            )
    except ValidationError as e:
        raise ConfigError(f"Invalid step-size policy: {e}") from e
    first = ScheduleService.check_admissibility(policy, seq)
    if first is not None:
        print(f"FAIL: window sum exceeds h/L at k={first}")
        return EXIT_ADMISSIBILITY
    print(f"PASS: admissible for k = 0..{seq.horizon}")
    return EXIT_OK


def cmd_build_adversarial(args: argparse.Namespace) -> int:
    params = _delay_params(args)
    seq = DelayService.build_adversarial_delays(params, args.horizon)
    ExportService.write_delays_csv(seq, Path(args.output))
    print(f"{len(seq.epoch_starts)} epochs, T = {list(seq.epoch_starts[:10])}")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "validate-delays": cmd_validate_delays,
    "check-admissibility": cmd_check_admissibility,
    "build-adversarial": cmd_build_adversarial,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse ``argv`` and run the selected verb

    Returns:
        Exit status: 0 success, 2 config error, 3 admissibility failure,
        4 runtime invariant violation
    """
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except AsyncOptError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
