import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from axe_cv.main.build_constants import APP_SLUG, PROFILE, VERSION
from axe_cv.main.gibbs import GibbsConfig
from axe_cv.main.ingest import parse_roles
from axe_cv.main.main_model import MainModel, RunConfig
from axe_cv.main.psis import DEFAULT_TAIL_FRACTION
from axe_cv.main.synthetic import SyntheticConfig
from axe_cv.main.types.command_names import CommandNames
from axe_cv.main.types.covariance_kind import CovarianceKind
from axe_cv.main.types.cv_method import CvMethod
from axe_cv.main.types.family import Family
from axe_cv.main.types.fold_scheme import FoldScheme
from axe_cv.main.types.iis_integration import IisIntegration
from axe_cv.main.types.lrr_variant import LrrVariant
from axe_cv.main.types.mistakes import (
    Mistake,
    ParseError,
    UnknownMethod,
    UsageMistake,
)
from axe_cv.main.types.pseudo_variance import PseudoVariance
from axe_cv.main.types.sigma_prior import SigmaPrior
from axe_cv.main.types.synthetic_design import SyntheticDesign
from axe_cv.main.types.variance_source import VarianceSource

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """Argument parser reporting usage errors as mistakes instead of exiting"""

    def error(self, message: str):
        raise UsageMistake(message)


def parse_methods(text: str) -> tuple[CvMethod, ...]:
    valid = [method.value for method in CvMethod]
    methods = []
    for name in filter(None, (part.strip() for part in text.split(","))):
        if name not in valid:
            raise UnknownMethod(name, valid)
        methods.append(CvMethod(name))
    return tuple(methods)


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as error:
        raise argparse.ArgumentTypeError(f"'{text}' is not a list of integers") from error


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as error:
        raise argparse.ArgumentTypeError(f"'{text}' is not a list of numbers") from error


def read_config_file(path: Path) -> list[str]:
    """
    Turn 'key=value' lines into command line arguments.

    Keys are long flag names without the leading dashes. A value of true or
    false switches a flag on or leaves it out.
    """
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as error:
        raise ParseError(f"Cannot read {path}: {error}") from error
    args: list[str] = []
    for line_number, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ParseError(f"expected key=value, got '{line}'", line_number)
        flag = "--" + key.strip().replace("_", "-")
        match value.strip().lower():
            case "true":
                args.append(flag)
            case "false":
                pass
            case _:
                args.extend([flag, value.strip()])
    return args


class App:
    """Command line front end"""

    __parser: argparse.ArgumentParser
    __verbose: bool = False

    def __setup_logging(self) -> None:
        verbose = self.__verbose or PROFILE == "development"
        level = logging.DEBUG if verbose else logging.INFO
        logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    def __init__(self) -> None:
        self.__parser = _Parser(
            prog=APP_SLUG, description="Cross-validation for hierarchical regression"
        )
        self.__parser.add_argument(
            "--version", action="version", version=f"{APP_SLUG} {VERSION}"
        )
        self.__register_commands()

    # --- Arguments

    def __add_common(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--out", type=Path, default=Path("."), help="Output directory")
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--verbose", action="store_true")

    def __add_model(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--model", type=Path, help="CSV dataset")
        parser.add_argument(
            "--roles", type=parse_roles, default={}, help="column=role pairs, comma separated"
        )
        parser.add_argument("--family", type=Family, choices=list(Family), default=Family.GAUSSIAN)
        parser.add_argument(
            "--covariance",
            type=CovarianceKind,
            choices=list(CovarianceKind),
            default=CovarianceKind.DIAGONAL,
        )
        parser.add_argument("--sigma2", type=float, default=1.0, help="Initial Sigma scale")
        parser.add_argument("--car-alpha", type=float, default=0.0)
        parser.add_argument("--rho", type=float, default=0.0)
        parser.add_argument("--periods", type=int, default=1)
        parser.add_argument("--adjacency", type=Path, help="Edge list of 1-based 'i j' pairs")

    def __add_sampler(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--draws", type=int, default=4000)
        parser.add_argument("--burnin", type=int, default=1000)
        parser.add_argument("--prior", type=SigmaPrior, choices=list(SigmaPrior))
        parser.add_argument("--nu", type=float)
        parser.add_argument("--draws-dir", type=Path, help="Reuse draws written by fit")
        parser.add_argument(
            "--plugin",
            type=VarianceSource,
            choices=[VarianceSource.POSTERIOR_MEAN, VarianceSource.MAP],
            default=VarianceSource.POSTERIOR_MEAN,
        )
        parser.add_argument(
            "--pseudo-variance",
            type=PseudoVariance,
            choices=list(PseudoVariance),
            default=PseudoVariance.DELTA,
        )

    def __add_cv(self, parser: argparse.ArgumentParser, default_methods: str) -> None:
        parser.add_argument(
            "--scheme", type=FoldScheme, choices=list(FoldScheme), default=FoldScheme.LCO
        )
        parser.add_argument("--k", type=int, help="Number of folds for kfold")
        parser.add_argument(
            "--method", "--methods", dest="methods", default=default_methods, help="Comma separated"
        )
        parser.add_argument("--psis-tail", type=float, default=DEFAULT_TAIL_FRACTION)
        parser.add_argument("--no-smooth", action="store_true", help="Skip Pareto smoothing")
        parser.add_argument(
            "--integration",
            type=IisIntegration,
            choices=list(IisIntegration),
            default=IisIntegration.ANALYTIC,
        )
        parser.add_argument(
            "--lrr-variant", type=LrrVariant, choices=list(LrrVariant), default=LrrVariant.DISPLAY
        )
        parser.add_argument("--threads", type=int)
        parser.add_argument("--allow-slow", action="store_true")

    def __register_commands(self) -> None:
        commands = self.__parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

        # Fit
        fit = commands.add_parser(CommandNames.FIT, help="Sample the full-data posterior")
        self.__add_common(fit)
        self.__add_model(fit)
        self.__add_sampler(fit)

        # Cross-validate
        cv = commands.add_parser(CommandNames.CV, help="Cross-validated predictions")
        self.__add_common(cv)
        self.__add_model(cv)
        self.__add_sampler(cv)
        self.__add_cv(cv, default_methods=CvMethod.AXE)

        # Compare against manual cross-validation
        compare = commands.add_parser(CommandNames.COMPARE, help="Score methods against MCV")
        self.__add_common(compare)
        self.__add_model(compare)
        self.__add_sampler(compare)
        self.__add_cv(compare, default_methods=CvMethod.AXE)

        # Benchmark
        bench = commands.add_parser(CommandNames.BENCH, help="Time methods over problem sizes")
        self.__add_common(bench)
        self.__add_sampler(bench)
        self.__add_cv(bench, default_methods=f"{CvMethod.AXE},{CvMethod.GHOST},{CvMethod.IIS_C}")
        bench.add_argument("--clusters", type=_int_list, default=(10, 20, 40))
        bench.add_argument("--covariates", type=_int_list, default=(1, 4))
        bench.add_argument("--cluster-size", type=int, default=5)

        # Simulate
        simulate = commands.add_parser(CommandNames.SIMULATE, help="Write a synthetic dataset")
        self.__add_common(simulate)
        simulate.add_argument(
            "--design",
            type=SyntheticDesign,
            choices=list(SyntheticDesign),
            default=SyntheticDesign.ONE_WAY,
        )
        simulate.add_argument("--clusters", type=int, default=8)
        simulate.add_argument("--cluster-size", type=_int_list, default=(5,))
        simulate.add_argument("--alpha-scale", type=float, default=1.0)
        simulate.add_argument("--rho-test", type=float, default=0.3)
        simulate.add_argument("--sigma2", type=float, default=1.0)
        simulate.add_argument("--tau2", type=float, default=1.0)
        simulate.add_argument("--beta", type=_float_list, default=(0.0,))
        simulate.add_argument("--iterations", type=int, default=60)
        simulate.add_argument("--car-alpha", type=float, default=0.9)

    # --- Configuration

    def parse(self, argv: Sequence[str]) -> RunConfig:
        pre = _Parser(add_help=False, allow_abbrev=False)
        pre.add_argument("--config", type=Path)
        known, rest = pre.parse_known_args(list(argv))
        if known.config is not None and rest:
            rest = [rest[0], *read_config_file(known.config), *rest[1:]]
        args = self.__parser.parse_args(rest)
        self.__verbose = args.verbose
        return self.__run_config(args)

    def __run_config(self, args: argparse.Namespace) -> RunConfig:
        command = CommandNames(args.command)
        if command == CommandNames.SIMULATE:
            sizes = args.cluster_size
            return RunConfig(
                command=command,
                out=args.out,
                seed=args.seed,
                synthetic=SyntheticConfig(
                    design=args.design,
                    J=args.clusters,
                    n_per_cluster=sizes[0] if len(sizes) == 1 else sizes,
                    alpha_scale=args.alpha_scale,
                    rho_test=args.rho_test,
                    sigma2=args.sigma2,
                    tau2=args.tau2,
                    beta=args.beta,
                    seed=args.seed,
                    iterations=args.iterations,
                    car_alpha=args.car_alpha,
                ),
            )

        gibbs = GibbsConfig(
            draws=args.draws,
            burn_in=args.burnin,
            nu=args.nu,
            seed=args.seed,
            sigma_prior=args.prior,
        )
        options = dict(
            command=command,
            out=args.out,
            seed=args.seed,
            gibbs=gibbs,
            plugin=args.plugin,
            pseudo_variance=args.pseudo_variance,
            draws_dir=args.draws_dir,
        )
        if command != CommandNames.FIT:
            options |= dict(
                scheme=args.scheme,
                k=args.k,
                methods=parse_methods(args.methods),
                psis_tail=args.psis_tail,
                smooth=not args.no_smooth,
                integration=args.integration,
                lrr_variant=args.lrr_variant,
                threads=args.threads,
                allow_slow=args.allow_slow,
            )
        if command == CommandNames.BENCH:
            options |= dict(
                bench_clusters=args.clusters,
                bench_covariates=args.covariates,
                bench_cluster_size=args.cluster_size,
            )
        else:
            options |= dict(
                model=args.model,
                roles=args.roles,
                family=args.family,
                covariance=args.covariance,
                sigma2=args.sigma2,
                car_alpha=args.car_alpha,
                rho=args.rho,
                periods=args.periods,
                adjacency=args.adjacency,
            )
        return RunConfig(**options)

    # --- Entry point

    def run(self, argv: Sequence[str]) -> int:
        """Run a command, returning the process exit code"""
        try:
            config = self.parse(argv)
            self.__setup_logging()
            model = MainModel(config)
            code = model.run()
        except Mistake as mistake:
            print(f"{mistake.name}: {mistake.message}", file=sys.stderr)
            return mistake.exit_code
        for mistake in model.mistakes:
            print(f"{mistake.name}: {mistake.message}", file=sys.stderr)
        return code


def main() -> int:
    """The application's entry point."""
    return App().run(sys.argv[1:])
