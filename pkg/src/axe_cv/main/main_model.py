import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from pathvalidate import ValidationError, validate_filepath

from axe_cv.main.axe import axe_run
from axe_cv.main.baselines import ghost_run, iis_run, naive_run
from axe_cv.main.covariance import CovarianceStructure
from axe_cv.main.cv_result import CvResult
from axe_cv.main.diagnostics import LrrReport, lrr, summarize_lrr
from axe_cv.main.folds import FoldPlan, build_fold_plan
from axe_cv.main.gibbs import GibbsConfig, PosteriorDraws, gibbs_run, mcv_run
from axe_cv.main.ingest import (
    BenchRow,
    draws_io,
    load_adjacency,
    load_dataset,
    write_adjacency,
    write_bench,
    write_dataset,
    write_lrr,
    write_plugins,
    write_predictions,
    write_scatter,
    write_summary,
    write_timings,
)
from axe_cv.main.model import ModelSpec, VarianceEstimates, validate_model
from axe_cv.main.plugin import fit_poisson_plugins, map_estimates, posterior_mean_estimates
from axe_cv.main.psis import DEFAULT_TAIL_FRACTION
from axe_cv.main.synthetic import (
    SyntheticConfig,
    generate_synthetic,
    ring_adjacency,
    split_subsets,
)
from axe_cv.main.types.command_names import CommandNames
from axe_cv.main.types.covariance_kind import CovarianceKind
from axe_cv.main.types.cv_method import CvMethod
from axe_cv.main.types.draws_direction import DrawsDirection
from axe_cv.main.types.family import Family
from axe_cv.main.types.fold_scheme import FoldScheme
from axe_cv.main.types.iis_integration import IisIntegration
from axe_cv.main.types.lrr_variant import LrrVariant
from axe_cv.main.types.mistakes import (
    DimensionMismatch,
    InvalidOutputPath,
    Mistake,
    SlowMethodRefused,
    UsageMistake,
)
from axe_cv.main.types.pseudo_variance import PseudoVariance
from axe_cv.main.types.role import Role
from axe_cv.main.types.synthetic_design import SyntheticDesign
from axe_cv.main.types.variance_source import VarianceSource

logger = logging.getLogger(__name__)

SLOW_BUDGET = 1e10
"""Largest S * J * N^2 * P accepted for iIS-A without --allow-slow"""

COMPLEXITY = {
    CvMethod.AXE: "O(J(NP^2+P^3))",
    CvMethod.GHOST: "O(SJP^3)",
    CvMethod.IIS_C: "O(SJP^3)",
    CvMethod.IIS_A: "O(SJ(NP^2+P^3))",
    CvMethod.MCV: "O(JS(N^2P+NP^2+P^3))",
    CvMethod.NAIVE: "O(SNP)",
}

PREDICTIONS = "predictions.csv"
LRR = "lrr.csv"
SCATTER = "scatter.csv"
SUMMARY = "summary.txt"
BENCH = "bench.csv"
TIMINGS = "timings.txt"
DRAWS_DIR = "draws"
PLUGINS = "plugins.txt"
DATASET = "dataset.csv"
SUBSET_DATASET = "dataset_{}.csv"
ADJACENCY = "adjacency.txt"


@dataclass(frozen=True)
class RunConfig:
    """Everything one command needs, as parsed from the command line"""

    command: CommandNames
    out: Path
    model: Path | None = None
    roles: dict[str, Role] = field(default_factory=dict)
    family: Family = Family.GAUSSIAN
    scheme: FoldScheme = FoldScheme.LCO
    k: int | None = None
    methods: tuple[CvMethod, ...] = (CvMethod.AXE,)
    gibbs: GibbsConfig = field(default_factory=GibbsConfig)
    seed: int = 0
    plugin: VarianceSource = VarianceSource.POSTERIOR_MEAN
    psis_tail: float = DEFAULT_TAIL_FRACTION
    smooth: bool = True
    integration: IisIntegration = IisIntegration.ANALYTIC
    lrr_variant: LrrVariant = LrrVariant.DISPLAY
    pseudo_variance: PseudoVariance = PseudoVariance.DELTA
    covariance: CovarianceKind = CovarianceKind.DIAGONAL
    sigma2: float = 1.0
    car_alpha: float = 0.0
    rho: float = 0.0
    periods: int = 1
    adjacency: Path | None = None
    draws_dir: Path | None = None
    threads: int | None = None
    allow_slow: bool = False
    synthetic: SyntheticConfig | None = None
    bench_clusters: tuple[int, ...] = (10, 20, 40)
    bench_covariates: tuple[int, ...] = (1, 4)
    bench_cluster_size: int = 5

    def __post_init__(self):
        object.__setattr__(self, "command", CommandNames(self.command))
        object.__setattr__(self, "methods", tuple(CvMethod(m) for m in self.methods))
        needs_model = (CommandNames.FIT, CommandNames.CV, CommandNames.COMPARE)
        if self.command in needs_model and self.model is None:
            raise UsageMistake(f"The {self.command} command needs --model")
        if self.command in (CommandNames.CV, CommandNames.COMPARE) and not self.methods:
            raise UsageMistake(f"The {self.command} command needs at least one method")
        if not 0 < self.psis_tail < 1:
            raise UsageMistake(f"--psis-tail must lie in (0, 1), got {self.psis_tail}")
        if self.plugin not in (VarianceSource.POSTERIOR_MEAN, VarianceSource.MAP):
            raise UsageMistake(f"--plugin must be posterior-mean or map, got {self.plugin}")
        if self.threads is not None and self.threads < 1:
            raise UsageMistake(f"--threads must be positive, got {self.threads}")


@dataclass
class Prepared:
    """A loaded model with its fold plan, draws and plug-in values"""

    spec: ModelSpec
    plan: FoldPlan
    draws: PosteriorDraws | None = None
    var: VarianceEstimates | None = None


class MainModel:
    """
    Runs one command of the tool.

    Failures of a single method are collected in `mistakes` and the remaining
    methods still run; the exit code is the worst one collected.
    """

    __config: RunConfig
    mistakes: list[Mistake]

    def __init__(self, config: RunConfig):
        self.__config = config
        self.mistakes = []

    @property
    def config(self) -> RunConfig:
        return self.__config

    @property
    def exit_code(self) -> int:
        return max((mistake.exit_code for mistake in self.mistakes), default=0)

    def run(self) -> int:
        out = self._prepare_output(self.config.out)
        match self.config.command:
            case CommandNames.FIT:
                self.fit(out)
            case CommandNames.CV:
                self.cross_validate(out)
            case CommandNames.COMPARE:
                self.compare(out)
            case CommandNames.BENCH:
                self.bench(out)
            case CommandNames.SIMULATE:
                self.simulate(out)
            case _:
                raise UsageMistake(f"Unknown command: {self.config.command}")
        return self.exit_code

    def _prepare_output(self, out: Path) -> Path:
        try:
            validate_filepath(file_path=str(out), platform="auto")
        except ValidationError as error:
            raise InvalidOutputPath(f"Invalid output directory '{out}': {error}") from error
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as error:
            raise InvalidOutputPath(f"Cannot create output directory '{out}': {error}") from error
        if not out.is_dir():
            raise InvalidOutputPath(f"'{out}' is not a directory")
        return out

    # --- Model preparation

    def _covariance(self) -> CovarianceStructure:
        cfg = self.config
        if cfg.covariance == CovarianceKind.DIAGONAL:
            return CovarianceStructure(sigma2=cfg.sigma2)
        if cfg.adjacency is None:
            raise UsageMistake(f"The {cfg.covariance} structure needs --adjacency")
        W = load_adjacency(cfg.adjacency)
        return CovarianceStructure(
            kind=cfg.covariance,
            sigma2=cfg.sigma2,
            alpha=cfg.car_alpha,
            rho=cfg.rho,
            W=W,
            T=cfg.periods,
        )

    def load(self) -> tuple[ModelSpec, FoldPlan]:
        cfg = self.config
        spec, labels = load_dataset(cfg.model, cfg.roles, family=cfg.family)
        spec = spec.with_cov(self._covariance())
        validate_model(spec)
        plan = build_fold_plan(cfg.scheme, n=spec.N, labels=labels, k=cfg.k, seed=cfg.seed)
        return spec, plan

    def _draws(self, spec: ModelSpec) -> PosteriorDraws:
        cfg = self.config
        if cfg.draws_dir is not None:
            draws = draws_io(cfg.draws_dir, direction=DrawsDirection.READ)
            if draws.P != spec.P:
                raise DimensionMismatch(f"Draws have P={draws.P}, the model has P={spec.P}")
            return draws
        return gibbs_run(spec, cfg.gibbs)

    def prepare(
        self,
        spec: ModelSpec,
        plan: FoldPlan,
        methods: tuple[CvMethod, ...],
        keep_draws: bool = False,
    ) -> Prepared:
        """
        Fit what the methods need.

        Poisson models first get their plug-ins and pseudo-response from the
        alternating mode search, the gaussian machinery then runs on the
        pseudo-response.
        """
        cfg = self.config
        var = None
        if spec.family == Family.POISSON_LOG:
            var, pseudo = fit_poisson_plugins(spec, variant=cfg.pseudo_variance)
            spec = spec.with_pseudo_response(pseudo)
        needs_draws = keep_draws or any(m.needs_draws for m in methods) or (
            var is None and cfg.plugin == VarianceSource.POSTERIOR_MEAN
        )
        draws = self._draws(spec) if needs_draws else None
        if var is None:
            var = (
                posterior_mean_estimates(draws)
                if cfg.plugin == VarianceSource.POSTERIOR_MEAN
                else map_estimates(spec)
            )
        return Prepared(spec=spec, plan=plan, draws=draws, var=var)

    def check_budget(self, method: CvMethod, spec: ModelSpec, plan: FoldPlan) -> None:
        if method != CvMethod.IIS_A or self.config.allow_slow:
            return
        cost = float(self.config.gibbs.draws) * plan.J * spec.N**2 * spec.P
        if cost > SLOW_BUDGET:
            raise SlowMethodRefused(
                f"iIS-A would cost about {cost:.3g} operations (budget {SLOW_BUDGET:.0e}), "
                "pass --allow-slow to run it anyway"
            )

    def _affordable(
        self, methods: tuple[CvMethod, ...], spec: ModelSpec, plan: FoldPlan
    ) -> tuple[CvMethod, ...]:
        kept = []
        for method in methods:
            try:
                self.check_budget(method, spec, plan)
            except SlowMethodRefused as mistake:
                logger.error("%s refused: %s", method, mistake.message)
                self.mistakes.append(mistake)
            else:
                kept.append(method)
        return tuple(kept)

    def run_method(self, method: CvMethod, prepared: Prepared) -> CvResult:
        cfg = self.config
        spec, plan, draws = prepared.spec, prepared.plan, prepared.draws
        logger.info("Running %s over %d folds", method, plan.J)
        match method:
            case CvMethod.AXE:
                return axe_run(spec, prepared.var, plan, threads=cfg.threads)
            case CvMethod.GHOST:
                return ghost_run(draws, spec, plan, seed=cfg.seed, threads=cfg.threads)
            case CvMethod.IIS_C | CvMethod.IIS_A:
                return iis_run(
                    draws,
                    spec,
                    plan,
                    method,
                    integration=cfg.integration,
                    smooth=cfg.smooth,
                    tail_fraction=cfg.psis_tail,
                    seed=cfg.seed,
                    threads=cfg.threads,
                )
            case CvMethod.MCV:
                return mcv_run(spec, cfg.gibbs, plan, threads=cfg.threads)
            case CvMethod.NAIVE:
                return naive_run(draws, spec, plan, threads=cfg.threads)
            case _:
                raise UsageMistake(f"Unknown method: {method}")

    def _run_methods(self, methods: tuple[CvMethod, ...], prepared: Prepared) -> list[CvResult]:
        results = []
        for method in methods:
            try:
                results.append(self.run_method(method, prepared))
            except Mistake as mistake:
                logger.error("%s failed: %s: %s", method, mistake.name, mistake.message)
                self.mistakes.append(mistake)
        return results

    # --- Commands

    def fit(self, out: Path) -> None:
        spec, plan = self.load()
        cfg = self.config
        prepared = self.prepare(spec, plan, (), keep_draws=True)
        draws_io(out / DRAWS_DIR, prepared.draws, DrawsDirection.WRITE)
        write_plugins(out / PLUGINS, prepared.var, cfg.seed)
        logger.info(
            "Wrote %d draws and %s plug-ins to %s", prepared.draws.S, prepared.var.source, out
        )

    def cross_validate(self, out: Path) -> None:
        spec, plan = self.load()
        methods = self._affordable(self.config.methods, spec, plan)
        results = []
        if methods:
            prepared = self.prepare(spec, plan, methods)
            results = self._run_methods(methods, prepared)
        write_predictions(out / PREDICTIONS, results, self.config.seed)
        write_timings(out / TIMINGS, results)

    def compare(self, out: Path) -> None:
        """Run manual cross-validation and score every other method against it"""
        cfg = self.config
        spec, plan = self.load()
        approximations = self._affordable(
            tuple(m for m in dict.fromkeys(cfg.methods) if m != CvMethod.MCV), spec, plan
        )
        prepared = self.prepare(spec, plan, approximations)
        mcv = self.run_method(CvMethod.MCV, prepared)
        results = self._run_methods(approximations, prepared)

        reports: list[LrrReport] = [
            lrr(result, mcv, prepared.spec, plan, cfg.lrr_variant) for result in results
        ]
        write_predictions(out / PREDICTIONS, [mcv, *results], cfg.seed)
        write_lrr(out / LRR, reports, cfg.seed)
        write_scatter(out / SCATTER, results, mcv, prepared.spec, cfg.seed)
        write_summary(out / SUMMARY, summarize_lrr(reports), cfg.seed)
        write_timings(out / TIMINGS, [mcv, *results])

    def bench(self, out: Path) -> None:
        """Time each method on one-way datasets over a grid of sizes"""
        cfg = self.config
        rows: list[BenchRow] = []
        seconds: defaultdict[CvMethod, list[float]] = defaultdict(list)
        for J in cfg.bench_clusters:
            for covariates in cfg.bench_covariates:
                synthetic = SyntheticConfig(
                    design=SyntheticDesign.ONE_WAY,
                    J=J,
                    n_per_cluster=cfg.bench_cluster_size,
                    beta=(0.0,) + (1.0,) * covariates,
                    seed=cfg.seed,
                )
                dataset = generate_synthetic(synthetic)
                spec = dataset.to_model()
                plan = build_fold_plan(FoldScheme.LCO, labels=dataset.cluster_labels())
                methods = self._affordable(cfg.methods, spec, plan)
                started = time.perf_counter()
                prepared = self.prepare(spec, plan, methods)
                setup = time.perf_counter() - started
                for result in self._run_methods(methods, prepared):
                    elapsed = float(result.meta["seconds"])
                    sampled = result.method == CvMethod.AXE and (
                        cfg.plugin == VarianceSource.POSTERIOR_MEAN
                    )
                    if result.method.needs_draws or sampled:
                        elapsed += setup
                    seconds[result.method].append(elapsed)
                    rows.append(
                        BenchRow(
                            method=str(result.method),
                            N=spec.N,
                            P=spec.P,
                            J=plan.J,
                            seconds=elapsed,
                            complexity=COMPLEXITY[result.method],
                        )
                    )
        for method, values in seconds.items():
            logger.info("%s: %.3fs in total over %d problems", method, sum(values), len(values))
        write_bench(out / BENCH, rows, cfg.seed)

    def simulate(self, out: Path) -> None:
        cfg = self.config
        synthetic = cfg.synthetic or SyntheticConfig(seed=cfg.seed)
        dataset = generate_synthetic(synthetic)
        write_dataset(out / DATASET, dataset, synthetic.seed)
        if synthetic.design == SyntheticDesign.CLUSTER_SUBSET:
            parts = split_subsets(dataset)
            for iteration, part in enumerate(parts, start=1):
                write_dataset(out / SUBSET_DATASET.format(iteration), part, synthetic.seed)
            logger.info("Wrote %d subset iterations to %s", len(parts), out)
        if synthetic.design == SyntheticDesign.CAR_LATTICE:
            write_adjacency(out / ADJACENCY, ring_adjacency(synthetic.J))

