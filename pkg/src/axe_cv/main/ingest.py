"""
Text file formats: datasets, adjacency edge lists, posterior draws and reports.

Floats are written with `repr`, so reading back a written file gives the same
values bit for bit. Row indices in output files are 0-based.
"""

import csv
import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from axe_cv.main.build_constants import APP_SLUG, VERSION
from axe_cv.main.covariance import CovarianceStructure, validate_adjacency
from axe_cv.main.cv_result import CvResult
from axe_cv.main.diagnostics import LrrReport, LrrSummary
from axe_cv.main.gibbs import PosteriorDraws, SigmaDraws
from axe_cv.main.model import ModelSpec, VarianceEstimates
from axe_cv.main.types.draws_direction import DrawsDirection
from axe_cv.main.types.family import Family
from axe_cv.main.types.mistakes import (
    DimensionMismatch,
    ManifestMismatch,
    ParseError,
    RoleError,
)
from axe_cv.main.types.role import Role

logger = logging.getLogger(__name__)

MANIFEST = "manifest.txt"
BETA_FILE = "beta.csv"
SIGMA_FILE = "sigma.csv"
TAU2_FILE = "tau2.csv"


def comment_line(seed: int | None) -> str:
    return f"# {APP_SLUG} {VERSION} seed={seed}\n"


def format_float(value: float) -> str:
    return repr(float(value))


# --- Datasets


@dataclass(frozen=True, eq=False)
class DatasetFile:
    """Named numeric columns and the role each one plays in the model"""

    columns: dict[str, np.ndarray]
    roles: dict[str, Role] = field(default_factory=dict)

    def __post_init__(self):
        lengths = {name: np.asarray(values).shape[0] for name, values in self.columns.items()}
        if len(set(lengths.values())) > 1:
            raise DimensionMismatch(f"Columns have different lengths: {lengths}")
        for name in self.roles:
            if name not in self.columns:
                raise RoleError(f"Role given for unknown column '{name}'")
        object.__setattr__(
            self, "roles", {name: Role(role) for name, role in self.roles.items()}
        )

    @property
    def n(self) -> int:
        return next(iter(self.columns.values())).shape[0] if self.columns else 0

    def names(self, role: Role) -> list[str]:
        return [name for name, r in self.roles.items() if r == role]

    def single(self, role: Role, required: bool = False) -> np.ndarray | None:
        names = self.names(role)
        if len(names) > 1:
            raise RoleError(f"At most one column may have the {role} role, got {names}")
        if not names:
            if required:
                raise RoleError(f"No column has the {role} role")
            return None
        return np.asarray(self.columns[names[0]], dtype=float)

    def cluster_labels(self) -> np.ndarray | None:
        """Integer labels of the first cluster column"""
        names = self.names(Role.CLUSTER)
        if not names:
            return None
        return self.__integer_column(names[0])

    def __integer_column(self, name: str) -> np.ndarray:
        values = np.asarray(self.columns[name], dtype=float)
        if not np.all(values == np.round(values)):
            raise RoleError(f"Cluster column '{name}' must be integer-coded")
        return values.astype(int)

    def to_model(
        self,
        C: np.ndarray | None = None,
        cov: CovarianceStructure | None = None,
        family: Family = Family.GAUSSIAN,
    ) -> ModelSpec:
        """
        Build the design matrices from the column roles.

        An intercept is prepended to the fixed-effect columns unless one of them
        is already constant 1. Each cluster column becomes a one-hot block in
        X2, ordered by label.
        """
        response = self.single(Role.RESPONSE, required=True)
        fixed = [np.asarray(self.columns[name], dtype=float) for name in self.names(Role.FIXED)]
        if not any(np.all(column == 1) for column in fixed):
            fixed.insert(0, np.ones(self.n))
        X1 = np.column_stack(fixed)
        blocks = []
        for name in self.names(Role.CLUSTER):
            labels = self.__integer_column(name)
            levels = np.unique(labels)
            blocks.append((labels[:, None] == levels[None, :]).astype(float))
        X2 = np.hstack(blocks) if blocks else np.zeros((self.n, 0))
        if C is not None and np.shape(C) != (X1.shape[1], X1.shape[1]):
            raise DimensionMismatch(
                f"C has shape {np.shape(C)} but X1 has {X1.shape[1]} columns"
            )
        return ModelSpec(
            X1=X1,
            X2=X2,
            response=response,
            C=C,
            cov=CovarianceStructure() if cov is None else cov,
            family=family,
            offset=self.single(Role.OFFSET),
            known_variance=self.single(Role.KNOWN_VARIANCE),
        )


def parse_roles(text: str) -> dict[str, Role]:
    """Parse 'column=role,column=role'"""
    roles: dict[str, Role] = {}
    for item in filter(None, (part.strip() for part in text.split(","))):
        name, sep, role = item.partition("=")
        if not sep:
            raise RoleError(f"Role assignment '{item}' must look like column=role")
        try:
            roles[name.strip()] = Role(role.strip())
        except ValueError as error:
            valid = ", ".join(r.value for r in Role)
            raise RoleError(f"Unknown role '{role}', valid roles are: {valid}") from error
    return roles


def _data_rows(path: Path) -> Iterable[tuple[int, list[str]]]:
    """Non-comment CSV rows with their 1-based line numbers"""
    try:
        with path.open(newline="", encoding="utf-8") as f:
            for line_number, row in enumerate(csv.reader(f), start=1):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                yield line_number, row
    except (OSError, UnicodeDecodeError, csv.Error) as error:
        raise ParseError(f"Cannot read {path}: {error}") from error


def _parse_float(text: str, line: int) -> float:
    try:
        return float(text)
    except ValueError as error:
        raise ParseError(f"'{text}' is not a number", line) from error


def read_dataset(path: Path, roles: Mapping[str, Role]) -> DatasetFile:
    rows = iter(_data_rows(Path(path)))
    try:
        _, header = next(rows)
    except StopIteration as error:
        raise ParseError(f"{path} has no header row") from error
    header = [name.strip() for name in header]
    values: list[list[float]] = [[] for _ in header]
    for line, row in rows:
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
        for column, text in zip(values, row):
            column.append(_parse_float(text, line))
    dataset = DatasetFile(
        columns={name: np.array(column) for name, column in zip(header, values)},
        roles=dict(roles),
    )
    logger.debug("Read %d rows and %d columns from %s", dataset.n, len(header), path)
    return dataset


def load_dataset(
    path: Path,
    roles: Mapping[str, Role],
    C: np.ndarray | None = None,
    cov: CovarianceStructure | None = None,
    family: Family = Family.GAUSSIAN,
) -> tuple[ModelSpec, np.ndarray | None]:
    """Read a CSV dataset and build its model, with the cluster labels for fold plans"""
    dataset = read_dataset(path, roles)
    return dataset.to_model(C=C, cov=cov, family=family), dataset.cluster_labels()


def write_dataset(path: Path, dataset: DatasetFile, seed: int | None = None) -> None:
    integer = set(dataset.names(Role.CLUSTER))
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as f:
        f.write(comment_line(seed))
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(list(dataset.columns))
        for i in range(dataset.n):
            writer.writerow(
                [
                    str(int(values[i])) if name in integer else format_float(values[i])
                    for name, values in dataset.columns.items()
                ]
            )


# --- Adjacency


def load_adjacency(path: Path, n: int | None = None) -> np.ndarray:
    """Read an undirected edge list of 1-based 'i j' pairs into a 0/1 matrix"""
    edges: list[tuple[int, int]] = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as error:
        raise ParseError(f"Cannot read {path}: {error}") from error
    for line_number, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2 or not all(part.isdigit() for part in parts):
            raise ParseError(f"expected an 'i j' pair, got '{line}'", line_number)
        i, j = int(parts[0]), int(parts[1])
        if i < 1 or j < 1 or i == j:
            raise ParseError(f"invalid edge ({i}, {j})", line_number)
        edges.append((i - 1, j - 1))
    size = n if n is not None else max((max(edge) for edge in edges), default=-1) + 1
    W = np.zeros((size, size))
    for i, j in edges:
        if i >= size or j >= size:
            raise ParseError(f"edge ({i + 1}, {j + 1}) exceeds {size} nodes")
        W[i, j] = W[j, i] = 1
    return validate_adjacency(W)


def write_adjacency(path: Path, W: np.ndarray) -> None:
    W = validate_adjacency(W)
    i, j = np.nonzero(np.triu(W))
    Path(path).write_text(
        "".join(f"{a + 1} {b + 1}\n" for a, b in zip(i.tolist(), j.tolist())),
        encoding="utf-8",
    )


# --- Posterior draws


def write_draws(directory: Path, draws: PosteriorDraws) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    S, P, P2 = draws.S, draws.P, draws.P2
    sigma = draws.sigma.stack().reshape(S, P2 * P2)
    tables = (
        (BETA_FILE, [f"beta_{k}" for k in range(P)], draws.beta),
        (SIGMA_FILE, [f"sigma_{a}_{b}" for a in range(P2) for b in range(P2)], sigma),
        (TAU2_FILE, ["tau2"], draws.tau2[:, None]),
    )
    for name, columns, values in tables:
        with (directory / name).open("w", newline="", encoding="utf-8") as f:
            f.write(comment_line(draws.seed))
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["draw", *columns])
            for s in range(S):
                writer.writerow([str(s), *(format_float(v) for v in values[s])])
    (directory / MANIFEST).write_text(
        f"S={S}\nP={P}\nP2={P2}\nseed={draws.seed}\nburn_in={draws.burn_in}\n",
        encoding="utf-8",
    )


def _read_manifest(path: Path) -> dict[str, int]:
    manifest: dict[str, int] = {}
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as error:
        raise ParseError(f"Cannot read {path}: {error}") from error
    for line_number, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError("manifest lines must look like key=value", line_number)
        try:
            manifest[key.strip()] = int(value)
        except ValueError as error:
            raise ParseError(f"'{value}' is not an integer", line_number) from error
    for key in ("S", "P", "P2"):
        if key not in manifest:
            raise ManifestMismatch(f"Manifest is missing '{key}'")
    return manifest


def _read_table(path: Path, S: int, width: int) -> np.ndarray:
    rows = iter(_data_rows(path))
    try:
        _, header = next(rows)
    except StopIteration as error:
        raise ParseError(f"{path} has no header row") from error
    if len(header) != width + 1:
        raise ManifestMismatch(
            f"{path.name} has {len(header) - 1} value columns, manifest implies {width}"
        )
    values = []
    for line, row in rows:
        if len(row) != width + 1:
            raise ParseError(f"expected {width + 1} fields, got {len(row)}", line)
        values.append([_parse_float(text, line) for text in row[1:]])
    if len(values) != S:
        raise ManifestMismatch(f"{path.name} has {len(values)} draws, manifest says S={S}")
    return np.array(values, dtype=float).reshape(S, width)


def read_draws(directory: Path) -> PosteriorDraws:
    directory = Path(directory)
    manifest = _read_manifest(directory / MANIFEST)
    S, P, P2 = manifest["S"], manifest["P"], manifest["P2"]
    beta = _read_table(directory / BETA_FILE, S, P)
    sigma = _read_table(directory / SIGMA_FILE, S, P2 * P2).reshape(S, P2, P2)
    tau2 = _read_table(directory / TAU2_FILE, S, 1)[:, 0]
    draws = PosteriorDraws(
        beta=beta,
        sigma=SigmaDraws(dense=sigma),
        tau2=tau2,
        burn_in=manifest.get("burn_in", 0),
        seed=manifest.get("seed", 0),
    )
    draws.validate()
    return draws


def draws_io(
    path: Path,
    draws: PosteriorDraws | None = None,
    direction: DrawsDirection = DrawsDirection.READ,
) -> PosteriorDraws | None:
    """Read a draws directory, or write one and return nothing"""
    match direction:
        case DrawsDirection.READ:
            return read_draws(path)
        case DrawsDirection.WRITE:
            if draws is None:
                raise ValueError("Writing needs draws")
            write_draws(path, draws)
            return None


# --- Reports


def _write_rows(
    path: Path, fieldnames: list[str], rows: Iterable[dict], seed: int | None
) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as f:
        f.write(comment_line(seed))
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _optional(value: float | None) -> str:
    return "" if value is None else format_float(value)


def write_predictions(path: Path, results: list[CvResult], seed: int | None) -> None:
    def rows():
        for result in results:
            for record in result.per_fold:
                ess = (
                    None
                    if record.weights is None
                    else float(1 / np.sum(record.weights**2))
                )
                for row, prediction in zip(record.indices, record.predicted):
                    yield {
                        "method": str(result.method),
                        "fold": record.fold_id,
                        "row": int(row),
                        "prediction": format_float(prediction),
                        "ess": _optional(ess),
                        "khat": _optional(record.khat),
                    }

    _write_rows(path, ["method", "fold", "row", "prediction", "ess", "khat"], rows(), seed)


def write_lrr(path: Path, reports: list[LrrReport], seed: int | None) -> None:
    rows = (
        {
            "method": str(report.method),
            "fold": j,
            "lrr": format_float(value) if np.isfinite(value) else "",
            "excluded": int(j in report.excluded),
        }
        for report in reports
        for j, value in enumerate(report.per_fold)
    )
    _write_rows(path, ["method", "fold", "lrr", "excluded"], rows, seed)


def write_scatter(
    path: Path,
    results: list[CvResult],
    mcv: CvResult,
    spec: ModelSpec,
    seed: int | None,
) -> None:
    """Per-point approximate and ground-truth predictions against the observations"""
    truth = mcv.predictions(spec.N)
    rows = (
        {
            "method": str(result.method),
            "fold": record.fold_id,
            "row": int(row),
            "observed": format_float(spec.response[row]),
            "mcv": format_float(truth[row]),
            "approx": format_float(prediction),
        }
        for result in results
        for record in result.per_fold
        for row, prediction in zip(record.indices, record.predicted)
    )
    _write_rows(path, ["method", "fold", "row", "observed", "mcv", "approx"], rows, seed)


def write_summary(path: Path, summary: LrrSummary, seed: int | None) -> None:
    Path(path).write_text(comment_line(seed) + summary.render_text(), encoding="utf-8")


@dataclass(frozen=True)
class BenchRow:
    method: str
    N: int
    P: int
    J: int
    seconds: float
    complexity: str


def write_bench(path: Path, rows: list[BenchRow], seed: int | None) -> None:
    _write_rows(
        path,
        ["method", "N", "P", "J", "seconds", "complexity"],
        (
            {
                "method": row.method,
                "N": row.N,
                "P": row.P,
                "J": row.J,
                "seconds": f"{row.seconds:.6f}",
                "complexity": row.complexity,
            }
            for row in rows
        ),
        seed,
    )


def write_timings(path: Path, results: list[CvResult]) -> None:
    """Wall times kept apart from the deterministic outputs"""
    Path(path).write_text(
        "".join(
            f"{result.method}={result.meta.get('seconds', '')}\n" for result in results
        ),
        encoding="utf-8",
    )


def write_plugins(path: Path, var: VarianceEstimates, seed: int | None) -> None:
    """Plug-in values as key=value lines, Sigma flattened row-major"""
    sigma = np.atleast_2d(var.sigma)
    Path(path).write_text(
        comment_line(seed)
        + f"source={var.source}\n"
        + f"tau={format_float(var.tau)}\n"
        + f"P2={sigma.shape[0]}\n"
        + "sigma="
        + " ".join(format_float(value) for value in sigma.ravel())
        + "\n",
        encoding="utf-8",
    )
