from pathlib import Path

import numpy as np
import pytest

from axe_cv.main.cv_result import CvResult, FoldRecord
from axe_cv.main.gibbs import PosteriorDraws, SigmaDraws
from axe_cv.main.ingest import (
    DatasetFile,
    draws_io,
    load_adjacency,
    load_dataset,
    parse_roles,
    read_dataset,
    read_draws,
    write_adjacency,
    write_dataset,
    write_draws,
    write_plugins,
    write_predictions,
)
from axe_cv.main.model import VarianceEstimates
from axe_cv.main.types.cv_method import CvMethod
from axe_cv.main.types.draws_direction import DrawsDirection
from axe_cv.main.types.mistakes import (
    InvalidStructure,
    ManifestMismatch,
    NotPositiveDefinite,
    ParseError,
    RoleError,
)
from axe_cv.main.types.role import Role

ROLES = {"y": Role.RESPONSE, "g": Role.CLUSTER}


def write_csv(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def test_load_dataset(tmp_path):
    path = write_csv(tmp_path / "data.csv", "y,g\n1.0,1\n2.0,1\n3.0,2\n")
    spec, labels = load_dataset(path, ROLES)
    assert np.array_equal(spec.X1, np.ones((3, 1)))
    assert np.array_equal(spec.X2, [[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert np.array_equal(spec.response, [1.0, 2.0, 3.0])
    assert labels.tolist() == [1, 1, 2]


def test_fixed_columns_and_known_variances(tmp_path):
    path = write_csv(
        tmp_path / "data.csv",
        "# comment\ny,x,g,v\n1.0,0.5,1,2.0\n2.0,1.5,2,3.0\n",
    )
    roles = parse_roles("y=response,x=fixed,g=cluster,v=known_variance")
    spec, _ = load_dataset(path, roles)
    assert np.array_equal(spec.X1, [[1.0, 0.5], [1.0, 1.5]])
    assert np.array_equal(spec.known_variance, [2.0, 3.0])


def test_missing_response(tmp_path):
    path = write_csv(tmp_path / "data.csv", "y,g\n1.0,1\n")
    with pytest.raises(RoleError):
        load_dataset(path, {"g": Role.CLUSTER})


def test_unknown_role_column(tmp_path):
    path = write_csv(tmp_path / "data.csv", "y,g\n1.0,1\n")
    with pytest.raises(RoleError):
        read_dataset(path, {"z": Role.RESPONSE})


def test_malformed_row_names_the_line(tmp_path):
    path = write_csv(tmp_path / "data.csv", "y,g\n1.0,1\nabc,2\n")
    with pytest.raises(ParseError) as info:
        read_dataset(path, ROLES)
    assert info.value.line == 3
    path = write_csv(tmp_path / "short.csv", "y,g\n1.0\n")
    with pytest.raises(ParseError):
        read_dataset(path, ROLES)


def test_non_integer_cluster(tmp_path):
    path = write_csv(tmp_path / "data.csv", "y,g\n1.0,1.5\n")
    with pytest.raises(RoleError):
        load_dataset(path, ROLES)


def test_parse_roles():
    assert parse_roles("y=response, g=cluster") == ROLES
    with pytest.raises(RoleError):
        parse_roles("y=outcome")
    with pytest.raises(RoleError):
        parse_roles("y")


def test_dataset_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    dataset = DatasetFile(
        columns={"y": rng.standard_normal(5), "g": np.array([1.0, 1.0, 2.0, 3.0, 3.0])},
        roles=ROLES,
    )
    write_dataset(tmp_path / "out.csv", dataset, seed=4)
    text = (tmp_path / "out.csv").read_text(encoding="utf-8")
    assert text.startswith("# axe-cv 0.1.0 seed=4\n")
    again = read_dataset(tmp_path / "out.csv", ROLES)
    for name in ("y", "g"):
        assert np.array_equal(again.columns[name], dataset.columns[name])


def test_adjacency_round_trip(tmp_path):
    W = np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    write_adjacency(tmp_path / "w.txt", W)
    assert (tmp_path / "w.txt").read_text(encoding="utf-8") == "1 2\n1 3\n"
    assert np.array_equal(load_adjacency(tmp_path / "w.txt"), W)


def test_bad_adjacency(tmp_path):
    with pytest.raises(ParseError) as info:
        load_adjacency(write_csv(tmp_path / "w.txt", "1 2\n2 x\n"))
    assert info.value.line == 2
    with pytest.raises(ParseError):
        load_adjacency(write_csv(tmp_path / "self.txt", "1 1\n"))
    with pytest.raises(InvalidStructure):
        load_adjacency(write_csv(tmp_path / "island.txt", "1 2\n"), n=3)


def sample_draws() -> PosteriorDraws:
    rng = np.random.default_rng(1)
    return PosteriorDraws(
        beta=rng.standard_normal((3, 4)),
        sigma=SigmaDraws.scaled(rng.uniform(0.5, 2.0, size=3), np.eye(3)),
        tau2=rng.uniform(0.5, 2.0, size=3),
        burn_in=7,
        seed=11,
    )


def test_draws_round_trip(tmp_path):
    draws = sample_draws()
    write_draws(tmp_path / "draws", draws)
    again = read_draws(tmp_path / "draws")
    assert np.array_equal(again.beta, draws.beta)
    assert np.array_equal(again.sigma.stack(), draws.sigma.stack())
    assert np.array_equal(again.tau2, draws.tau2)
    assert (again.burn_in, again.seed) == (7, 11)
    for name in ("beta.csv", "sigma.csv", "tau2.csv"):
        first = (tmp_path / "draws" / name).read_text(encoding="utf-8").splitlines()[0]
        assert first == "# axe-cv 0.1.0 seed=11"


def test_draws_io_directions(tmp_path):
    draws = sample_draws()
    assert draws_io(tmp_path / "draws", draws, DrawsDirection.WRITE) is None
    again = draws_io(tmp_path / "draws")
    assert np.array_equal(again.beta, draws.beta)
    with pytest.raises(ValueError):
        draws_io(tmp_path / "other", direction=DrawsDirection.WRITE)


def test_manifest_disagreement(tmp_path):
    write_draws(tmp_path / "draws", sample_draws())
    manifest = tmp_path / "draws" / "manifest.txt"
    manifest.write_text(
        manifest.read_text(encoding="utf-8").replace("S=3", "S=4"), encoding="utf-8"
    )
    with pytest.raises(ManifestMismatch):
        read_draws(tmp_path / "draws")


def test_invalid_sigma_draw(tmp_path):
    draws = sample_draws()
    sigma = draws.sigma.stack().copy()
    sigma[2] = -np.eye(3)
    write_draws(
        tmp_path / "draws",
        PosteriorDraws(beta=draws.beta, sigma=SigmaDraws(dense=sigma), tau2=draws.tau2),
    )
    with pytest.raises(NotPositiveDefinite) as info:
        read_draws(tmp_path / "draws")
    assert info.value.culprit_draw == 2


def test_predictions_file(tmp_path):
    result = CvResult(
        method=CvMethod.IIS_C,
        per_fold=(
            FoldRecord(
                fold_id=0,
                indices=np.array([0, 1]),
                predicted=np.array([0.5, 0.25]),
                weights=np.array([0.5, 0.5]),
                khat=0.1,
            ),
        ),
    )
    write_predictions(tmp_path / "p.csv", [result], seed=2)
    lines = (tmp_path / "p.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# axe-cv 0.1.0 seed=2"
    assert lines[1] == "method,fold,row,prediction,ess,khat"
    assert lines[2] == "iis_c,0,0,0.5,2.0,0.1"
    assert len(lines) == 4


def test_plugins_file(tmp_path):
    write_plugins(tmp_path / "plugins.txt", VarianceEstimates(sigma=2.0 * np.eye(2), tau=0.5), 1)
    lines = (tmp_path / "plugins.txt").read_text(encoding="utf-8").splitlines()
    assert lines[1:] == ["source=external", "tau=0.5", "P2=2", "sigma=2.0 0.0 0.0 2.0"]
