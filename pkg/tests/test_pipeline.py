"""
Tests for ingestion, the pipeline modes and the command line.
"""
import json

import numpy as np
import pandas as pd
import pytest

from surf_select.cli import _scenario, build_parser, main
from surf_select.models.inputs import (
    Family,
    ForwardConfig,
    Mode,
    Normalize,
    PipelineConfig,
    RankingConfig,
    StabilityConfig,
)
from surf_select.services.sim import scenario_template
from surf_select.tools.export import read_report
from surf_select.tools.ingest import build_dataset, dataset_from_arrays, load_dataset
from surf_select.tools.pipeline import augment_dataset, run_pipeline
from surf_select.utils import InputFileError, SubsampleFailureError, TaxonomyError, ValidationError

from .conftest import FIGURE1_LINEAGES, FIGURE1_OTUS, make_single_signal


def _fast(mode: Mode, family: Family = Family.BINOMIAL, seed: int = 1) -> PipelineConfig:
    return PipelineConfig(
        mode=mode,
        family=family,
        seed=seed,
        ranking=RankingConfig(B=6, n_lambda=20),
        forward=ForwardConfig(n_perm=20),
        stability=StabilityConfig(B=10, n_lambda=20),
    )


def _write_figure1(tmp_path, n=40, seed=0):
    """OTU table with a binary response plus the matching taxonomy file."""
    gen = np.random.default_rng(seed)
    counts = gen.integers(1, 50, size=(n, 6)).astype(float)
    eta = -1.0 + 0.1 * (counts[:, 0] + counts[:, 1] + counts[:, 2]) - 0.1 * counts[:, 3:].sum(axis=1)
    y = (eta + gen.logistic(size=n) > 0).astype(int)
    frame = pd.DataFrame(counts.astype(int), columns=FIGURE1_OTUS, index=[f"s{i}" for i in range(n)])
    frame.insert(0, "disease", y)
    table = tmp_path / "otus.csv"
    frame.to_csv(table, index_label="sample")
    taxonomy = tmp_path / "taxonomy.tsv"
    pd.DataFrame({"otu_id": FIGURE1_OTUS, "lineage": FIGURE1_LINEAGES}).to_csv(taxonomy, sep="\t", index=False)
    return str(table), str(taxonomy)


class TestIngest:
    """Tests for table and taxonomy ingestion."""

    def test_small_table(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("id,a,b,y\ns1,1,2,0\ns2,3,4,1\ns3,5,7,1\n")
        ds = load_dataset(str(path), "y", Family.BINOMIAL)
        assert ds.n_samples == 3
        assert ds.column_names == ["a", "b"]
        assert ds.sample_ids == ["s1", "s2", "s3"]
        np.testing.assert_allclose(ds.X.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(ds.column_means, [3.0, 13.0 / 3.0])

    def test_tab_separated(self, tmp_path):
        path = tmp_path / "t.tsv"
        path.write_text("id\ta\ty\ns1\t1\t0.5\ns2\t2\t1.5\n")
        ds = load_dataset(str(path), "y", Family.GAUSSIAN)
        np.testing.assert_allclose(ds.y, [0.5, 1.5])

    def test_proportions(self):
        frame = pd.DataFrame({"a": [2.0, 1.0], "b": [6.0, 1.0], "c": [2.0, 2.0], "y": [0.0, 1.0]},
                             index=["s1", "s2"]).astype(str)
        ds = build_dataset(frame, "y", Family.BINOMIAL, normalize=Normalize.PROPORTIONS)
        np.testing.assert_allclose(ds.raw[0], [0.2, 0.6, 0.2])
        np.testing.assert_allclose(ds.raw.sum(axis=1), 1.0)

    def test_passthrough_not_normalized(self):
        frame = pd.DataFrame({"a": [1.0, 3.0], "b": [1.0, 1.0], "age": [30.0, 40.0], "y": [0.0, 1.0]},
                             index=["s1", "s2"]).astype(str)
        ds = build_dataset(frame, "y", Family.BINOMIAL, normalize=Normalize.PROPORTIONS, passthrough=["age"])
        assert ds.column_names == ["a", "b", "age"]
        np.testing.assert_allclose(ds.raw[:, 2], [30.0, 40.0])
        np.testing.assert_allclose(ds.otu_block.sum(axis=1), 1.0)

    def test_zero_total_row(self):
        frame = pd.DataFrame({"a": [0.0, 1.0], "y": [0.0, 1.0]}, index=["s1", "s2"]).astype(str)
        with pytest.raises(InputFileError, match="non-positive total"):
            build_dataset(frame, "y", Family.BINOMIAL, normalize=Normalize.PROPORTIONS)

    def test_missing_response(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("id,a,b\ns1,1,2\n")
        with pytest.raises(InputFileError, match="response column 'y' not found"):
            load_dataset(str(path), "y", Family.GAUSSIAN)

    def test_non_numeric_cell(self, tmp_path):
        """The offending row and column are named."""
        path = tmp_path / "t.csv"
        path.write_text("id,a,y\ns1,1,0\ns2,abc,1\n")
        with pytest.raises(InputFileError) as exc:
            load_dataset(str(path), "y", Family.BINOMIAL)
        assert exc.value.details["row"] == "s2"
        assert exc.value.details["column"] == "a"

    def test_duplicate_header(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("id,a,a,y\ns1,1,2,0\n")
        with pytest.raises(InputFileError, match="duplicate"):
            load_dataset(str(path), "y", Family.BINOMIAL)

    def test_unknown_passthrough(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("id,a,y\ns1,1,0\ns2,2,1\n")
        with pytest.raises(ValidationError):
            load_dataset(str(path), "y", Family.BINOMIAL, passthrough=["age"])

    def test_taxonomy_names_absent_otu(self, tmp_path):
        table, taxonomy = _write_figure1(tmp_path)
        frame = pd.read_csv(table, index_col=0).drop(columns=["otu6"])
        frame.to_csv(table)
        with pytest.raises(TaxonomyError) as exc:
            load_dataset(table, "disease", Family.BINOMIAL, taxonomy_path=taxonomy)
        assert exc.value.details["offending"] == ["otu6"]

    def test_uncovered_columns_become_passthrough(self, tmp_path):
        table, taxonomy = _write_figure1(tmp_path)
        frame = pd.read_csv(table, index_col=0)
        frame["age"] = np.arange(len(frame))
        frame.to_csv(table)
        ds = load_dataset(table, "disease", Family.BINOMIAL, taxonomy_path=taxonomy)
        assert ds.passthrough == ["age"]
        assert ds.column_names[-1] == "age"

    def test_from_arrays(self, single_signal):
        X, y = single_signal
        ds = dataset_from_arrays(X, y, Family.BINOMIAL)
        assert ds.column_names[0] == "x0"
        assert ds.response_name == "y"
        with pytest.raises(ValidationError):
            dataset_from_arrays(X, y, Family.BINOMIAL, column_names=["a"])


class TestAugment:
    """Tests for the augmented design of a dataset."""

    def test_figure1_columns(self, tmp_path):
        """Six leaves plus the four distinct internal aggregates."""
        table, taxonomy = _write_figure1(tmp_path)
        ds = load_dataset(table, "disease", Family.BINOMIAL, taxonomy_path=taxonomy)
        X, labels, design = augment_dataset(ds)
        assert labels == FIGURE1_OTUS + ["k;p1;c1", "k;p2;c2", "k;p2", "k"]
        assert X.shape == (40, 10)
        np.testing.assert_allclose(X.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(design.matrix[:, 6], ds.raw[:, :3].sum(axis=1))

    def test_without_taxonomy(self, single_signal):
        X, y = single_signal
        ds = dataset_from_arrays(X, y, Family.BINOMIAL)
        matrix, labels, design = augment_dataset(ds)
        assert design is None
        assert labels == ds.column_names
        np.testing.assert_allclose(matrix, ds.X)


class TestRunPipeline:
    """Tests for run_pipeline."""

    def test_select_finds_signal(self):
        X, y = make_single_signal(seed=2)
        report = run_pipeline(dataset_from_arrays(X, y, Family.BINOMIAL), _fast(Mode.SELECT))
        assert report.selected[0] == "x0"
        assert report.steps[0].column == 0
        assert report.ranking.order[0] == "x0"
        assert report.coefficients.augmented.keys() == set(report.selected)
        assert report.terminal is not None
        assert set(report.timing) == {"aggregate", "rank", "forward"}

    def test_rank_has_no_steps(self, single_signal):
        X, y = single_signal
        report = run_pipeline(dataset_from_arrays(X, y, Family.BINOMIAL), _fast(Mode.RANK))
        assert report.steps == []
        assert report.terminal is None
        assert len(report.ranking.order) == X.shape[1]
        assert all(0.0 <= f <= 1.0 for f in report.ranking.frequency)

    def test_stability_mode(self, single_signal):
        X, y = single_signal
        report = run_pipeline(dataset_from_arrays(X, y, Family.BINOMIAL), _fast(Mode.STABILITY))
        assert report.stability.q == 1
        assert report.ranking is None

    def test_aggregate_mode(self, tmp_path):
        table, taxonomy = _write_figure1(tmp_path)
        ds = load_dataset(table, "disease", Family.BINOMIAL, taxonomy_path=taxonomy)
        report = run_pipeline(ds, _fast(Mode.AGGREGATE))
        assert len(report.augmented_columns) == 10
        assert report.dataset.dropped_nodes == ["k;p2;c3", "k;p1"]
        assert report.ranking is None

    def test_select_with_taxonomy_maps_to_leaves(self, tmp_path):
        table, taxonomy = _write_figure1(tmp_path, n=80)
        ds = load_dataset(table, "disease", Family.BINOMIAL, taxonomy_path=taxonomy)
        report = run_pipeline(ds, _fast(Mode.SELECT))
        if report.selected:
            assert set(report.coefficients.leaf) <= set(FIGURE1_OTUS)

    def test_aggregate_needs_taxonomy(self, single_signal):
        X, y = single_signal
        with pytest.raises(ValidationError) as exc:
            run_pipeline(dataset_from_arrays(X, y, Family.BINOMIAL), _fast(Mode.AGGREGATE))
        assert exc.value.details["stage"] == "aggregate"

    def test_family_mismatch(self, single_signal):
        X, y = single_signal
        with pytest.raises(ValidationError):
            run_pipeline(dataset_from_arrays(X, y, Family.BINOMIAL), _fast(Mode.RANK, family=Family.GAUSSIAN))

    def test_stage_is_labelled(self):
        """Failures carry the name of the stage they came from."""
        X = np.random.default_rng(0).standard_normal((20, 3))
        y = np.array([0.0] * 19 + [1.0])
        with pytest.raises(SubsampleFailureError) as exc:
            run_pipeline(dataset_from_arrays(X, y, Family.BINOMIAL), _fast(Mode.RANK))
        assert exc.value.details["stage"] == "rank"

    def test_body_is_deterministic(self, single_signal):
        """Same seed, same report body."""
        X, y = single_signal
        ds = dataset_from_arrays(X, y, Family.BINOMIAL)
        a = run_pipeline(ds, _fast(Mode.SELECT, seed=5))
        b = run_pipeline(ds, _fast(Mode.SELECT, seed=5).model_copy(update={"n_jobs": 2}))
        assert a.body_json() == b.body_json()
        assert "timing" not in json.loads(a.body_json())

    def test_simulate_without_reps(self):
        scenario = scenario_template("null", n_reps=0)
        report = run_pipeline(None, PipelineConfig(mode=Mode.SIMULATE), scenario=scenario)
        assert report.simulation == {}
        assert report.config["scenario"]["name"] == "null"

    def test_simulate_needs_scenario(self):
        with pytest.raises(ValidationError):
            run_pipeline(None, PipelineConfig(mode=Mode.SIMULATE))


class TestCli:
    """Tests for the surf-select command."""

    def test_select_run(self, tmp_path, capsys):
        X, y = make_single_signal(seed=3)
        frame = pd.DataFrame(X, columns=[f"g{j}" for j in range(X.shape[1])])
        frame.insert(0, "status", y.astype(int))
        table = tmp_path / "data.csv"
        frame.to_csv(table, index_label="sample")
        out = tmp_path / "out" / "report.json"

        code = main(["--table", str(table), "--response", "status", "--B", "6", "--perms", "20",
                     "--seed", "1", "--out", str(out)])
        assert code == 0
        report = read_report(str(out))
        assert report.selected[0] == "g0"
        assert "g0" in capsys.readouterr().out

    def test_text_report_and_aggregate_export(self, tmp_path):
        table, taxonomy = _write_figure1(tmp_path)
        out = tmp_path / "report.txt"
        design = tmp_path / "augmented.csv"
        code = main(["--mode", "aggregate", "--table", table, "--response", "disease",
                     "--taxonomy", taxonomy, "--format", "text", "--out", str(out),
                     "--aggregate-out", str(design)])
        assert code == 0
        assert "Augmented design: 10 columns" in out.read_text()
        written = pd.read_csv(design, index_col=0)
        assert written.index.name == "sample_id"
        assert list(written.columns)[-1] == "k"

    def test_missing_response_exit_code(self, tmp_path, capsys):
        path = tmp_path / "t.csv"
        path.write_text("id,a\ns1,1\n")
        code = main(["--table", str(path), "--response", "y", "--out", str(tmp_path / "r.json")])
        assert code == 2
        assert "response column 'y' not found" in capsys.readouterr().err

    def test_bad_configuration_exit_code(self, tmp_path, capsys):
        """alpha * perms < 1 is rejected before any work."""
        path = tmp_path / "t.csv"
        path.write_text("id,a,y\ns1,1,0\ns2,2,1\n")
        code = main(["--table", str(path), "--response", "y", "--perms", "5"])
        assert code == 2
        assert "invalid configuration" in capsys.readouterr().err

    def test_simulate_needs_scenario(self, capsys):
        assert main(["--mode", "simulate"]) == 2

    def test_seed_overrides_scenario_file(self, tmp_path):
        """--seed replaces the SEED of a scenario file; without it the file's seed stays."""
        path = tmp_path / "scenario.env"
        path.write_text("TEMPLATE=single_surrogate\nLEVEL=high\nN_REPS=3\nSEED=7\n")
        parser = build_parser()
        assert _scenario(parser.parse_args(["--mode", "simulate", "--scenario", str(path)])).seed == 7
        spec = _scenario(parser.parse_args(["--mode", "simulate", "--scenario", str(path), "--seed", "11"]))
        assert spec.seed == 11
        assert spec.n_reps == 3

    def test_seed_reaches_template(self):
        parser = build_parser()
        spec = _scenario(parser.parse_args(["--mode", "simulate", "--template", "null", "--seed", "5"]))
        assert spec.seed == 5
