import math

import numpy as np
import pytest

from voxsynth import dataset
from voxsynth.errors import (
    DegenerateSplit,
    EmptyInput,
    InsufficientClassRows,
    InsufficientData,
    ParseError,
    SchemaMismatch,
)
from voxsynth.tabular import (
    Column,
    Schema,
    Table,
    correlation_matrix,
    load_csv,
    split_table,
    undersample,
)

from conftest import make_toy_table


class TestLoadCorpus:
    def test_corpus_shape(self, corpus):
        assert corpus.n_rows == 195
        assert len(corpus.schema.columns) == 24
        assert len(corpus.schema.continuous_features) == 22
        y = corpus.labels().tolist()
        assert sum(1 for v in y if v == 0) == 48
        assert sum(1 for v in y if v == 1) == 147
        assert len(dataset.subjects(corpus)) == 31

    def test_uci_alias_mapping(self, corpus):
        # "MDVP:Fo(Hz)" in the raw header must land on mdvp_fo_hz.
        col = corpus.schema.column("mdvp_fo_hz")
        assert col.kind == "continuous"
        assert col.unit == "Hz"
        assert corpus.column("mdvp_fo_hz").dtype == np.float64

    def test_subject_of_strips_take_index(self):
        assert dataset.subject_of("phon_R01_S01_1") == "phon_R01_S01"
        assert dataset.subject_of("phon_R01_S22_13") == "phon_R01_S22"
        assert dataset.subject_of("oddball") == "oddball"

    def test_round_trip_identical_cells(self, corpus, tmp_path):
        out = tmp_path / "canonical.csv"
        corpus.to_csv(out)
        again = load_csv(out, corpus.schema)
        for name in corpus.schema.names:
            a, b = corpus.column(name), again.column(name)
            if corpus.schema.column(name).kind == "continuous":
                assert np.array_equal(a, b)
            else:
                assert a.tolist() == b.tolist()

    def test_parse_error_reports_row_and_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,y,status\n1.0,2.0,0\nabc,3.0,1\n")
        schema = Schema(
            (Column("x", "continuous"), Column("y", "continuous"),
             Column("status", "discrete", categories=(0, 1))),
            target_column="status",
        )
        with pytest.raises(ParseError) as err:
            load_csv(path, schema)
        assert err.value.row == 1
        assert err.value.column == "x"

    def test_unknown_category_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,status\n1.0,2\n")
        schema = Schema(
            (Column("x", "continuous"), Column("status", "discrete", categories=(0, 1))),
            target_column="status",
        )
        with pytest.raises(ParseError):
            load_csv(path, schema)

    def test_missing_column_lists_names(self, tmp_path):
        path = tmp_path / "short.csv"
        path.write_text("x\n1.0\n")
        schema = Schema(
            (Column("x", "continuous"), Column("status", "discrete", categories=(0, 1))),
            target_column="status",
        )
        with pytest.raises(SchemaMismatch, match="status"):
            load_csv(path, schema)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        schema = Schema((Column("x", "continuous"),), target_column="x")
        with pytest.raises(EmptyInput):
            load_csv(path, schema)
        path.write_text("x\n")
        with pytest.raises(EmptyInput):
            load_csv(path, schema)


class TestSummary:
    def test_invariants(self, corpus):
        stats = corpus.summary()
        assert stats.n_rows == 195
        for name, s in stats.continuous.items():
            assert s["min"] <= s["mean"] <= s["max"], name
            assert s["std"] >= 0.0
        assert sum(stats.discrete["status"].values()) == 195


class TestCorrelation:
    def test_perfect_anticorrelation(self, toy_schema):
        x = [1.0, 2.0, 3.0, 4.0]
        t = make_toy_table(toy_schema, x, [-v for v in x], [0, 1, 0, 1])
        res = correlation_matrix(t)
        assert res.matrix[0, 1] == -1.0

    def test_diagonal_exactly_one(self, corpus):
        res = correlation_matrix(corpus)
        assert np.all(np.diag(res.matrix) == 1.0)
        assert np.all(res.matrix <= 1.0) and np.all(res.matrix >= -1.0)

    def test_hand_computed_pearson(self, toy_schema):
        # rho = 6.5 / sqrt(5.0 * 8.75) = 0.982708...
        t = make_toy_table(toy_schema, [1, 2, 3, 4], [1, 2, 3, 5], [0, 0, 1, 1])
        res = correlation_matrix(t)
        assert math.isclose(res.matrix[0, 1], 6.5 / math.sqrt(5.0 * 8.75), abs_tol=1e-12)
        assert math.isclose(res.matrix[0, 1], 0.9827, abs_tol=5e-5)

    def test_symmetry_and_shuffle_invariance(self, corpus):
        res = correlation_matrix(corpus)
        assert np.max(np.abs(res.matrix - res.matrix.T)) <= 1e-12
        rng = np.random.Generator(np.random.Philox(key=1))
        shuffled = corpus.select_rows(rng.permutation(corpus.n_rows))
        res2 = correlation_matrix(shuffled)
        assert np.allclose(res.matrix, res2.matrix, atol=1e-12)

    def test_zero_variance_flagged(self, toy_schema):
        t = make_toy_table(toy_schema, [5.0, 5.0, 5.0], [1.0, 2.0, 3.0], [0, 1, 0])
        res = correlation_matrix(t)
        assert res.zero_variance == ["x"]
        assert res.matrix[0, 1] == 0.0
        assert res.matrix[0, 0] == 1.0

    def test_class_filter_and_insufficient(self, toy_schema):
        t = make_toy_table(toy_schema, [1.0, 2.0, 3.0], [3.0, 2.0, 1.0], [0, 1, 1])
        res = correlation_matrix(t, class_filter=1)
        assert res.n_rows == 2
        with pytest.raises(InsufficientData):
            correlation_matrix(t, class_filter=0)


class TestSplit:
    @pytest.mark.parametrize("strategy", ["random", "stratified", "grouped"])
    def test_disjoint_exhaustive(self, corpus, strategy):
        train, test = split_table(corpus, strategy, 0.2, seed=7)
        assert train.n_rows + test.n_rows == corpus.n_rows
        names = set(train.column("name").tolist()) | set(test.column("name").tolist())
        assert len(names) == corpus.n_rows  # recording ids are unique

    def test_grouped_never_splits_a_subject(self, corpus):
        train, test = split_table(corpus, "grouped", 0.2, seed=7)
        tr = {dataset.subject_of(r) for r in train.column("name").tolist()}
        te = {dataset.subject_of(r) for r in test.column("name").tolist()}
        assert not (tr & te)

    def test_stratified_preserves_ratio(self, corpus):
        _, test = split_table(corpus, "stratified", 0.2, seed=3)
        y = test.labels().tolist()
        assert abs(sum(1 for v in y if v == 0) - 10) <= 1
        assert abs(sum(1 for v in y if v == 1) - 29) <= 1

    def test_deterministic(self, corpus):
        a = split_table(corpus, "stratified", 0.2, seed=11)
        b = split_table(corpus, "stratified", 0.2, seed=11)
        assert a[0].to_csv_string() == b[0].to_csv_string()
        assert a[1].to_csv_string() == b[1].to_csv_string()

    def test_degenerate_fraction(self, toy_schema):
        t = make_toy_table(toy_schema, [1.0, 2.0], [1.0, 2.0], [0, 1])
        with pytest.raises(DegenerateSplit):
            split_table(t, "random", 0.01, seed=0)


class TestUndersample:
    def test_balanced_target(self, corpus):
        out = undersample(corpus, {0: 48, 1: 48}, seed=5)
        y = out.labels().tolist()
        assert out.n_rows == 96
        assert sum(1 for v in y if v == 0) == 48
        assert sum(1 for v in y if v == 1) == 48

    def test_identity_counts_return_same_rows(self, corpus):
        out = undersample(corpus, {0: 48, 1: 147}, seed=9)
        assert out.to_csv_string() == corpus.to_csv_string()

    def test_exceeding_availability(self, corpus):
        with pytest.raises(InsufficientClassRows):
            undersample(corpus, {0: 50}, seed=0)

    def test_histogram_matches_target_exactly(self, corpus):
        for seed in (0, 1, 2):
            out = undersample(corpus, {0: 17, 1: 31}, seed=seed)
            y = out.labels().tolist()
            assert sum(1 for v in y if v == 0) == 17
            assert sum(1 for v in y if v == 1) == 31
