import numpy as np
import pytest

from flowcamo.blackbox import EavesdropCorpus, Oracle, make_oracle
from flowcamo.core import DeviceClass, ValidationError
from flowcamo.learners import fit


@pytest.fixture(scope="module")
def oracle_setup(small_split, target_schema, pool_schema):
    train_pool, test_pool = small_split
    model = fit("decision_tree", train_pool.project(target_schema), seed=0)
    return make_oracle(model, pool_schema), model, train_pool


class TestOracleSurface:
    def test_public_surface_is_query_collect_log_only(self, oracle_setup):
        """The attacker-facing object exposes exactly {query, collect,
        query_log}; no weights, scores, or training internals leak."""
        oracle, _, _ = oracle_setup
        public = {n for n in dir(oracle) if not n.startswith("_")}
        assert public == {"query", "collect", "query_log"}

    def test_query_returns_device_class(self, oracle_setup, pool_schema):
        oracle, model, train_pool = oracle_setup
        dc = oracle.query(train_pool.X[0])
        assert isinstance(dc, DeviceClass)
        cols = pool_schema.projection_onto(model.schema)
        expected = int(model.predict_ids(train_pool.X[0][cols][None, :])[0])
        assert dc.id == expected

    def test_labels_match_target_on_projected_columns(self, oracle_setup, pool_schema):
        oracle, model, train_pool = oracle_setup
        corpus = oracle.collect(train_pool.X[:100])
        cols = pool_schema.projection_onto(model.schema)
        np.testing.assert_array_equal(
            corpus.y, model.predict_ids(train_pool.X[:100][:, cols])
        )
        assert corpus.schema.names == pool_schema.names

    def test_query_log_counts_rows(self, small_split, target_schema, pool_schema):
        train_pool, _ = small_split
        model = fit("decision_tree", train_pool.project(target_schema), seed=0)
        oracle = make_oracle(model, pool_schema)
        assert oracle.query_log == 0
        oracle.query(train_pool.X[0])
        oracle.collect(train_pool.X[:25])
        assert oracle.query_log == 26

    def test_decoy_columns_ignored(self, oracle_setup, pool_schema):
        """Decoy features exist only in the attacker pool; flipping them
        cannot change the oracle's answer."""
        oracle, _, train_pool = oracle_setup
        X = np.array(train_pool.X[:50])
        decoys = [i for i, n in enumerate(pool_schema.names) if n.startswith("decoy_")]
        assert decoys
        before = oracle.collect(X).y
        X2 = X.copy()
        X2[:, decoys] = 999.0
        np.testing.assert_array_equal(before, oracle.collect(X2).y)

    def test_out_of_range_query_rejected(self, oracle_setup, pool_schema):
        oracle, _, _ = oracle_setup
        with pytest.raises(ValidationError):
            oracle.query(np.full(len(pool_schema), -1e9))


class TestCorpus:
    def test_corpus_validates_alignment(self, pool_schema, small_dataset):
        with pytest.raises(ValidationError):
            EavesdropCorpus(
                pool_schema, small_dataset.X[:5], np.zeros(4, dtype=int), ("a", "b")
            )

    def test_corpus_len_and_classes(self, oracle_setup):
        oracle, _, train_pool = oracle_setup
        corpus = oracle.collect(train_pool.X[:40])
        assert len(corpus) == 40
        assert corpus.n_classes == len(train_pool.class_labels)
