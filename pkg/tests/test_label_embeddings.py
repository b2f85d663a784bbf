import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slrank import label_embeddings as le
from slrank.errors import ContractError, ParameterError


def make_corpus(rng, pools, n=40, length=(3, 6)):
    """One classification example per draw: words sampled from the label's pool."""
    corpus = []
    for _ in range(n):
        label = int(rng.integers(0, len(pools)))
        m = int(rng.integers(*length))
        words = rng.choice(pools[label], size=m).tolist()
        corpus.append((words, label))
    return corpus


class TestPretrain:
    def test_table_shape(self, rng):
        pools = [[0, 1], [2, 3], [4, 5]]
        corpus = make_corpus(rng, pools, n=12)
        cfg = le.PretrainConfig(n_labels=3, n_words=6, epochs=1, dropout=0.0, seed=4)
        for kind in (le.KIND_DOMAIN, le.KIND_INTENT):
            table, _ = le.pretrain_label_embeddings(corpus, kind, cfg)
            assert table.table.shape == (3, 50)

    def test_zero_epochs_equals_random_init(self):
        corpus = [([0, 1], 0), ([2, 3], 1)]
        cfg = le.PretrainConfig(n_labels=2, n_words=4, epochs=0, seed=9)
        t1, losses = le.pretrain_label_embeddings(corpus, le.KIND_DOMAIN, cfg)
        t2, _ = le.pretrain_label_embeddings(corpus, le.KIND_DOMAIN, cfg)
        assert losses == []
        assert np.array_equal(t1.table, t2.table)
        rng = np.random.default_rng(9)
        model = le._init_model(rng, cfg)
        assert np.array_equal(t1.table, model.proj.value)

    def test_shared_vocab_labels_more_similar_than_disjoint(self):
        # Labels 0 and 1 draw from one pool; labels 2 and 3 from disjoint pools.
        rng = np.random.default_rng(7)
        shared = list(range(0, 6))
        pools = [shared, shared, list(range(6, 12)), list(range(12, 18))]
        corpus = make_corpus(rng, pools, n=160, length=(3, 6))
        cfg = le.PretrainConfig(n_labels=4, n_words=18, epochs=6, lr=2e-3,
                                dropout=0.0, seed=3)
        table, _ = le.pretrain_label_embeddings(corpus, le.KIND_DOMAIN, cfg)

        def cos(a, b):
            return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))

        same = cos(table.row(0), table.row(1))
        disjoint = cos(table.row(2), table.row(3))
        assert same > disjoint

    def test_missing_label_warned_and_zeroed(self):
        corpus = [([0, 1], 0), ([1, 2], 0)]
        cfg = le.PretrainConfig(n_labels=3, n_words=3, epochs=1, dropout=0.0, seed=1)
        with pytest.warns(UserWarning, match="absent"):
            table, _ = le.pretrain_label_embeddings(corpus, le.KIND_DOMAIN, cfg)
        assert np.array_equal(table.row(1), np.zeros(50))
        assert np.array_equal(table.row(2), np.zeros(50))
        assert not np.array_equal(table.row(0), np.zeros(50))

    def test_slot_kind_multilabel(self, rng):
        corpus = [([0, 1, 2], [0, 2]), ([3, 4], [1]), ([0, 4], [])]
        cfg = le.PretrainConfig(n_labels=3, n_words=5, epochs=2, dropout=0.0, seed=2)
        table, losses = le.pretrain_label_embeddings(corpus, le.KIND_SLOT, cfg)
        assert table.table.shape == (3, 50)
        assert len(losses) == 2

    def test_loss_non_increasing_moving_average(self):
        rng = np.random.default_rng(21)
        pools = [[0, 1, 2], [3, 4, 5]]
        corpus = make_corpus(rng, pools, n=60)
        cfg = le.PretrainConfig(n_labels=2, n_words=6, epochs=6, lr=2e-3,
                                dropout=0.0, seed=5)
        _, losses = le.pretrain_label_embeddings(corpus, le.KIND_INTENT, cfg)
        head = np.mean(losses[:2])
        tail = np.mean(losses[-2:])
        assert tail <= head + 1e-6

    def test_empty_corpus_rejected(self):
        cfg = le.PretrainConfig(n_labels=2, n_words=2)
        with pytest.raises(ContractError):
            le.pretrain_label_embeddings([], le.KIND_DOMAIN, cfg)


class TestCombineSlotEmbeddings:
    def table(self):
        rng = np.random.default_rng(0)
        return le.LabelEmbeddingTable(le.KIND_SLOT, rng.normal(size=(5, 50)))

    def test_empty_sum_is_zero(self):
        assert np.array_equal(le.combine_slot_embeddings([], self.table()), np.zeros(50))

    def test_singleton_is_row(self):
        t = self.table()
        assert np.array_equal(le.combine_slot_embeddings([3], t), t.row(3))

    def test_commutative(self):
        t = self.table()
        a = le.combine_slot_embeddings([1, 4], t)
        b = le.combine_slot_embeddings([4, 1], t)
        assert np.array_equal(a, b)

    def test_unknown_slot_rejected(self):
        with pytest.raises(ParameterError):
            le.combine_slot_embeddings([9], self.table())

    def test_wrong_kind_rejected(self):
        t = le.LabelEmbeddingTable(le.KIND_DOMAIN, np.zeros((2, 50)))
        with pytest.raises(ContractError):
            le.combine_slot_embeddings([0], t)

    @given(st.lists(st.integers(0, 4), max_size=8), st.lists(st.integers(0, 4), max_size=8))
    @settings(max_examples=200, deadline=None)
    def test_additive_over_multiset_union(self, xs, ys):
        t = self.table()
        combined = le.combine_slot_embeddings(xs + ys, t)
        split = le.combine_slot_embeddings(xs, t) + le.combine_slot_embeddings(ys, t)
        assert np.allclose(combined, split, atol=1e-9)

    @given(st.permutations(list(range(5))))
    @settings(max_examples=50, deadline=None)
    def test_order_invariant(self, perm):
        t = self.table()
        assert np.allclose(le.combine_slot_embeddings(perm, t),
                           le.combine_slot_embeddings(list(range(5)), t), atol=1e-12)
