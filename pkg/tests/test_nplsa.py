import math

import numpy as np
import pytest

from topicgrow.corpus import background_model, doc_language_model, ingest_sparse
from topicgrow.errors import AlgorithmError, DataError
from topicgrow.nplsa import (
    NplsaState,
    delta,
    doc_self_loglik,
    penalized_objective,
    train_nplsa,
)
from topicgrow.plsa import EmConfig, _floor_rows


def random_corpus(rng, n_docs=8, n_terms=10, max_count=6):
    triples = []
    for d in range(n_docs):
        for t in rng.choice(n_terms, size=rng.integers(2, n_terms), replace=False):
            triples.append((d, f"t{t}", int(rng.integers(1, max_count))))
    return ingest_sparse(triples)


class TestDelta:
    def test_self_fit_is_near_zero(self):
        corpus = ingest_sparse([(0, "a", 2), (0, "b", 2), (1, "b", 1), (1, "c", 3)])
        topics = np.vstack([doc_language_model(corpus, d) for d in range(2)])
        topics = _floor_rows(topics, 1e-9)
        # tight inner budget so convergence slack does not mask the floor slack
        config = EmConfig(seed=0, fold_in_max_iters=500, fold_in_rel_tol=1e-13)
        for d in range(2):
            assert delta(corpus.docs[d], topics, config) <= 1e-6

    def test_floored_one_hot_hand_value(self):
        # doc {a:4} against the floored one-hot-at-b topic: 0 - 4*log(1e-9)
        corpus = ingest_sparse([(0, "a", 4), (1, "b", 1)])
        topics = np.array([[1e-9, 1.0 - 1e-9]])
        value = delta(corpus.docs[0], topics, EmConfig(seed=0))
        assert value == pytest.approx(-4 * math.log(1e-9), rel=1e-9)

    def test_never_meaningfully_negative(self):
        rng = np.random.default_rng(5)
        config = EmConfig(seed=0)
        for _ in range(10):
            corpus = random_corpus(rng, n_docs=4, n_terms=8)
            topics = rng.dirichlet(np.ones(corpus.n_terms), size=int(rng.integers(1, 4)))
            for d in range(corpus.n_docs):
                assert delta(corpus.docs[d], topics, config) >= -1e-9

    def test_self_loglik(self):
        doc = (np.array([0, 1]), np.array([1, 3]))
        expected = math.log(0.25) + 3 * math.log(0.75)
        assert doc_self_loglik(doc) == pytest.approx(expected, abs=1e-12)


class TestTrainNplsa:
    def test_huge_epsilon_behaves_like_k1_plsa(self):
        corpus = ingest_sparse(
            [(0, "a", 3), (0, "b", 1), (1, "b", 2), (1, "c", 4), (2, "a", 1), (2, "c", 1)]
        )
        state, trace = train_nplsa(corpus, 1e9, EmConfig(seed=4, max_iters=60))
        assert state.k == 1
        np.testing.assert_allclose(state.topics[0], background_model(corpus), atol=1e-6)

    def test_disjoint_docs_saturate_at_k2(self):
        corpus = ingest_sparse([(0, "a", 4), (0, "b", 2), (1, "c", 3), (1, "d", 3)])
        state, _ = train_nplsa(corpus, 0.1, EmConfig(seed=7, max_iters=80))
        assert state.k == 2
        mles = [doc_language_model(corpus, d) for d in range(2)]
        for topic in state.topics:
            assert min(np.linalg.norm(topic - mle) for mle in mles) < 0.05

    def test_objective_trace_non_decreasing(self):
        rng = np.random.default_rng(11)
        corpus = random_corpus(rng, n_docs=10, n_terms=12)
        for eps in (2.0, 8.0, 25.0):
            _, trace = train_nplsa(corpus, eps, EmConfig(seed=1, max_iters=60))
            values = [row.objective for row in trace]
            for prev, cur in zip(values, values[1:]):
                assert cur >= prev - 1e-6 * abs(prev)

    def test_epsilon_monotonicity(self):
        rng = np.random.default_rng(13)
        corpus = random_corpus(rng, n_docs=12, n_terms=14)
        config = EmConfig(seed=3, max_iters=60)
        ks = [train_nplsa(corpus, eps, config)[0].k for eps in (0.5, 2.0, 8.0, 32.0)]
        assert ks == sorted(ks, reverse=True)

    def test_topic_cap_raises(self):
        corpus = ingest_sparse([(0, "a", 5), (1, "b", 5), (2, "c", 5), (3, "d", 5)])
        with pytest.raises(AlgorithmError, match="topic explosion"):
            train_nplsa(corpus, 0.01, EmConfig(seed=0), max_topics=2)

    def test_invalid_epsilon(self):
        corpus = ingest_sparse([(0, "a", 1)])
        with pytest.raises(DataError):
            train_nplsa(corpus, 0.0, EmConfig(seed=0))

    def test_state_invariants(self):
        rng = np.random.default_rng(17)
        corpus = random_corpus(rng)
        state, trace = train_nplsa(corpus, 5.0, EmConfig(seed=2, max_iters=50))
        assert np.all(state.fitted_counts <= state.k)
        for d, mix in enumerate(state.mixes):
            assert mix.size == state.fitted_counts[d]
            assert abs(mix.sum() - 1.0) < 1e-9
        np.testing.assert_allclose(state.topics.sum(axis=1), 1.0, atol=1e-9)
        ks = [row.k for row in trace]
        assert ks == sorted(ks)  # growth never loses live topics on this corpus

    def test_order_seed_reproducible(self):
        rng = np.random.default_rng(19)
        corpus = random_corpus(rng)
        config = EmConfig(seed=5, max_iters=40)
        s1, t1 = train_nplsa(corpus, 4.0, config, order_seed=99)
        s2, t2 = train_nplsa(corpus, 4.0, config, order_seed=99)
        assert s1.k == s2.k
        assert np.array_equal(s1.topics, s2.topics)
        assert [r.loglik for r in t1] == [r.loglik for r in t2]


class TestPenalizedObjective:
    def test_arithmetic(self):
        corpus = ingest_sparse([(0, "a", 1)])
        state = NplsaState(
            topics=np.array([[1.0]]),
            mixes=[np.array([1.0])],
            fitted_counts=np.array([1]),
            epsilon=10.0,
        )
        obj = penalized_objective(state, corpus)
        assert obj.loglik == 0.0
        assert obj.value == -10.0
        assert obj.value == obj.loglik - obj.epsilon * obj.k

    def test_spawn_improves_objective(self):
        # three docs, two clearly shared and one outlier; spawning the outlier's
        # model must beat paying the per-topic penalty when delta > epsilon
        corpus = ingest_sparse(
            [(0, "a", 6), (0, "b", 2), (1, "a", 4), (1, "b", 4), (2, "x", 5), (2, "y", 5)]
        )
        config = EmConfig(seed=1, max_iters=60)
        base, _ = train_nplsa(corpus, 1e9, config)  # K=1 background fit
        eps = 3.0
        d_out = 2
        gap = delta(corpus.docs[d_out], base.topics, config)
        assert gap > eps

        before = penalized_objective(
            NplsaState(base.topics, base.mixes, base.fitted_counts, eps), corpus, config
        )
        spawned = NplsaState(
            topics=np.vstack([base.topics, doc_language_model(corpus, d_out)]),
            mixes=[m.copy() for m in base.mixes[:d_out]] + [np.array([0.0, 1.0])],
            fitted_counts=np.array([1, 1, 2]),
            epsilon=eps,
        )
        after = penalized_objective(spawned, corpus, config)
        assert after.value > before.value
