"""PLSA extended with a per-document goodness-of-fit test that grows the topic set.

Each document is scored by ``delta``: the gap between the log-likelihood under
its own unsmoothed language model (the best any model can do) and the best
mixture fit achievable with the current topics. When the gap exceeds a
threshold ``epsilon``, the document's language model is promoted to a new
topic. A run therefore explores increasing numbers of topics within a single
EM execution while monotonically improving the penalized objective
``log-likelihood - epsilon * K``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .corpus import doc_language_model
from .errors import AlgorithmError, DataError
from .plsa import EmConfig, TraceRow, _floor_rows, e_step_doc, fold_in, log_likelihood

logger = logging.getLogger(__name__)

# Warm-start blend for fold-in restarts: mostly the previous mix, plus enough
# uniform mass that newly appended topics are reachable (multiplicative EM
# updates never revive an exactly-zero weight).
_WARM_KEEP = 0.9


@dataclass
class NplsaState:
    """Model state of a growth run.

    ``mixes`` is ragged: each document's mix covers the first ``fitted_counts[d]``
    topics, the number of topics that existed when the document was last
    visited. ``epsilon`` is the spawn threshold in nats.
    """

    topics: np.ndarray
    mixes: list
    fitted_counts: np.ndarray
    epsilon: float

    @property
    def k(self):
        return self.topics.shape[0]


@dataclass(frozen=True)
class PenalizedObjective:
    loglik: float
    k: int
    epsilon: float
    value: float


def doc_self_loglik(doc):
    """Log-likelihood of a document under its own unsmoothed MLE model."""
    _, counts = doc
    counts = np.asarray(counts, dtype=np.float64)
    return float(np.dot(counts, np.log(counts / counts.sum())))


def warm_start_mix(mix, k):
    """Zero-pad a stored mix to k entries and blend with uniform mass."""
    padded = np.zeros(k)
    padded[: mix.size] = mix
    return _WARM_KEEP * padded + (1.0 - _WARM_KEEP) / k


def delta(doc, topics, config, init_mix=None):
    """Goodness-of-fit deficit of a document under the given topics, in nats.

    Returns log p(doc | own MLE) - log p(doc | best mix of topics), the
    likelihood-ratio distance between the saturated one-document model and the
    fold-in fit. Always >= 0 up to smoothing and convergence slack.
    """
    _, fitted_ll = fold_in(doc, topics, config, init_mix=init_mix)
    return doc_self_loglik(doc) - fitted_ll


def _best_fit(doc, topics, config, old_mix):
    """Fold a document in, but never fall below its previous fit.

    The fold-in warm start blends in uniform mass so new topics are reachable;
    when it stops short of the optimum it can land below the value of the old
    (zero-padded) mix, which would break the monotonicity of the penalized
    objective. Returning whichever of the two fits is better restores the
    guarantee while still letting new topics be adopted.
    """
    k = topics.shape[0]
    fit_mix, fit_ll = fold_in(doc, topics, config, init_mix=warm_start_mix(old_mix, k))
    ids, counts = doc
    probs = old_mix @ topics[: old_mix.size, ids]
    if np.all(probs > 0.0):
        old_ll = float(np.dot(counts, np.log(probs)))
        if old_ll > fit_ll:
            padded = np.zeros(k)
            padded[: old_mix.size] = old_mix
            return padded, old_ll
    return fit_mix, fit_ll


def _prune_dead_topics(topics, mix_masses, fitted_counts):
    """Drop topics whose accumulated M-step mass is exactly zero.

    A topic with zero total mass has zero posterior weight in every document,
    so removing it leaves every likelihood unchanged and only reduces the
    topic-count penalty. Returns updated (topics, mix_masses, fitted_counts).
    """
    alive = topics.sum(axis=1) > 0.0
    if alive.all():
        return topics, mix_masses, fitted_counts
    n_dead = int((~alive).sum())
    logger.info("pruning %d dead topic(s)", n_dead)
    topics = topics[alive]
    new_masses = []
    new_counts = np.empty_like(fitted_counts)
    for d, mass in enumerate(mix_masses):
        t_d = fitted_counts[d]
        new_masses.append(mass[alive[: mass.size]])
        new_counts[d] = int(alive[:t_d].sum())
    return topics, new_masses, new_counts


def train_nplsa(corpus, epsilon, config, max_topics=1000, order_seed=None):
    """Grow topics during EM with spawn threshold ``epsilon``.

    Starts from one random topic. Each sweep visits the documents in corpus
    order (or in a fixed permutation drawn from ``order_seed``); per document
    it computes ``delta`` and either promotes the document's language model to
    a new topic, runs the standard E-step (if the document has already been
    fitted against all current topics), or folds the document in against the
    topics it has not seen. After the sweep the M-step re-estimates all
    parameters. The run stops once a full sweep spawns nothing and the
    log-likelihood has plateaued. Returns (NplsaState, trace).
    """
    if epsilon <= 0:
        raise DataError("epsilon must be > 0")
    d_count = corpus.n_docs
    rng = np.random.default_rng(config.seed)
    topics = _floor_rows(rng.dirichlet(np.ones(corpus.n_terms), size=1), config.smoothing_floor)
    mixes = [np.ones(1) for _ in range(d_count)]
    fitted = np.ones(d_count, dtype=np.int64)
    self_lls = np.array([doc_self_loglik(corpus.docs[d]) for d in range(d_count)])

    if order_seed is None:
        order = np.arange(d_count)
    else:
        order = np.random.default_rng(order_seed).permutation(d_count)

    trace = []
    prev_ll = None
    for sweep in range(1, config.max_iters + 1):
        t0 = time.perf_counter()
        spawned = 0
        posteriors = [None] * d_count
        for d in order:
            doc = corpus.docs[d]
            ids, _ = doc
            k = topics.shape[0]
            fit_mix, fit_ll = _best_fit(doc, topics, config, mixes[d])
            if self_lls[d] - fit_ll > epsilon:
                if k + 1 > max_topics:
                    raise AlgorithmError(
                        f"topic explosion: more than {max_topics} topics; "
                        f"raise epsilon (currently {epsilon}) or the topic cap"
                    )
                topics = np.vstack([topics, doc_language_model(corpus, d)])
                post = np.zeros((ids.size, k + 1))
                post[:, k] = 1.0
                spawned += 1
            elif fitted[d] == k:
                post = e_step_doc(corpus, d, topics, mixes[d])
            else:
                post = e_step_doc(corpus, d, topics, fit_mix)
            fitted[d] = topics.shape[0]
            posteriors[d] = post

        k = topics.shape[0]
        topic_mass = np.zeros((k, corpus.n_terms))
        mix_masses = []
        for d in range(d_count):
            ids, counts = corpus.docs[d]
            weighted = posteriors[d] * counts[:, None]
            topic_mass[: weighted.shape[1], ids] += weighted.T
            mix_masses.append(weighted.sum(axis=0))
        topic_mass, mix_masses, fitted = _prune_dead_topics(topic_mass, mix_masses, fitted)
        topics = _floor_rows(topic_mass, config.smoothing_floor)
        mixes = [mass / mass.sum() for mass in mix_masses]

        ll = log_likelihood(corpus, topics, mixes)
        k = topics.shape[0]
        trace.append(
            TraceRow(
                iteration=sweep,
                k=k,
                loglik=ll,
                objective=ll - epsilon * k,
                epsilon=epsilon,
                wall_ms=(time.perf_counter() - t0) * 1000.0,
            )
        )
        if (
            spawned == 0
            and prev_ll is not None
            and abs(ll - prev_ll) <= config.rel_tol * (abs(prev_ll) + 1e-12)
        ):
            break
        prev_ll = ll

    state = NplsaState(topics=topics, mixes=mixes, fitted_counts=fitted, epsilon=epsilon)
    return state, trace


def penalized_objective(state, corpus, config=None):
    """Evaluate log-likelihood minus epsilon times the topic count.

    Documents last fitted against fewer topics than currently exist are
    refreshed by fold-in (without mutating the state) so the likelihood
    reflects the full topic set.
    """
    if config is None:
        config = EmConfig(seed=0)
    k = state.k
    mixes = []
    for d in range(corpus.n_docs):
        mix = state.mixes[d]
        if state.fitted_counts[d] < k:
            mix, _ = _best_fit(corpus.docs[d], state.topics, config, mix)
        mixes.append(mix)
    ll = log_likelihood(corpus, state.topics, mixes)
    return PenalizedObjective(
        loglik=ll, k=k, epsilon=state.epsilon, value=ll - state.epsilon * k
    )
