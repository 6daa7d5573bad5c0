"""Classical PLSA: EM training at fixed K, document fold-in, and likelihood evaluation.

Topics are a row-stochastic ``(K, V)`` array of word probabilities p(w|z);
document mixes are simplex vectors p(z|d), either a dense ``(D, K)`` array or a
ragged list of per-document vectors. Posteriors p(z|d,w) for one document are a
``(n_distinct_words, K)`` array over its distinct words.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmConfig:
    """Knobs shared by every EM loop in the package.

    ``rel_tol`` stops the outer loop when |dL/L| falls below it;
    ``smoothing_floor`` is the minimum probability kept in every topic row so
    a freshly spawned topic (a document MLE full of zeros) can still explain
    unseen words. The fold-in fields budget the inner per-document loop.
    """

    seed: int
    max_iters: int = 200
    rel_tol: float = 1e-5
    smoothing_floor: float = 1e-9
    fold_in_max_iters: int = 50
    fold_in_rel_tol: float = 1e-6

    def __post_init__(self):
        if self.max_iters < 1:
            raise DataError("max_iters must be >= 1")
        if self.rel_tol <= 0 or self.fold_in_rel_tol <= 0:
            raise DataError("rel_tol must be > 0")
        if not 0 <= self.smoothing_floor <= 1e-3:
            raise DataError("smoothing_floor must lie in [0, 1e-3]")


@dataclass
class TraceRow:
    """One line of a training trace; unset fields stay None.

    ``mean_delta`` and ``phase`` are in-memory diagnostics and are not part of
    the CSV serialization.
    """

    iteration: int
    k: int
    loglik: float | None = None
    objective: float | None = None
    diversity: float | None = None
    epsilon: float | None = None
    query_distance: float | None = None
    closest_topic: int | None = None
    wall_ms: float | None = None
    mean_delta: float | None = field(default=None, repr=False)
    phase: str = field(default="", repr=False)


def init_topics(k, n_terms, rng):
    """Draw k topic rows from a symmetric Dirichlet(1) over the vocabulary."""
    return rng.dirichlet(np.ones(n_terms), size=k)


def _floor_rows(mat, floor):
    """Clamp every entry to >= floor and renormalize rows to sum to 1.

    Entries already at the floor are exempt from rescaling so the floor is
    exact; the loop terminates because floored entries only accumulate.
    """
    mat = mat / mat.sum(axis=1, keepdims=True)
    if floor <= 0:
        return mat
    if mat.shape[1] * floor >= 0.5:
        raise DataError("smoothing_floor too large for this vocabulary size")
    for _ in range(50):
        low = mat < floor
        if not low.any():
            break
        budget = 1.0 - low.sum(axis=1, keepdims=True) * floor
        high_sum = np.where(low, 0.0, mat).sum(axis=1, keepdims=True)
        mat = np.where(low, floor, mat * (budget / high_sum))
    return mat


def e_step_doc(corpus, d, topics, mix):
    """Posterior p(z|d,w) over the distinct words of document d.

    Each row of the result is proportional to p(z|d) * p(w|z), normalized
    over topics.
    """
    ids, _ = corpus.docs[d]
    if mix.size != topics.shape[0]:
        raise DataError("mix length does not match the number of topics")
    joint = mix[None, :] * topics[:, ids].T
    denom = joint.sum(axis=1)
    if np.any(denom <= 0.0):
        raise DataError("unmodelable word: zero mixture probability in E-step")
    return joint / denom[:, None]


def accumulate_m_step(corpus, posteriors, k):
    """Sum count-weighted posteriors into unnormalized topic and mix masses.

    Accepts ragged posteriors: a document whose posterior has fewer than k
    columns contributes only to the leading topics (it was last fitted before
    the newer topics existed). Returns (topic_mass (k, V), mix_masses list).
    """
    topic_mass = np.zeros((k, corpus.n_terms))
    mix_masses = []
    for d, post in enumerate(posteriors):
        ids, counts = corpus.docs[d]
        weighted = post * counts[:, None]
        k_d = post.shape[1]
        topic_mass[:k_d, ids] += weighted.T
        mix_masses.append(weighted.sum(axis=0))
    return topic_mass, mix_masses


def m_step(corpus, posteriors, smoothing_floor=1e-9):
    """Re-estimate topics and mixes from per-document posteriors.

    p(z|d) is proportional to sum_w n(d,w) p(z|d,w); p(w|z) is proportional to
    sum_d n(d,w) p(z|d,w). Topic rows are floored then renormalized. A topic
    that received no mass at all is reset to the uniform distribution.
    """
    k = max(post.shape[1] for post in posteriors)
    topic_mass, mix_masses = accumulate_m_step(corpus, posteriors, k)
    dead = topic_mass.sum(axis=1) == 0.0
    if dead.any():
        logger.warning("m_step: %d topic(s) received zero mass, reset to uniform", dead.sum())
        topic_mass[dead] = 1.0
    topics = _floor_rows(topic_mass, smoothing_floor)
    mixes = np.zeros((corpus.n_docs, k))
    for d, mass in enumerate(mix_masses):
        mixes[d, : mass.size] = mass / mass.sum()
    return topics, mixes


def log_likelihood(corpus, topics, mixes):
    """Total log-likelihood sum_d sum_w n(d,w) log sum_z p(z|d) p(w|z), in nats.

    ``mixes`` may be a dense (D, K) array or a ragged list of per-document
    vectors covering only the leading topics.
    """
    if isinstance(mixes, np.ndarray) and mixes.ndim == 2:
        doc_idx, word_idx, counts = corpus.flat()
        denom = np.einsum("ij,ij->i", mixes[doc_idx], topics[:, word_idx].T)
        if np.any(denom <= 0.0):
            raise DataError("unmodelable word: zero mixture probability")
        return float(np.dot(counts, np.log(denom)))
    total = 0.0
    for d, mix in enumerate(mixes):
        ids, counts = corpus.docs[d]
        probs = mix @ topics[: mix.size, ids]
        if np.any(probs <= 0.0):
            raise DataError("unmodelable word: zero mixture probability")
        total += float(np.dot(counts, np.log(probs)))
    return total


def _em_sweep(corpus, topics, mixes, smoothing_floor):
    """One vectorized E+M pass over the whole corpus. Returns updated params."""
    doc_idx, word_idx, counts = corpus.flat()
    k = topics.shape[0]
    joint = mixes[doc_idx] * topics[:, word_idx].T
    denom = joint.sum(axis=1)
    if np.any(denom <= 0.0):
        raise DataError("unmodelable word: zero mixture probability in E-step")
    weighted = joint * (counts / denom)[:, None]
    topic_mass = np.empty((k, corpus.n_terms))
    new_mixes = np.empty((corpus.n_docs, k))
    for z in range(k):
        topic_mass[z] = np.bincount(word_idx, weights=weighted[:, z], minlength=corpus.n_terms)
        new_mixes[:, z] = np.bincount(doc_idx, weights=weighted[:, z], minlength=corpus.n_docs)
    dead = topic_mass.sum(axis=1) == 0.0
    if dead.any():
        logger.warning("m_step: %d topic(s) received zero mass, reset to uniform", dead.sum())
        topic_mass[dead] = 1.0
    topics = _floor_rows(topic_mass, smoothing_floor)
    new_mixes /= new_mixes.sum(axis=1, keepdims=True)
    return topics, new_mixes


def em_refine(corpus, topics, mixes, config, trace=None, start_iter=1, phase=""):
    """Run full EM at fixed K from the given parameters until convergence.

    Appends one TraceRow per iteration when ``trace`` is given and returns
    (topics, mixes, last_loglik).
    """
    prev_ll = None
    ll = None
    for it in range(config.max_iters):
        t0 = time.perf_counter()
        topics, mixes = _em_sweep(corpus, topics, mixes, config.smoothing_floor)
        ll = log_likelihood(corpus, topics, mixes)
        wall = (time.perf_counter() - t0) * 1000.0
        if trace is not None:
            trace.append(
                TraceRow(
                    iteration=start_iter + it,
                    k=topics.shape[0],
                    loglik=ll,
                    wall_ms=wall,
                    phase=phase,
                )
            )
        if prev_ll is not None and abs(ll - prev_ll) <= config.rel_tol * (abs(prev_ll) + 1e-12):
            break
        prev_ll = ll
    return topics, mixes, ll


def train_plsa(corpus, k, config):
    """Train PLSA with k topics by EM.

    Topics start as Dirichlet(1) draws seeded by ``config.seed`` and mixes
    start uniform; iteration stops on a relative log-likelihood plateau or
    after ``config.max_iters`` sweeps. Returns (topics, mixes, trace).
    """
    if k < 1:
        raise DataError("k must be >= 1")
    rng = np.random.default_rng(config.seed)
    topics = init_topics(k, corpus.n_terms, rng)
    mixes = np.full((corpus.n_docs, k), 1.0 / k)
    trace = []
    topics, mixes, _ = em_refine(corpus, topics, mixes, config, trace=trace)
    return topics, mixes, trace


def fold_in(doc, topics, config, init_mix=None, ll_history=None):
    """Fit one document's topic proportions against frozen topics.

    ``doc`` is a sparse row (term_ids, counts). Holding p(w|z) fixed, the mix
    p(z|d) is re-estimated by alternating the posterior and mix updates until
    the document log-likelihood plateaus. The problem is concave in the mix,
    so any interior starting point reaches the same optimum; ``init_mix``
    only affects convergence speed. Returns (mix, fitted log-likelihood).
    """
    ids, counts = doc
    k = topics.shape[0]
    rows = topics[:, ids].T
    mix = np.full(k, 1.0 / k) if init_mix is None else np.asarray(init_mix, dtype=float)
    prev_ll = None
    for _ in range(config.fold_in_max_iters):
        probs = rows @ mix
        if np.any(probs <= 0.0):
            raise DataError("unmodelable word: zero mixture probability in fold-in")
        ll = float(np.dot(counts, np.log(probs)))
        if ll_history is not None:
            ll_history.append(ll)
        if prev_ll is not None and abs(ll - prev_ll) <= config.fold_in_rel_tol * (
            abs(prev_ll) + 1e-12
        ):
            return mix, ll
        prev_ll = ll
        post = rows * (mix[None, :] / probs[:, None])
        mix = post.T @ counts
        mix /= mix.sum()
    probs = rows @ mix
    ll = float(np.dot(counts, np.log(probs)))
    if ll_history is not None:
        ll_history.append(ll)
    return mix, ll


def fold_in_all(corpus, topics, config, init_mixes=None):
    """Vectorized fold-in of every document at once against frozen topics.

    Equivalent to calling fold_in per document (iteration continues until the
    slowest document plateaus). Returns (mixes (D, K), fitted lls (D,)).
    """
    doc_idx, word_idx, counts = corpus.flat()
    d_count, k = corpus.n_docs, topics.shape[0]
    rows = topics[:, word_idx].T
    if init_mixes is None:
        mixes = np.full((d_count, k), 1.0 / k)
    else:
        mixes = np.asarray(init_mixes, dtype=float).copy()
    prev_lls = None
    for _ in range(config.fold_in_max_iters):
        probs = np.einsum("ij,ij->i", mixes[doc_idx], rows)
        if np.any(probs <= 0.0):
            raise DataError("unmodelable word: zero mixture probability in fold-in")
        lls = np.bincount(doc_idx, weights=counts * np.log(probs), minlength=d_count)
        if prev_lls is not None and np.all(
            np.abs(lls - prev_lls) <= config.fold_in_rel_tol * (np.abs(prev_lls) + 1e-12)
        ):
            return mixes, lls
        prev_lls = lls
        weighted = mixes[doc_idx] * rows * (counts / probs)[:, None]
        for z in range(k):
            mixes[:, z] = np.bincount(doc_idx, weights=weighted[:, z], minlength=d_count)
        mixes /= mixes.sum(axis=1, keepdims=True)
    probs = np.einsum("ij,ij->i", mixes[doc_idx], rows)
    lls = np.bincount(doc_idx, weights=counts * np.log(probs), minlength=d_count)
    return mixes, lls
