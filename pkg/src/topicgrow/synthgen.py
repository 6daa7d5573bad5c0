"""Synthetic corpus generation with known ground-truth topics.

Documents follow the standard Dirichlet-multinomial generative process: topic
word distributions are symmetric-Dirichlet draws kept only if sufficiently far
from all previously accepted topics, each document draws a topic mixture and
then samples tokens topic-by-topic. All randomness flows through named
counter-based streams so the same seed reproduces the corpus bit-for-bit, even
if documents are generated in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Vocabulary
from .errors import AlgorithmError, DataError

# One Philox stream per logical unit: stream 0 draws the topics, stream d+1
# draws document d (mixture, then assignments, then words).
RNG_ALGORITHM = "numpy.random.Philox4x64 key=(seed, stream); stream 0 topics, stream d+1 document d"

_CANDIDATE_BATCH = 256
_MAX_REJECTIONS_PER_TOPIC = 10_000


@dataclass(frozen=True)
class SynthConfig:
    """Generator parameters. Defaults follow the paper-scale profile."""

    seed: int
    n_docs: int = 1000
    doc_len: int = 200
    n_topics: int = 20
    vocab_size: int = 1000
    alpha: float = 0.1
    beta: float = 0.01
    min_topic_dist: float = 0.5

    def __post_init__(self):
        if min(self.n_docs, self.doc_len, self.n_topics, self.vocab_size) < 1:
            raise DataError("synth sizes must be positive")
        if self.alpha <= 0 or self.beta <= 0:
            raise DataError("Dirichlet parameters must be positive")
        if not 0 <= self.min_topic_dist < math.sqrt(2):
            raise DataError("min_topic_dist must lie in [0, sqrt(2))")
        if self.seed < 0:
            raise DataError("seed must be non-negative")


#: Fast profile for tests and experimentation; paper-scale is the default.
PROFILES = {
    "paper": dict(n_docs=1000, doc_len=200, n_topics=20, vocab_size=1000),
    "desk": dict(n_docs=200, doc_len=100, n_topics=10, vocab_size=500),
}


@dataclass
class SyntheticTruth:
    """Ground truth emitted alongside a generated corpus.

    ``assignments`` holds the per-token (topic, word) draws of each document,
    retained so statistical checks can condition on the latent variables.
    """

    topics: np.ndarray
    doc_mixes: np.ndarray
    assignments: list


def stream_rng(seed, stream):
    """Counter-based generator for one logical stream of a seeded run."""
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def term_name(i, vocab_size):
    width = len(str(vocab_size - 1))
    return f"w{i:0{width}d}"


def make_vocabulary(vocab_size):
    return Vocabulary([term_name(i, vocab_size) for i in range(vocab_size)])


def sample_distinct_topics(config, rng=None):
    """Draw topic rows from Dirichlet(beta) keeping only well-separated ones.

    A candidate is accepted iff its minimum L2 distance to every previously
    accepted topic exceeds ``min_topic_dist``. Candidates are drawn in fixed
    batches so the stream consumption, and hence the result, is reproducible.
    """
    if rng is None:
        rng = stream_rng(config.seed, 0)
    alpha = np.full(config.vocab_size, config.beta)
    accepted = []
    rejections = 0
    budget = _MAX_REJECTIONS_PER_TOPIC * config.n_topics
    while len(accepted) < config.n_topics:
        batch = rng.dirichlet(alpha, size=_CANDIDATE_BATCH)
        for cand in batch:
            if len(accepted) == config.n_topics:
                break
            if accepted:
                dmin = np.sqrt(((np.asarray(accepted) - cand) ** 2).sum(axis=1)).min()
            else:
                dmin = np.inf
            if dmin > config.min_topic_dist:
                accepted.append(cand)
            else:
                rejections += 1
                if rejections > budget:
                    raise AlgorithmError(
                        f"distinctness threshold unsatisfiable: {rejections} rejections "
                        f"for {config.n_topics} topics at min_topic_dist="
                        f"{config.min_topic_dist}; lower the threshold or enlarge the vocabulary"
                    )
    return np.asarray(accepted)


def generate_corpus(config):
    """Generate (Corpus, SyntheticTruth) for the given configuration.

    Every document has exactly ``doc_len`` tokens: a topic mixture is drawn
    from Dirichlet(alpha), each token draws a topic from the mixture and a
    word from that topic. Token-level assignments are kept on the truth
    object.
    """
    topics = sample_distinct_topics(config)
    vocab = make_vocabulary(config.vocab_size)
    k = config.n_topics

    doc_mixes = np.empty((config.n_docs, k))
    docs, doc_ids, assignments = [], [], []
    id_width = len(str(config.n_docs - 1))
    for d in range(config.n_docs):
        rng = stream_rng(config.seed, d + 1)
        mix = rng.dirichlet(np.full(k, config.alpha))
        doc_mixes[d] = mix
        z = rng.choice(k, size=config.doc_len, p=mix)
        w = np.empty(config.doc_len, dtype=np.int64)
        for t in range(k):
            sel = z == t
            n_t = int(sel.sum())
            if n_t:
                w[sel] = rng.choice(config.vocab_size, size=n_t, p=topics[t])
        counts = np.bincount(w, minlength=config.vocab_size)
        ids = np.nonzero(counts)[0]
        docs.append((ids, counts[ids]))
        doc_ids.append(f"d{d:0{id_width}d}")
        assignments.append((z.astype(np.int64), w))

    corpus = Corpus(vocab, docs, doc_ids)
    truth = SyntheticTruth(topics=topics, doc_mixes=doc_mixes, assignments=assignments)
    return corpus, truth
