"""Exception types shared across the package."""


class TopicModelError(Exception):
    """Base class for all errors raised by this package."""


class DataError(TopicModelError):
    """Invalid or unusable input: bad counts, empty corpora, mismatched vocabularies."""


class AlgorithmError(TopicModelError):
    """A training or generation procedure failed (topic explosion, rejection overflow)."""
