"""Concern-oriented software architecture recovery toolkit.

Classifies each source entity of a codebase against user-named concerns
with one-vs-rest Naive Bayes text classifiers, clusters entities by their
dominant concern, tracks results incrementally across versions through a
content-hash cache, and renders the recovered view as a colored
directory-tree graph.
"""

__version__ = "0.1.0"


class ConcernMapError(Exception):
    """Base class for all toolkit errors."""
