"""querytax: data-driven query-intent taxonomies from embedded corpora."""

__version__ = "0.1.0"

from . import classifier, cluster, corpus, interpret, reduce, sampling, search, validate  # noqa: F401
from .errors import QuerytaxError  # noqa: F401
