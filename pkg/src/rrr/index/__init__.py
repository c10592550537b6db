from .analysis import STOPWORDS, IndexParams, tokenize
from .bm25 import IndexBuildError, InvertedIndex, build_index, search
from .storage import IndexFormatError, load, save

__all__ = [
    "STOPWORDS",
    "IndexBuildError",
    "IndexFormatError",
    "IndexParams",
    "InvertedIndex",
    "build_index",
    "load",
    "save",
    "search",
    "tokenize",
]
