"""Task/subtask hierarchy mining over search query logs."""

try:
    from ._taskforest import (  # type: ignore[import-not-found]
        DataError,
        build,
        evaluate,
        gamma_poisson_log_pmf,
        ingest,
        mixing_log_pi,
        normalize_query,
        pairwise_f1,
        predict_terms,
        prune,
        __version__,
    )
except ImportError:  # extension built out-of-tree (plain CMake layout)
    from _taskforest import (  # type: ignore[import-not-found]
        DataError,
        build,
        evaluate,
        gamma_poisson_log_pmf,
        ingest,
        mixing_log_pi,
        normalize_query,
        pairwise_f1,
        predict_terms,
        prune,
        __version__,
    )

__all__ = [
    "DataError",
    "build",
    "evaluate",
    "gamma_poisson_log_pmf",
    "ingest",
    "mixing_log_pi",
    "normalize_query",
    "pairwise_f1",
    "predict_terms",
    "prune",
    "__version__",
]
