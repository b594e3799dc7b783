"""Gram-kernel backend selection.

The hot covariance loops exist twice: numba ``@njit`` versions in
``_gram_numba`` and vectorized numpy versions in ``_gram_numpy``. The env
flag ``NOSTILL_BACKEND`` picks one:

* ``auto`` (default): numba if it imports, numpy otherwise
* ``numba``: require numba, raise if unavailable
* ``numpy``: force the pure-numpy fallback

``benchmarks/bench_gram.py`` compares the two paths.
"""

import os

CHOICES = ("auto", "numba", "numpy")


def _resolve():
    choice = os.environ.get("NOSTILL_BACKEND", "auto").strip().lower()
    if choice not in CHOICES:
        raise ValueError(
            f"NOSTILL_BACKEND must be one of {CHOICES}, got {choice!r}"
        )
    if choice in ("auto", "numba"):
        try:
            from nostill import _gram_numba
            return "numba", _gram_numba
        except ImportError:
            if choice == "numba":
                raise
    from nostill import _gram_numpy
    return "numpy", _gram_numpy


name, _impl = _resolve()

gram_ch = _impl.gram_ch
gram_iso = _impl.gram_iso
gram_ns = _impl.gram_ns
