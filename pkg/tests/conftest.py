import os
from pathlib import Path

import numpy as np
import pytest

from bspai.sparsemat import SparseMatrix

# populated by test_acceptance, printed after the run so the verdict
# lines survive pytest's output capture
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance summary")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_sparse(n, seed, diag=4.0, extra=6, decades=5, jitter=True):
    """Random square test matrix: dominant diagonal plus `extra` off-diagonal
    entries per row spread over `decades` orders of magnitude."""
    rng = np.random.default_rng(seed)
    entries = {}
    for i in range(n):
        d = diag * (1.0 + 0.25 * rng.random()) if jitter else diag
        entries[(i, i)] = d
        for _ in range(extra):
            j = int(rng.integers(0, n))
            if j == i:
                continue
            mag = 10.0 ** -float(rng.integers(0, decades))
            entries[(i, j)] = float(rng.normal()) * mag
    keys = sorted(entries)
    rows = [k[0] for k in keys]
    cols = [k[1] for k in keys]
    vals = [entries[k] for k in keys]
    return SparseMatrix.from_coo(n, n, rows, cols, vals)


def corpus_dir() -> Path:
    return Path(os.environ.get("BSPAI_MATRIX_DIR",
                               Path(__file__).resolve().parent.parent
                               / "data" / "matrices"))


def corpus_path(name: str):
    p = corpus_dir() / f"{name}.mtx"
    return p if p.exists() else None


def require_corpus(*names):
    missing = [n for n in names if corpus_path(n) is None]
    if missing:
        pytest.skip(f"matrix files not available: {', '.join(missing)} "
                    f"(see scripts/fetch_matrices.sh)")


@pytest.fixture(scope="session")
def corpus_cache():
    """Shared per-session store for expensive per-matrix artifacts."""
    return {}
