import csv
from pathlib import Path

import numpy as np
import pytest

GATE_LINES = pytest.StashKey[list]()


def write_table(path: Path, header, rows, delimiter=","):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def cohort_like(tmp_path: Path, n_a=100, n_b=50, d=3460, seed=7, n_dead=1):
    """Count matrix shaped like a small two-class cfRNA cohort: ``n_dead``
    genes are (almost) never expressed so the CPM filter drops them."""
    g = np.random.default_rng(seed)
    labels = ["Colon"] * n_a + ["Healthy"] * n_b
    base = g.gamma(0.8, 60, size=d) + 5
    signal = np.where(g.random(d) < 0.05, g.lognormal(0, 0.6, size=d), 1.0)
    counts = np.empty((n_a + n_b, d), dtype=np.int64)
    for i, lab in enumerate(labels):
        lam = base * (signal if lab == "Colon" else 1.0) * g.lognormal(0, 0.3)
        counts[i] = g.poisson(lam * g.gamma(5, 0.2, size=d))
    counts[:, :n_dead] = 0
    ids = [f"S{i:03d}" for i in range(len(labels))]
    genes = [f"G{j:05d}" for j in range(d)]
    mpath = write_table(tmp_path / "counts.csv", ["sample_id", *genes], [[s, *r] for s, r in zip(ids, counts.tolist())])
    lpath = write_table(tmp_path / "labels.csv", ["sample_id", "label"], list(zip(ids, labels)))
    return mpath, lpath


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def gate(request):
    """Print and record one PASS/FAIL line; returns ``ok`` for asserting."""
    lines = request.config.stash.setdefault(GATE_LINES, [])

    def record(name: str, ok: bool, detail: str = "") -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {name:<24} {detail}".rstrip()
        print(line)
        lines.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(GATE_LINES, [])
    if lines:
        terminalreporter.section("acceptance")
        for line in lines:
            terminalreporter.write_line(line)
