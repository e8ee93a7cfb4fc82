import os

import numpy as np
import pytest

from gridtangent import GaussianRBF, GridGeometry, GridModel, MulFA, MulFAParams, Multilinear

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


def data_path(name):
    return os.path.join(DATA_DIR, name)


def make_model(variant, resolution=(8,), seed=0, out_dim=1, features="zeros", **kw):
    geom = GridGeometry.regular(list(resolution))
    if variant == "multilinear":
        kernel = Multilinear()
    elif variant == "gaussian":
        kernel = GaussianRBF(kw.get("sigma"))
    else:
        kernel = MulFA(MulFAParams.init(geom.dim, rng=seed, **kw))
    model = GridModel.create(geom, kernel, out_dim=out_dim)
    if features == "random":
        model.features[:] = np.random.default_rng(seed + 100).normal(size=model.features.shape)
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# One line per acceptance criterion, printed after the run.
ACCEPTANCE_LINES = {}


def record_acceptance(number, name, passed, detail, elapsed, budget):
    ok = passed and elapsed < budget
    status = "PASS" if ok else "FAIL"
    ACCEPTANCE_LINES[number] = (f"[{status}] {number:2d} {name}: {detail} "
                                f"({elapsed:.1f} s, budget {budget:g} s)")
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
