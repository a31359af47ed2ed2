import numpy as np
import pytest

from saliency_hash.data import SyntheticSpec, gen_synthetic, load_dataset, split_manifest
from saliency_hash.tensor import Tensor


def f64(values, grad=False) -> Tensor:
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=grad)


@pytest.fixture(scope="session")
def tiny_split(tmp_path_factory):
    """A 4-class 3x16x16 synthetic set, split into gallery and query manifests."""
    root = tmp_path_factory.mktemp("tiny")
    manifest = gen_synthetic(SyntheticSpec(classes=4, per_class=20, shape=(3, 16, 16), seed=3), root)
    gallery, query = split_manifest(manifest, seed=1)
    return manifest, gallery, query


@pytest.fixture(scope="session")
def tiny_datasets(tiny_split):
    _, gallery, query = tiny_split
    return load_dataset(gallery), load_dataset(query)


# One "PASS/FAIL criterion N: ..." line per acceptance criterion, echoed at the end of the run.
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
