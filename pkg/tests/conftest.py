import os

import pytest
import torch
from hypothesis import HealthCheck, settings

from vtm.config import TrainConfig
from vtm.corpus import PairedLine, Table, build_dataset, collate, tokenize
from vtm.model import VTM, ModelDims

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion number -> result line, filled in by test_acceptance
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])


TINY_PAIRS = [
    ({"name": "aromi", "food": "thai"}, "aromi serves thai food ."),
    ({"name": "zizzi", "food": "french", "area": "riverside"}, "in riverside , zizzi serves french ."),
    ({"name": "cotto", "area": "riverside"}, "cotto is in riverside ."),
]
TINY_RAW = ["zizzi is a pub .", "thai food in riverside .", "cotto serves food ."]


def tiny_data():
    lines = [PairedLine(Table.from_fields(t), tokenize(s), [tokenize(s)]) for t, s in TINY_PAIRS]
    return build_dataset(lines, [tokenize(s) for s in TINY_RAW], min_count=1)


def tiny_model(n_words, n_fields, dtype=torch.float64, seed=0, **kw) -> VTM:
    torch.manual_seed(seed)
    dims = dict(emb_dim=6, hidden=8, d_t=5, d_z=4, d_c=3)
    dims.update(kw)
    m = VTM(ModelDims(n_words=n_words, n_fields=n_fields, **dims))
    return m.to(dtype)


def tiny_config(**kw) -> TrainConfig:
    base = dict(emb_dim=6, hidden=8, d_t=5, d_z=4, d_c=3, batch_size=2, raw_batch_size=2, min_count=1)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture
def data():
    return tiny_data()


@pytest.fixture
def model(data):
    return tiny_model(len(data.vocab), len(data.field_vocab))


@pytest.fixture
def paired_batch(data):
    return collate(data.paired[:2])


@pytest.fixture
def raw_batch(data):
    return collate(data.raw[:2])
