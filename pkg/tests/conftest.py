from __future__ import annotations

import json

import pytest

from config_gen import SCENARIO_CONFIG, random_config
from minpair import engine
from minpair.cli import build_suites, parse_config


def make_suites(raw_config: dict):
    return build_suites(parse_config(json.dumps(raw_config)))


@pytest.fixture(scope="session")
def scenario_suite():
    fsuite, _ = make_suites(SCENARIO_CONFIG)
    return fsuite


@pytest.fixture(scope="session")
def scenario_trace(scenario_suite):
    return engine.run(scenario_suite, 5)


@pytest.fixture(scope="session")
def oracle_corpus():
    """Scenario config plus the 50 seeded random configs, with engine traces."""
    corpus = []
    for raw in [SCENARIO_CONFIG] + [random_config(seed) for seed in range(50)]:
        config = parse_config(json.dumps(raw))
        fsuite, _ = build_suites(config)
        trace = engine.run(fsuite, config.horizon, config.snapshot_every)
        corpus.append((config, fsuite, trace))
    return corpus
