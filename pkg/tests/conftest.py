"""
Shared pytest configuration for the ERKLAB test suite.
"""

import pytest


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run the long convergence-rate experiments")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running convergence-rate experiments")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def package_defaults():
    """Package defaults as shipped in config.yaml, without reading the file."""
    return {
        'defaults': {
            'problem': {
                'dims': 2, 'N': 64, 'epsilon': 0.1, 'nu': 0.05, 'a1': -1.0, 'a2': -1.0,
                'initial_data': {'kind': 'pyramid', 'gamma': 0.5, 'seed': 0},
            },
            'scheme': {'name': 'expeuler', 'c2': 0.5},
            'study': {
                'T': 0.1,
                'norms': ['max'],
                'reference': {'kind': 'fine_step', 'scheme': 'erk2', 'refinement': 32},
            },
            'defect': {'k': 1},
            'solve': {'snapshots': 0},
            'output': {'formats': ['csv']},
        },
        'norms': {'holder_samples': 2000, 'holder_seed': 0, 'noise_floor': 1.0e-13},
        'phi': {'quadrature_tol': 1.0e-13, 'max_subdivisions': 200},
        'runtime': {'threads': 1, 'log_level': 'INFO'},
    }
