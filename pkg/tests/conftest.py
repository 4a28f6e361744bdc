import logging

import pytest

from helpers import MUTEX_SKELETON, MUTEX_SPEC, parse_with_spec


@pytest.fixture
def mutex():
    return parse_with_spec(MUTEX_SKELETON, MUTEX_SPEC)


@pytest.fixture(autouse=True)
def quiet_logs(caplog):
    caplog.set_level(logging.WARNING)
