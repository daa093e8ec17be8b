from __future__ import annotations

import pytest

from solsched.instances import four_task_line, order_schedule


@pytest.fixture
def line_model():
    return four_task_line()


@pytest.fixture
def abcd(line_model):
    return order_schedule(line_model, ["A", "B", "C", "D"])


@pytest.fixture
def acbd(line_model):
    return order_schedule(line_model, ["A", "C", "B", "D"])
