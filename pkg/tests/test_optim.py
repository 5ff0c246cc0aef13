import numpy as np
import pytest

from helpers.optim import AdamW, learning_rate
from models.config import OptimSection


def test_warmup_then_cosine():
    assert learning_rate(1, 1.0, 10, 110) == pytest.approx(0.1)
    assert learning_rate(10, 1.0, 10, 110) == pytest.approx(1.0)
    assert learning_rate(60, 1.0, 10, 110) == pytest.approx(0.5)
    assert learning_rate(110, 1.0, 10, 110) == pytest.approx(0.0, abs=1e-12)
    assert learning_rate(500, 1.0, 10, 110) == pytest.approx(0.0, abs=1e-12)


def test_no_warmup_starts_at_base_rate():
    assert learning_rate(1, 2e-4, 0, 1000) == pytest.approx(2e-4, rel=1e-5)


def test_warmup_longer_than_run():
    rates = [learning_rate(step, 1.0, 5000, 2000) for step in range(1, 2001)]
    assert rates == sorted(rates)
    assert rates[-1] == pytest.approx(0.4)


def test_adamw_minimizes_a_quadratic():
    optimizer = AdamW(lr=0.1, weight_decay=0.0, warmup_steps=0, total_steps=10_000)
    params = {"x": np.array([3.0, -2.0])}
    for _ in range(500):
        params = optimizer.step(params, {"x": 2.0 * params["x"]})
    np.testing.assert_allclose(params["x"], 0.0, atol=5e-2)
    assert optimizer.state_dict() == {"step_count": 500}


def test_first_step_moves_by_the_learning_rate():
    optimizer = AdamW(lr=0.01, weight_decay=0.0, warmup_steps=0, total_steps=1000)
    params = optimizer.step({"w": np.array([1.0, 1.0])}, {"w": np.array([5.0, -0.1])})
    np.testing.assert_allclose(params["w"], [0.99, 1.01], atol=1e-6)


def test_weight_decay_is_decoupled():
    optimizer = AdamW(lr=0.1, weight_decay=0.5, warmup_steps=0, total_steps=1000)
    params = optimizer.step({"w": np.array([2.0])}, {})
    lr = optimizer.current_lr()
    np.testing.assert_allclose(params["w"], [2.0 * (1.0 - lr * 0.5)])


def test_from_config():
    optimizer = AdamW.from_config(OptimSection(lr=1e-3, warmup_steps=10, steps=100))
    assert optimizer.lr == 1e-3
    assert optimizer.total_steps == 100
    assert optimizer.betas == (0.9, 0.999)
