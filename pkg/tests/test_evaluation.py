import numpy as np
import pytest

from helpers.errors import ConfigError
from helpers.evaluation import (
    ABLATION_COLUMNS,
    aggregate,
    ablate,
    evaluate,
    held_out_seeds,
    run_episodes,
    variant,
)
from helpers.policy import Policy
from models.enums import AblationAxis
from models.reports import EpisodeResult


def episode(seed, success, predicted=4, feasible=4, collisions=0):
    return EpisodeResult(
        seed=seed,
        success=success,
        steps=10,
        collisions=collisions,
        ik_failures=predicted - feasible,
        predicted_poses=predicted,
        feasible_poses=feasible,
    )


def test_held_out_seeds_are_disjoint_from_demo_seeds():
    seeds = held_out_seeds(2, 3)
    assert seeds == [1_002_000, 1_002_001, 1_002_002]
    assert not set(seeds) & set(range(10_000))


def test_aggregate_empty():
    agg = aggregate([])
    assert agg.episodes == 0
    assert agg.success_rate == 0.0
    assert agg.feasibility_rate == 0.0


def test_aggregate():
    agg = aggregate([episode(0, True), episode(1, False, predicted=6, feasible=3, collisions=2)])
    assert agg.episodes == 2
    assert agg.success_rate == pytest.approx(0.5)
    assert agg.mean_collisions == pytest.approx(1.0)
    assert agg.mean_ik_failures == pytest.approx(1.5)
    assert agg.feasibility_rate == pytest.approx(7 / 10)


def test_component_variants(smoke_config):
    full = variant(smoke_config, AblationAxis.COMPONENTS, "full", seed=4)
    assert full.seed == 4 and full.use_graph and full.use_reference

    no_kr = variant(smoke_config, AblationAxis.COMPONENTS, "no_kr", seed=0)
    assert no_kr.lam == 1.0
    assert no_kr.use_graph and not no_kr.use_reference

    bare = variant(smoke_config, AblationAxis.COMPONENTS, "no_kr_no_graph", seed=0)
    assert not bare.use_graph and not bare.use_reference


def test_axis_variants(smoke_config):
    assert variant(smoke_config, AblationAxis.LAM, "0.5", 0).lam == 0.5
    assert variant(smoke_config, AblationAxis.CHUNK, 3, 0).chunk == 3
    history = variant(smoke_config, AblationAxis.HISTORY, 0, 0)
    assert history.graph.history == 0
    assert history.graph.hidden == smoke_config.graph.hidden
    assert variant(smoke_config, AblationAxis.DEMOS, 7, 0).num_demos == 7


@pytest.mark.parametrize(
    "axis, value",
    [
        (AblationAxis.COMPONENTS, "no_graph"),
        (AblationAxis.LAM, "heavy"),
        (AblationAxis.LAM, 2.0),
        (AblationAxis.CHUNK, 0),
    ],
)
def test_invalid_variants(smoke_config, axis, value):
    with pytest.raises(ConfigError):
        variant(smoke_config, axis, value, 0)


def test_run_episodes_keeps_seed_order(smoke_config):
    policy = Policy.init(smoke_config, 26)
    seeds = [5, 3, 9]
    serial = run_episodes(policy, seeds)
    parallel = run_episodes(policy, seeds, workers=2)
    assert [result.seed for result in serial] == seeds
    assert parallel == serial


def test_evaluate_report(smoke_config):
    policy = Policy.init(smoke_config, 26)
    report = evaluate(policy, episodes=2, seed=1, timings=True)
    assert [result.seed for result in report.episodes] == held_out_seeds(1, 2)
    assert report.aggregates.episodes == 2
    assert report.config["task"] == "push_box_2d"
    assert report.timings["total_s"] >= 0.0
    assert evaluate(policy, episodes=1).timings is None


def test_ablate_writes_tables(tmp_path, smoke_config):
    df, summary = ablate(smoke_config, AblationAxis.COMPONENTS, ["full"], [0], tmp_path)
    assert list(df.columns) == ABLATION_COLUMNS
    assert len(df) == 1
    assert summary.loc[0, "seeds"] == 1
    assert np.isfinite(df.loc[0, "feasibility_rate"])
    assert (tmp_path / "ablation.csv").exists()
    assert (tmp_path / "ablation_summary.csv").exists()
