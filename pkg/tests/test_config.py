from dataclasses import replace

import pytest

from mastersample.config import (
    ConfigError,
    ExperimentConfig,
    dump_config,
    load_config,
    split_identities,
    substream,
    with_overrides,
)


def test_defaults():
    cfg = load_config(text="")
    assert cfg.lam == 22
    assert cfg.filter.population == 22
    assert cfg.filter.oversample == 1000
    assert cfg.filter.percentile == 5.0
    assert cfg.predictor.capacity == 5000
    assert cfg.filter.accuracy_threshold == 0.6
    assert cfg.filter.patience == 20
    assert cfg.filter.warmup_fraction == 0.05
    assert cfg.budget == 26400
    assert cfg.seeds == (0, 1, 2, 3, 4)
    assert cfg.max_iter == 9 and cfg.clusters == 9
    assert cfg.world.n_identities == 500 and cfg.world.latent_dim == 512


@pytest.mark.parametrize("text", [
    "",
    "[world]\nmetric = cosine\nn_identities = 80\n[coverage]\nmode = clustered\nclusters = 4\n",
    "[optimizer]\npopulation_size = 12\nnames = random\n[experiment]\nbudget = 240\nseeds = 3 9\n",
    "[threshold]\npolicy = combined_grid\ngrid_resolution = 30\n[coverage]\nmode = combined\n",
    "[threshold]\npolicy = far_target\nfar_target = 0.01\n[predictor]\ntrain_batches = 8\nhidden = 32, 16\n",
])
def test_dump_round_trip(text):
    cfg = load_config(text=text, root_seed=7)
    assert load_config(text=dump_config(cfg)) == cfg


def test_world_seed_follows_root_seed_unless_given():
    a, b = load_config(text="", root_seed=1), load_config(text="", root_seed=2)
    assert a.world.seed == substream(1, "world") != b.world.seed
    assert load_config(text="[world]\nseed = 5\n", root_seed=1).world.seed == 5


def test_substreams_are_distinct():
    seeds = {substream(0, name, 1, 2) for name in ("world", "split", "optimizer", "predictor-init")}
    assert len(seeds) == 4
    assert substream(0, "optimizer", 1, 2) != substream(0, "optimizer", 2, 1)
    assert substream(0, "world") == substream(0, "world")


@pytest.mark.parametrize("text, match", [
    ("[experiment]\nbudget = 21\n", "one generation"),
    ("[optimizer]\nnames = lmmaes, simplex\n", "unknown optimizer"),
    ("[threshold]\npolicy = median\n", "threshold policy"),
    ("[coverage]\nmode = combined\n", "combined"),
    ("[threshold]\npolicy = combined_grid\n", "combined"),
    ("[colour]\nx = 1\n", "sections"),
    ("[world]\nwidth = 3\n", "unknown key"),
    ("[world]\nn_identities = many\n", "n_identities"),
    ("[predictor]\npercentile = 150\n", "percentile"),
    ("[experiment]\nspeed = 2\n", "unknown keys"),
    ("[threshold]\nfar_target = 0\npolicy = far_target\n", "far_target"),
    ("[coverage]\nmode = clustered\nclusters = 400\n", "clusters"),
    ("not an ini file", "cannot read"),
])
def test_invalid_configs(text, match):
    with pytest.raises(ConfigError, match=match):
        load_config(text=text)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/experiment.ini")


def test_split_500_identities():
    cfg = ExperimentConfig()
    assert cfg.n_train == 351
    train, test = split_identities(500, (4038, 1711), 3)
    assert len(train) == 351 and len(test) == 149
    assert set(train).isdisjoint(test) and len(set(train) | set(test)) == 500


def test_split_is_seeded():
    a = split_identities(100, (4038, 1711), 1)[0]
    assert (a == split_identities(100, (4038, 1711), 1)[0]).all()
    assert not (a == split_identities(100, (4038, 1711), 2)[0]).all()


def test_with_overrides_validates():
    cfg = ExperimentConfig()
    assert with_overrides(cfg, budget=44).budget == 44
    with pytest.raises(ConfigError):
        with_overrides(cfg, budget=10)
    with pytest.raises(ConfigError):
        replace(cfg, seeds=()).validate()
