from pathlib import Path

import pytest

from itergraph.config import (ConfigError, RunConfig, ablation_mode, from_mapping, load_config,
                              parse_override, valid_keys)

BUNDLED = Path(__file__).resolve().parents[1] / "src" / "itergraph" / "configs"


def test_bundled_wine_matches_hyperparameter_table():
    cfg = load_config(BUNDLED / "wine.toml")
    got = (cfg.lam, cfg.eta, cfg.alpha, cfg.beta, cfg.gamma, cfg.knn_k, cfg.epsilon, cfg.heads,
           cfg.stop_delta, cfg.max_iters)
    assert got == (0.8, 0.7, 0.1, 0.1, 0.3, 20, 0.75, 1, 1e-3, 10)
    assert (cfg.hidden, cfg.lr, cfg.weight_decay) == (16, 0.01, 5e-4)
    assert cfg.seeds == (0, 1, 2, 3, 4)


def test_bundled_cancer_and_digits():
    c = load_config(BUNDLED / "cancer.toml")
    assert (c.lam, c.eta, c.alpha, c.beta, c.gamma, c.knn_k, c.epsilon, c.heads, c.stop_delta) == \
        (0.25, 0.1, 0.4, 0.2, 0.1, 40, 0.9, 1, 1e-3)
    assert c.split == (10, 20, 539)
    d = load_config(BUNDLED / "digits.toml")
    assert (d.lam, d.eta, d.alpha, d.beta, d.gamma, d.knn_k, d.epsilon, d.heads, d.stop_delta) == \
        (0.4, 0.1, 0.4, 0.1, 0.0, 24, 0.65, 8, 1e-4)
    assert d.iter_dropout == 0.3 and d.split == (50, 100, 1647)


def test_bundled_config_by_name():
    assert load_config(Path("cancer")).dataset == "cancer"


def test_overrides_apply_on_top():
    cfg = load_config(BUNDLED / "wine.toml", {"lambda": "1.0", "ablation": "no-iterative", "seeds": "3,4"})
    assert cfg.lam == 1.0 and cfg.ablation == "no-iterative" and cfg.seeds == (3, 4)


def test_unknown_key_lists_valid_keys():
    with pytest.raises(ConfigError) as info:
        from_mapping({"lamda": 0.5})
    assert "lambda" in str(info.value) and "stop_delta" in str(info.value)


def test_bad_values():
    with pytest.raises(ConfigError):
        from_mapping({"k": "3.5"})
    with pytest.raises(ConfigError):
        from_mapping({"alpha": "lots"})


@pytest.mark.parametrize("changes", [
    {"lam": 1.5}, {"eta": -0.1}, {"stop_delta": 0.0}, {"max_iters": 0}, {"beta": -1.0},
    {"ablation": "bogus"}, {"select_on": "f1"}, {"dropout": 1.0},
])
def test_invariants(changes):
    with pytest.raises(ConfigError):
        RunConfig(**changes)


def test_ablation_modes():
    cfg = RunConfig(alpha=0.1, beta=0.2, gamma=0.3)
    assert ablation_mode(cfg, "full") == cfg
    ng = ablation_mode(cfg, "no-graph-reg")
    assert (ng.alpha, ng.beta, ng.gamma) == (0.0, 0.0, 0.0)
    ni = ablation_mode(cfg, "no-iterative")
    assert not ni.iterations_enabled and ni.alpha == 0.1
    with pytest.raises(ConfigError):
        ablation_mode(cfg, "everything")


def test_round_trip_through_dict():
    cfg = RunConfig(lam=0.3, knn_k=7, seeds=(1, 2), split=(5, 6, 7))
    assert from_mapping(cfg.to_dict()) == cfg
    assert "lambda" in valid_keys() and "lam" not in valid_keys()


def test_relative_data_paths(tmp_path):
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "run.toml").write_text('features = "x.csv"\nlabels = "/abs/y.csv"\n')
    cfg = load_config(tmp_path / "sub" / "run.toml")
    assert cfg.features == str(tmp_path / "sub" / "x.csv")
    assert cfg.labels == "/abs/y.csv"


def test_missing_file_and_bad_override():
    with pytest.raises(ConfigError):
        load_config(Path("/nowhere/none.toml"))
    with pytest.raises(ConfigError):
        parse_override("no-equals-sign")
    assert parse_override(" k = 5 ") == ("k", "5")
