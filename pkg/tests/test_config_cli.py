import pytest
import yaml

from tcdqn.cli import main
from tcdqn.config import ConfigError, RunConfig, full_scale, config_from_dict, load_config, parse_toggle


def test_defaults_and_full_scale():
    cfg = config_from_dict({})
    assert (cfg.timings.green_min, cfg.timings.yellow, cfg.timings.all_red) == (10, 3, 2)
    assert (cfg.reward.p1, cfg.reward.p2, cfg.reward.p3) == (0.002, 0.01, 0.1)
    assert cfg.agent.gamma == 0.99 and cfg.agent.batch_size == 32 and cfg.agent.lr == 2e-4
    assert cfg.replay.alpha == 0.6 and cfg.replay.beta0 == 0.4
    assert cfg.agent.n_fc == 512 and cfg.agent.n_nl == 64
    big = full_scale()
    assert big.replay.capacity == 2 ** 20 and big.agent.target_period == 10_000


@pytest.mark.parametrize("data,path", [
    ({"agent": {"gama": 0.9}}, "agent.gama"),
    ({"agent": {"batch_size": "big"}}, "agent.batch_size"),
    ({"replay": {"capacity": 1000}}, "replay.capacity"),
    ({"env": {"traffic": "rush"}}, "env.traffic"),
    ({"env": {"archetype": "case9"}}, "env"),
    ({"episodes": 0}, "episodes"),
    ({"agent": {"support": {"v_min": 4, "v_max": -4}}}, "agent.support"),
    ({"reward": {"eta": 0}}, "reward"),
    ({"baselines": {"ft_plan": [[0, 3], [1, 30]]}}, "baselines.ft_plan"),
])
def test_field_level_errors(data, path):
    with pytest.raises(ConfigError) as err:
        config_from_dict(data)
    assert err.value.path == path


def test_traffic_forms():
    assert len(config_from_dict({"env": {"archetype": "case1", "traffic": [0.0, 0.1]}}).flow().bounds) == 4
    per_lane = [[0.01, 0.02]] * 4
    assert config_from_dict({"env": {"archetype": "case1", "traffic": per_lane}}).flow().bounds[0] == (0.01, 0.02)
    with pytest.raises(ConfigError):
        config_from_dict({"env": {"archetype": "case1", "traffic": [[0.01, 0.02]] * 3}})


def test_parse_toggle():
    assert parse_toggle("per=off") == ("per", False)
    assert parse_toggle("noisy=on") == ("noisy", True)
    with pytest.raises(ConfigError):
        parse_toggle("per=maybe")


def test_bad_yaml(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("env: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def write_cfg(tmp_path, name="cfg.yaml", **over):
    data = {
        "episodes": 2, "checkpoint_every": 0,
        "env": {"archetype": "case1", "episode_length": 40},
        "agent": {"n_fc": 8, "n_nl": 4, "learn_start": 4, "batch_size": 2},
        "replay": {"capacity": 64},
        "eval": {"seeds": 1, "episodes": 1},
    }
    data.update(over)
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return str(p)


def test_cli_train_eval_plot(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "run"
    assert main(["train", "--config", cfg, "--out", str(out), "--seed", "3", "--toggle", "per=off"]) == 0
    assert (out / "metrics.csv").exists()
    assert "use_per: false" in (out / "config.yaml").read_text()
    assert main(["eval", str(out / "final.tcq"), "--config", cfg, "--out", str(out), "--scenario", "2"]) == 0
    assert (out / "eval_s2_summary.csv").exists()
    assert main(["baseline", "--kind", "ft", "--sweep", "--config", cfg, "--out", str(out)]) == 0
    assert main(["plot", str(out / "metrics.csv"), "--out", str(tmp_path / "plots")]) == 0
    assert "series.csv" in capsys.readouterr().out


def test_cli_ablate(tmp_path):
    cfg = write_cfg(tmp_path, episodes=1)
    out = tmp_path / "abl"
    assert main(["ablate", "--config", cfg, "--out", str(out), "--seeds", "1", "--only", "per"]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["full", "median_curves.csv", "no_per", "vanilla"]


def test_cli_exit_codes(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["train", "--config", write_cfg(tmp_path, "bad.yaml", agent={"bogus": 1})]) == 2
    assert main(["train", "--config", cfg, "--toggle", "warp=off"]) == 2
    assert main(["plot"]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["eval", str(tmp_path / "none.tcq"), "--config", cfg, "--out", str(tmp_path / "e")]) == 3
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["train", "--config", cfg, "--out", str(blocker / "x")]) == 3


def test_shipped_configs_load():
    import pathlib

    root = pathlib.Path(__file__).resolve().parents[1] / "configs"
    for path in root.glob("*.yaml"):
        assert isinstance(load_config(path), RunConfig)
