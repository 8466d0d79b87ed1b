import pytest

from kucbrl.config import ConfigError, auto_window, dump_config, load_config, load_config_file
from kucbrl.kernels import EigenProfile


def test_defaults_parse():
    cfg = load_config("")
    assert cfg.run.T == 2000 and cfg.agent.w == "auto"
    assert cfg.window() == 7  # ceil(2000 ** 0.25)


def test_unknown_key_reports_line():
    text = "mdp:\n  S: 10\nagent:\n  rho: 1.0\n  rhoo: 2.0\n"
    with pytest.raises(ConfigError) as exc:
        load_config(text)
    assert exc.value.line == 5 and "agent.rhoo" in str(exc.value)


def test_bad_type_reports_line():
    with pytest.raises(ConfigError) as exc:
        load_config("run:\n  T: lots\n")
    assert exc.value.line == 2


def test_bad_enum_and_malformed_yaml():
    with pytest.raises(ConfigError):
        load_config("agent:\n  kernel: {family: rbf}\n")
    with pytest.raises(ConfigError):
        load_config("run:\n  baselines: [random, nope]\n")
    with pytest.raises(ConfigError) as exc:
        load_config("run: [\n")
    assert exc.value.line is not None
    with pytest.raises(ConfigError):
        load_config("run:\n  n_seeds: 0\n")


def test_overrides_dotted_paths():
    cfg = load_config("agent:\n  rho: 1.0\n", ["agent.rho=0.1", "agent.kernel.lengthscale=0.2", "agent.w=5"])
    assert cfg.agent.rho == 0.1 and cfg.agent.kernel.lengthscale == 0.2 and cfg.agent.w == 5
    with pytest.raises(ConfigError):
        load_config("", ["agent.nothing=1"])
    with pytest.raises(ConfigError):
        load_config("", ["agent.rho"])


def test_auto_window_polynomial():
    prof = EigenProfile.polynomial(p=3.0)
    assert auto_window(10**4, prof) == 4  # ceil(10000 ** (2 / 16)) = ceil(3.16)
    assert auto_window(10**4, None) == 10


def test_dump_roundtrip():
    cfg = load_config("", ["agent.rho=0.5"])
    again = load_config(dump_config(cfg))
    assert again.to_dict() == cfg.to_dict()


@pytest.mark.parametrize("name", ["default", "regret", "tiny"])
def test_shipped_configs_load(name):
    from pathlib import Path

    cfg = load_config_file(Path(__file__).parents[1] / "configs" / f"{name}.yaml")
    assert cfg.agent_config().w == cfg.window()
