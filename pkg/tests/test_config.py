import pytest

from freqsplat.config import ConfigError, dumps, load_config, parse_lines, save_config, to_flat
from freqsplat.schedule import ScheduleFamily
from freqsplat.trainer import TrainConfig, TrainMode


def write(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return p


def test_round_trip_defaults(tmp_path):
    save_config(TrainConfig(), tmp_path / "c.cfg")
    cfg, run = load_config(tmp_path / "c.cfg")
    assert cfg == TrainConfig() and run == {}


def test_round_trip_non_defaults(tmp_path):
    cfg = TrainConfig.scaled(3000, seed=5, mode="pyramid").with_schedule(family="cosine_restart", restarts=3)
    cfg = cfg.with_adc(max_gaussians=400, reference_pixels=2.5e6)
    save_config(cfg, tmp_path / "c.cfg", {"target": "suite:coffee", "target_size": "48"})
    back, run = load_config(tmp_path / "c.cfg")
    assert back == cfg
    assert run == {"target": "suite:coffee", "target_size": "48"}
    assert dumps(back, run) == (tmp_path / "c.cfg").read_text()


def test_comments_and_blank_lines(tmp_path):
    p = write(tmp_path, "# header\n\nseed = 7  # trailing\nschedule.family=linear\nrender.cull_sigma=none\n")
    cfg, _ = load_config(p)
    assert cfg.seed == 7 and cfg.schedule.family is ScheduleFamily.LINEAR and cfg.render.cull_sigma is None


def test_overrides_win(tmp_path):
    p = write(tmp_path, "seed=1\nmode=baseline\n")
    cfg, run = load_config(p, ["seed=9", "target=suite:gradient"])
    assert cfg.seed == 9 and cfg.mode is TrainMode.BASELINE and run["target"] == "suite:gradient"


def test_preset(tmp_path):
    p = write(tmp_path, "preset.total_iterations=600\nseed=2\n")
    cfg, _ = load_config(p)
    assert cfg == TrainConfig.scaled(600, seed=2)
    cfg, _ = load_config(write(tmp_path, "seed=2\n"), ["preset.total_iterations=600"])
    assert cfg.total_iterations == 600 and cfg.schedule.cutoff_iteration == 240


def test_cutoff_override_rescales_levels(tmp_path):
    cfg, _ = load_config(write(tmp_path, "schedule.cutoff_iteration=8000\n"))
    assert cfg.schedule.level_boundaries == (2000, 4000, 6000, 8000)


def test_initial_kernel_rederives_steps(tmp_path):
    cfg, _ = load_config(write(tmp_path, "schedule.initial_kernel=7\n"))
    assert cfg.schedule.step_sizes[0] == 7
    assert to_flat(cfg)["schedule.step_sizes"] == ""


@pytest.mark.parametrize(
    "text",
    [
        "nonsense_key=1\n",
        "bogus.key=1\n",
        "schedule.bogus=1\n",
        "seed=abc\n",
        "schedule.initial_kernel=4\n",
        "mode=warp\n",
        "render.background=0,0\n",
        "config_version=2\n",
        "just a line\n",
    ],
)
def test_errors(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.cfg")


def test_parse_lines_keeps_last():
    assert parse_lines(["a=1", "a=2", "b = x=y"]) == {"a": "2", "b": "x=y"}
