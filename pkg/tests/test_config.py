import pytest

from liprpinn.config import RunConfig, config_from_dict, load_config, loads_config
from liprpinn.errors import ConfigError

FULL = """
seed = 3
out = "runs/x"

[problem]
kind = "heat"
exact = "heat_sin"

[network]
widths = [2, 50, 50, 1]

[train]
m_b1 = 5
adam_epochs = 10
batch_size = 100
grid = [40, 20]

[loss]
schedule = "heat_lipr"
lam_b = [1.0, 1.0, 1.0]

[sweep]
ladder = [5, 10]
repeats = 3
"""


def test_defaults():
    cfg = loads_config("")
    assert cfg == RunConfig()
    assert cfg.train.lr == 1e-3
    assert cfg.verify.networks == 20


def test_full_document():
    cfg = loads_config(FULL)
    assert cfg.seed == 3
    assert cfg.problem.kind == "heat"
    assert cfg.network.widths == (2, 50, 50, 1)
    assert cfg.train.grid == (40, 20)
    assert cfg.sweep.ladder == (5, 10)
    assert config_from_dict(cfg.to_dict()) == cfg


def test_integers_promote_to_floats():
    assert loads_config("[train]\nlr = 1").train.lr == 1.0


@pytest.mark.parametrize("text,field", [
    ("bogus = 1", "bogus"),
    ("[train]\nepochs = 5", "train.epochs"),
    ("[train]\nm_r = -5", "train.m_r"),
    ("[train]\nm_r = 2.5", "train.m_r"),
    ("[train]\nlr = 0", "train.lr"),
    ("[loss]\nschedule = \"magic\"", "loss.schedule"),
    ("[network]\nresidual = 1", "network.residual"),
    ("[sweep]\nladder = []", "sweep.ladder"),
    ("[sweep]\nladder = [0, 10]", "sweep.ladder"),
    ("seed = -1", "seed"),
    ("[train\n", "<file>"),
    ("train = 3", "train"),
])
def test_invalid_configs_name_the_field(text, field):
    with pytest.raises(ConfigError) as info:
        loads_config(text)
    assert info.value.field == field
    assert field in str(info.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.toml")


def test_file_roundtrip(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(FULL)
    assert load_config(p) == loads_config(FULL)


def test_overrides():
    cfg = loads_config(FULL).with_overrides(seed=9, out="o", workers=4)
    assert (cfg.seed, cfg.out, cfg.sweep.workers) == (9, "o", 4)
    assert loads_config(FULL).with_overrides() == loads_config(FULL)
