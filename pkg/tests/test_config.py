import pytest

from twosided.config import load_config, parse_config, serialize_config
from twosided.errors import ConfigurationError
from twosided.optim import RegSpec

TEXT = """
[dataset]
source = csv
path = data.csv
delimiter = tab
factors = school, year
cardinalities = 139, 3
standardize = yes

[schema]
mode = distributed
shared_bias = true

[train]
learning_rate = 0.05
epochs = 10
K = 4
reg_q = l21
reg_q_strength = 0.001

[protocol]
baselines = LR, GOMTL

[synthetic]
world = additive_effects
cardinalities = 2, 4
"""


def test_parse_values():
    cfg = parse_config(TEXT)
    assert cfg.dataset.delimiter == "\t" and cfg.dataset.cardinalities == [139, 3]
    assert cfg.dataset.standardize is True and cfg.schema.shared_bias is True
    assert cfg.train.K == 4 and cfg.train.epochs == 10
    assert cfg.train.reg_q == RegSpec("l21", 0.001) and cfg.train.reg_p == RegSpec()
    assert cfg.protocol.baselines == ["LR", "GOMTL"]
    assert cfg.synthetic.cardinalities == (2, 4)


def test_defaults_without_sections():
    cfg = parse_config("")
    assert cfg.train.learning_rate == 0.01 and cfg.train.K == "auto"
    assert cfg.synthetic is None


def test_round_trip_idempotent():
    once = serialize_config(parse_config(TEXT))
    assert serialize_config(parse_config(once)) == once
    assert parse_config(once) == parse_config(TEXT)


@pytest.mark.parametrize(
    "text",
    ["[nope]\n", "[train]\nspeed = 3\n", "[train]\nepochs = many\n", "[schema]\nmode = odd\n",
     "[train]\nreg_p = l7\n", "[dataset\n", "[train]\nlearning_rate = -1\n"],
)
def test_config_errors(text):
    with pytest.raises(ConfigurationError):
        parse_config(text)


def test_load_missing(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "none.cfg")
