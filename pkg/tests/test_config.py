import pytest

from gnnmoe.config import build_configs, format_config, parse_overrides, parse_pairs, read_config
from gnnmoe.exceptions import ParseError
from gnnmoe.model import GnnMoeConfig
from gnnmoe.training import TrainConfig


class TestParse:
    def test_types(self):
        values = parse_overrides(["num_blocks=4", "lr=0.05", "ablate_ffn=true", "force_expert=PT",
                                  "seeds=range:3", "fractions=0.6,0.2,0.2", "prop=sage"])
        assert values == {"num_blocks": 4, "lr": 0.05, "ablate_ffn": True, "force_expert": "PT",
                          "seeds": (0, 1, 2), "fractions": (0.6, 0.2, 0.2), "prop": "sage"}

    def test_none_expert(self):
        assert parse_overrides(["force_expert=none"])["force_expert"] is None

    def test_unknown_key_line(self):
        with pytest.raises(ParseError) as err:
            parse_pairs([(1, "# c"), (2, "wat=1")], "x.cfg")
        assert err.value.line == 2 and "wat" in str(err.value)

    def test_bad_bool(self):
        with pytest.raises(ParseError, match="ablate_ffn"):
            parse_overrides(["ablate_ffn=maybe"])

    def test_missing_equals(self):
        with pytest.raises(ParseError):
            parse_overrides(["lr"])

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nope.cfg"):
            read_config(tmp_path / "nope.cfg")

    def test_contract_violation_names_source(self):
        with pytest.raises(ParseError, match="a.cfg"):
            build_configs({"num_blocks": 0}, "a.cfg")


class TestFormat:
    def test_roundtrip(self, tmp_path):
        model_cfg = GnnMoeConfig(num_blocks=5, force_expert="TP", dropout=0.3)
        train_cfg = TrainConfig(lr=0.005, seeds=(2, 7), fractions=(0.6, 0.2, 0.2))
        path = tmp_path / "c.cfg"
        path.write_text("\n".join(format_config(model_cfg, train_cfg)))
        back = build_configs(read_config(path))
        assert back == (model_cfg, train_cfg)
