"""Config parsing, validation diagnostics, and round-tripping."""

import pytest

from ferrosaddle.config import (ConfigError, RunConfig, default_config,
                                parse_config_file, parse_config_text)


def test_defaults_build():
    cfg = default_config()
    cfg.validate()
    spec = cfg.domain_spec()
    assert spec.dim == 2 and spec.cell_shape == (16, 32)
    law = cfg.law()
    assert law.kind == "linear" and law.mu_const == 2.0
    params = cfg.params()
    assert params.mu_drive == 2.0  # auto: mu(1) of the law
    assert params.p0 == pytest.approx(1.0)


def test_parse_with_comments_and_blanks():
    import math
    cfg = parse_config_text("""
# a comment
domain.n_horizontal = 8   # trailing comment
physics.b = 2.5

law.kind = langevin
law.Ms = 1.5
law.gamma = 0.5
""")
    assert cfg["domain.n_horizontal"] == [8]
    assert cfg["physics.b"] == 2.5
    assert cfg.law().kind == "langevin"
    # auto drive resolves to mu(1) of the law
    mu1 = 1.0 + 1.5 * (1.0 / math.tanh(0.5) - 2.0)
    assert cfg.params().mu_drive == pytest.approx(mu1, rel=1e-12)


def test_unknown_key_reports_location():
    with pytest.raises(ConfigError) as err:
        parse_config_text("domain.dim = 2\nphysics.gravity = 1.0\n")
    assert err.value.line == 2
    assert "physics.gravity" in str(err.value)


def test_bad_value_reports_location():
    with pytest.raises(ConfigError) as err:
        parse_config_text("physics.b = heavy\n")
    assert err.value.line == 1
    assert err.value.column is not None


def test_missing_equals_is_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config_text("just some words\n")
    assert err.value.line == 1


def test_validation_failures():
    with pytest.raises(ConfigError):
        parse_config_text("law.mu = 0.5\n")  # linear law needs mu > 1
    with pytest.raises(ConfigError):
        parse_config_text("physics.tau = -0.1\n")
    with pytest.raises(ConfigError):
        parse_config_text("output.formats = csv,xml\n")
    with pytest.raises(ConfigError):
        parse_config_text("saddle.theta = 0.0\n")
    with pytest.raises(ConfigError):
        parse_config_text("domain.L = 1.0,2.0\n")  # dim-1 mismatch


def test_round_trip_equality():
    cfg = parse_config_text("""
physics.mu_drive = 1.75
physics.p0_override = 0.8
run.deterministic = true
output.formats = csv,grid
domain.n_z = 48
""")
    again = parse_config_text(cfg.to_text())
    assert again.values == cfg.values
    assert parse_config_text(default_config().to_text()).values == default_config().values


def test_replace_validates_keys():
    cfg = default_config()
    cfg2 = cfg.replace(**{"physics.b": 3.0})
    assert cfg2["physics.b"] == 3.0 and cfg["physics.b"] == 1.0
    with pytest.raises(ConfigError):
        cfg.replace(nonsense=1)


def test_p0_override_and_auto():
    cfg = parse_config_text("physics.p0_override = 0.7\n")
    assert cfg.params().p0 == 0.7
    cfg2 = parse_config_text("physics.p0_override = auto\n")
    assert cfg2.params().p0 == pytest.approx(1.0)


def test_parse_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("domain.n_z = 12\n")
    assert parse_config_file(path)["domain.n_z"] == 12
    with pytest.raises(ConfigError):
        parse_config_file(tmp_path / "missing.cfg")


def test_shipped_configs_parse():
    import pathlib
    root = pathlib.Path(__file__).resolve().parent.parent / "configs"
    for cfg_file in sorted(root.glob("*.cfg")):
        parse_config_file(cfg_file).validate()
