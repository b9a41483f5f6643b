import math
import textwrap

import pytest

from fractalbv.config import load_config, system_from_config
from fractalbv.errors import AxiomViolation, ConfigError

SQ3 = math.sqrt(3.0)

SG_TOML = textwrap.dedent(
    f"""
    name = "gasket-copy"
    L = 2.0
    M = 3
    d_w = 2.321928094887362
    diam = 1.0
    essential_vertices = [[0.0, 0.0], [1.0, 0.0], [0.5, {SQ3 / 2}]]
    maps = [
        {{scale = 0.5, rotation_degrees = 0.0, translation = [0.0, 0.0]}},
        {{scale = 0.5, rotation_degrees = 0.0, translation = [0.5, 0.0]}},
        {{scale = 0.5, rotation_degrees = 0.0, translation = [0.25, {SQ3 / 4}]}},
    ]
    """
)


def _write(tmp_path, text, name="sys.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_valid_custom_system(tmp_path):
    sys = load_config(_write(tmp_path, SG_TOML), window_level=1)
    assert sys.M == 3
    assert abs(sys.d_h - math.log(3) / math.log(2)) < 1e-12
    assert sys.hull_tight


def test_missing_key_is_named(tmp_path):
    bad = SG_TOML.replace('diam = 1.0\n', "")
    with pytest.raises(ConfigError, match="diam"):
        load_config(_write(tmp_path, bad))


def test_map_count_must_match_M(tmp_path):
    bad = SG_TOML.replace("M = 3", "M = 4")
    with pytest.raises(ConfigError, match="maps"):
        load_config(_write(tmp_path, bad))


def test_scale_must_match_L(tmp_path):
    bad = SG_TOML.replace("{scale = 0.5, rotation_degrees = 0.0, translation = [0.0, 0.0]}",
                          "{scale = 0.4, rotation_degrees = 0.0, translation = [0.0, 0.0]}")
    with pytest.raises(ConfigError, match="scale"):
        load_config(_write(tmp_path, bad))


def test_toml_syntax_error_carries_location(tmp_path):
    with pytest.raises(ConfigError, match="line"):
        load_config(_write(tmp_path, "maps = [{scale = }\n"))


def test_unknown_key_rejected(tmp_path):
    bad = SG_TOML + "\nwalk_speed = 3\n"
    with pytest.raises(ConfigError, match="walk_speed"):
        load_config(_write(tmp_path, bad))


def test_overlapping_images_violate_nesting(tmp_path):
    # two maps with identical images: their cells share every vertex
    bad = SG_TOML.replace(
        "{scale = 0.5, rotation_degrees = 0.0, translation = [0.5, 0.0]}",
        "{scale = 0.5, rotation_degrees = 0.0, translation = [0.0, 0.0]}",
    )
    with pytest.raises(AxiomViolation, match="nesting|fixed point"):
        load_config(_write(tmp_path, bad))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="no such"):
        load_config(tmp_path / "absent.toml")


def test_vertex_schema(tmp_path):
    bad = SG_TOML.replace("[1.0, 0.0]", "[1.0]")
    with pytest.raises(ConfigError, match="essential_vertices"):
        load_config(_write(tmp_path, bad))
