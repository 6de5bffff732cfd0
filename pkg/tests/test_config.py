import math

import pytest

from parastab.config import PARAMETER_SET, family_coefficients, load_config, parse_config
from parastab.errors import ConfigError

TEXT = """
[time]
T = 8        # final time
steps = 400

[physics]
nu = 0.25
theta = 5*pi/4

[coefficients]
a = "-10 + 2*x1 + cos(x2)"
family = 2, -1, 1, -3, 5, 1

[sweep]
lambdas = 0; 1, 2
flag = yes
"""


def test_typed_lookups():
    cfg = parse_config(TEXT)
    assert cfg.float("time", "T") == 8.0
    assert cfg.int("time", "steps") == 400
    assert cfg.float("physics", "theta") == pytest.approx(3.9269908169872414)
    assert cfg.ints("coefficients", "family") == [2, -1, 1, -3, 5, 1]
    assert cfg.floats("sweep", "lambdas") == [0.0, 1.0, 2.0]
    assert cfg.bool("sweep", "flag") is True
    a = cfg.expr("coefficients", "a")
    assert a(x1=1.0, x2=0.0) == pytest.approx(-7.0)
    assert cfg.float("physics", "lambda", 2.0) == 2.0
    assert cfg.expr("ic", "expr", "sin(x1)")(x1=0.0) == 0.0


def test_missing_section_and_key():
    with pytest.raises(ConfigError, match=r"missing section \[time\]"):
        parse_config("")
    cfg = parse_config("[time]\nT = 1\n")
    with pytest.raises(ConfigError, match=r"\[time\] missing key 'steps'"):
        cfg.int("time", "steps")
    with pytest.raises(ConfigError, match=r"missing section \[physics\]"):
        cfg.float("physics", "nu")
    assert parse_config("", require_time=False).has("time") is False


@pytest.mark.parametrize("text, message", [
    ("[time]\nT = abc\n", r"\[time\] T: expected a number"),
    ("[time]\nT = x1\n", r"\[time\] T: expected a number"),
    ("[bogus]\nx = 1\n", r"unknown section \[bogus\]"),
    ("[time\nT = 1\n", "unreadable config"),
])
def test_diagnostics(text, message):
    with pytest.raises(ConfigError, match=message):
        cfg = parse_config(text)
        cfg.float("time", "T")


def test_bad_expression_is_config_error():
    cfg = parse_config('[time]\nT = 1\n[coefficients]\na = "sin(x1"\n')
    with pytest.raises(ConfigError, match=r"\[coefficients\] a: expected an expression"):
        cfg.expr("coefficients", "a")


def test_overrides():
    cfg = parse_config(TEXT, overrides=["time.steps=80", "mesh.rings=4"])
    assert cfg.int("time", "steps") == 80
    assert cfg.int("mesh", "rings") == 4
    with pytest.raises(ConfigError, match="section.key=value"):
        parse_config(TEXT, overrides=["steps=3"])


def test_hash_tracks_effective_config():
    a = parse_config(TEXT)
    b = parse_config(TEXT + "\n# a comment\n")
    c = parse_config(TEXT, overrides=["time.steps=80"])
    assert a.sha256() == b.sha256()
    assert a.sha256() != c.sha256()
    assert len(a.sha256()) == 64


def test_load_config(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text(TEXT)
    assert load_config(p).float("physics", "nu") == 0.25
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config(tmp_path / "missing.ini")


def test_parameter_set():
    assert PARAMETER_SET == ((1, 1, 1, 1, 1, 1), (1, 2, 2, 1, 1, 1), (2, -1, 1, -3, 5, 1),
                             (-1, 5, 3, 1, 1, 5), (1, 2, 3, 4, 5, 6), (6, -2, 5, 3, 4, 1))


@pytest.mark.parametrize("params", PARAMETER_SET)
def test_family_at_time_zero(params):
    i, j, k, l, m, n = params
    a, b1, b2 = family_coefficients(*params)
    for x1, x2 in [(0.3, -0.4), (-0.9, 0.1)]:
        assert a(t=0.0, x1=x1, x2=x2) == pytest.approx(-3.0)
        assert b1(t=0.0, x1=x1, x2=x2) == pytest.approx(-math.sin(k * x1) - math.cos(l * x2))
        assert b2(t=0.0, x1=x1, x2=x2) == pytest.approx(-math.sin(n * x2))


def test_family_general_time():
    a, b1, b2 = family_coefficients(2, -1, 1, -3, 5, 1)
    t, x1, x2 = 0.7, 0.2, -0.5
    assert a(t=t, x1=x1, x2=x2) == pytest.approx(
        -math.sin(t) * math.cos(2 * x1) + math.sin(5 * t) * math.sin(-x2) - 3)
    assert b1(t=t, x1=x1, x2=x2) == pytest.approx(
        math.cos(t) * math.sin(-x1) - math.cos(3 * t) * math.cos(-3 * x2))
    assert b2(t=t, x1=x1, x2=x2) == pytest.approx(
        math.sin(-t) * math.sin(5 * x1) - math.cos(2 * t) * math.sin(x2))


def test_family_rejects_non_integers():
    with pytest.raises(ValueError):
        family_coefficients(1.5, 1, 1, 1, 1, 1)


def test_choice():
    cfg = parse_config("[time]\nT = 1\nsteps = 2\n[solver]\nboundary_model = verbatim\n")
    assert cfg.choice("solver", "boundary_model", ("consistent", "verbatim")) == "verbatim"
    assert cfg.choice("solver", "observation", ("h1", "l2"), "h1") == "h1"
    with pytest.raises(ConfigError, match=r"\[solver\] boundary_model: expected one of a, b"):
        cfg.choice("solver", "boundary_model", ("a", "b"))
