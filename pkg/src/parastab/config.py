"""Experiment configuration files.

INI-style sections ``[mesh] [time] [physics] [coefficients] [actuators]
[ic] [schedule] [solver] [sweep] [output]`` with ``key = value`` lines.
Expressions may be quoted.  ``[time]`` is always required.
"""

import configparser
import hashlib
from pathlib import Path

from .errors import ConfigError, ExprSyntaxError
from .expr import differentiate, parse_expr

__all__ = ["Config", "parse_config", "load_config", "family_coefficients", "PARAMETER_SET",
           "parse_expr", "differentiate", "float_list"]

SECTIONS = ("mesh", "time", "physics", "coefficients", "actuators", "ic", "schedule",
            "solver", "sweep", "output")

PARAMETER_SET = (
    (1, 1, 1, 1, 1, 1),
    (1, 2, 2, 1, 1, 1),
    (2, -1, 1, -3, 5, 1),
    (-1, 5, 3, 1, 1, 5),
    (1, 2, 3, 4, 5, 6),
    (6, -2, 5, 3, 4, 1),
)


def family_coefficients(i, j, k, l, m, n):
    """Time-varying reaction and convection from six integer parameters."""
    for v in (i, j, k, l, m, n):
        if int(v) != v:
            raise ValueError("family parameters must be integers")
    a = parse_expr(f"-sin(t)*cos({i}*x1) + sin(5*t)*sin({j}*x2) - 3")
    b1 = parse_expr(f"cos(t)*sin(-({k})*x1) - cos(3*t)*cos({l}*x2)")
    b2 = parse_expr(f"sin(-t)*sin({m}*x1) - cos(2*t)*sin({n}*x2)")
    return a, b1, b2


def _unquote(value):
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    return value


class Config:
    """Parsed configuration with typed, diagnosable lookups."""

    def __init__(self, parser, text=""):
        self._p = parser
        self.text = text

    def has(self, section, key=None):
        if not self._p.has_section(section):
            return False
        return key is None or self._p.has_option(section, key)

    def raw(self, section, key, default=None):
        if not self.has(section, key):
            if default is None:
                if not self._p.has_section(section):
                    raise ConfigError(f"missing section [{section}]")
                raise ConfigError(f"[{section}] missing key '{key}'")
            return default
        return _unquote(self._p.get(section, key))

    def _convert(self, section, key, default, fn, what):
        value = self.raw(section, key, None if default is None else _Default)
        if value is _Default:
            return default
        try:
            return fn(value)
        except (ValueError, TypeError, ExprSyntaxError) as exc:
            raise ConfigError(f"[{section}] {key}: expected {what}, got {value!r} ({exc})") from None

    def str(self, section, key, default=None):
        return self._convert(section, key, default, str, "a string")

    def choice(self, section, key, options, default=None):
        value = self.str(section, key, default)
        if value not in options:
            raise ConfigError(f"[{section}] {key}: expected one of {', '.join(options)}, "
                              f"got {value!r}")
        return value

    def float(self, section, key, default=None):
        return self._convert(section, key, default, _float, "a number")

    def int(self, section, key, default=None):
        return self._convert(section, key, default, int, "an integer")

    def bool(self, section, key, default=None):
        return self._convert(section, key, default, _bool, "true or false")

    def floats(self, section, key, default=None):
        return self._convert(section, key, default, float_list, "a comma-separated number list")

    def ints(self, section, key, default=None):
        return self._convert(section, key, default, lambda v: [int(x) for x in _split(v)],
                             "a comma-separated integer list")

    def expr(self, section, key, default=None):
        """Parsed expression; string or numeric defaults are parsed too."""
        if default is not None and not self.has(section, key):
            return parse_expr(default)
        return self._convert(section, key, default, parse_expr, "an expression")

    def require_section(self, section):
        if not self._p.has_section(section):
            raise ConfigError(f"missing section [{section}]")

    def items(self):
        for s in self._p.sections():
            for k, v in self._p.items(s):
                yield s, k, _unquote(v)

    def sha256(self):
        """Hash of the effective configuration (after overrides)."""
        lines = [f"[{s}] {k} = {v}" for s, k, v in sorted(self.items())]
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()


class _DefaultType:
    pass


_Default = _DefaultType()


def _split(v):
    return [x for x in (p.strip() for p in v.replace(";", ",").split(",")) if x]


def _float(v):
    """Numbers, optionally written as constant expressions such as ``5*pi/4``."""
    try:
        return float(v)
    except ValueError:
        e = parse_expr(v)
        if e.variables():
            raise ValueError("expression must be constant")
        return float(e.evaluate())


def float_list(v):
    return [_float(x) for x in _split(v)]


def _bool(v):
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("not a boolean")


def parse_config(text, overrides=(), require_time=True):
    """Parse config ``text`` and apply ``section.key=value`` overrides."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                       comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        lhs, value = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key.strip(), value.strip())
    unknown = [s for s in parser.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"unknown section [{unknown[0]}]")
    cfg = Config(parser, text)
    if require_time:
        cfg.require_section("time")
    return cfg


def load_config(path, overrides=(), require_time=True):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, overrides, require_time)
