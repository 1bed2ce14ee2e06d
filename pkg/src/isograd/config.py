"""Flat key = value experiment configs with dotted section prefixes.

Example::

    # quadratic sweep
    instance.kind = quadratic
    instance.d = 5
    oracle.class = isotropic
    oracle.sigma = 1.0
    oracle.delta = 1e-5
    solver.eps = 0.05
    sweep.parameter = solver.eps
    sweep.values = 0.1, 0.05, 0.02, 0.01
    trials = 30
    seed = 1234

Values parse as int, float, comma-separated lists of those, or bare strings.
"""

from __future__ import annotations


class ConfigError(ValueError):
    """Unparseable or invalid configuration; carries line/field context."""


def _parse_scalar(text):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    lowered = text.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    return text


def parse_config_text(text, source="<config>"):
    """Parse config text into a flat {dotted.key: value} dict."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        value = value.strip()
        if "," in value:
            out[key] = [_parse_scalar(part) for part in value.split(",") if part.strip()]
        else:
            out[key] = _parse_scalar(value)
    return out


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config_text(fh.read(), source=str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def get(config, key, default=None, kind=None):
    value = config.get(key, default)
    if value is None:
        return None
    if kind is not None and not isinstance(value, bool):
        try:
            value = kind(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"field {key!r}: expected {kind.__name__}, "
                              f"got {value!r}") from exc
    return value


def require(config, key, kind=None):
    if key not in config:
        raise ConfigError(f"missing required field {key!r}")
    return get(config, key, kind=kind)


def as_list(value):
    if value is None:
        return []
    return list(value) if isinstance(value, list) else [value]
