import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

TOMLDecodeError = tomllib.TOMLDecodeError


def load_toml(text):
    return tomllib.loads(text)


def field_default(field):
    value = field.load_default
    return value() if callable(value) else value


__all__ = ("TOMLDecodeError", "load_toml", "field_default")
