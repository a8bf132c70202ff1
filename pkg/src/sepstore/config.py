"""Config files for the semantic tester.

Plain key=value lines, `#` comments.  Integer lists use commas; command and
assertion lists use `;;` as the separator because commands themselves
contain `;` and `,`.

    addrs = 1, 2, 3
    ints = -1, 0, 1, 2
    code = skip ;; free(-1)
    tag_max = 3
    k = 3
    worlds = emp
    frames = emp ;; true ;; 3 |-> 0
    fuel = 10000
    env_cap = 256
"""

from .grammar import ParseError, parse
from .semantics import TestConfig, World


class ConfigError(Exception):
    pass


DEFAULT_CODE = ("skip", "free(-1)")
DEFAULT_FRAMES = ("emp", "true", "3 |-> 0")


def default_config() -> TestConfig:
    """The default CLI universe: smallest one that exercises every entry
    of the counterexample registry."""
    return TestConfig(
        addr_pool=(1, 2, 3),
        int_pool=(-1, 0, 1, 2),
        code_pool=tuple(parse(c, "program") for c in DEFAULT_CODE),
        tag_max=3,
        level_k=3,
        world_pool=(World(parse("emp", "assertion")),),
        frame_pool=tuple(parse(f, "assertion") for f in DEFAULT_FRAMES),
    )


def _ints(text, key):
    try:
        return tuple(int(p.strip()) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a comma-separated integer "
                          f"list, got {text!r}") from exc


def _parsed_list(text, kind, key):
    out = []
    for chunk in text.split(";;"):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            out.append(parse(chunk, kind))
        except ParseError as exc:
            raise ConfigError(f"{key}: {exc}") from exc
    return tuple(out)


def load_config(text: str) -> TestConfig:
    fields = {}
    handlers = {
        "addrs": lambda v: ("addr_pool", _ints(v, "addrs")),
        "ints": lambda v: ("int_pool", _ints(v, "ints")),
        "code": lambda v: ("code_pool", _parsed_list(v, "program", "code")),
        "tag_max": lambda v: ("tag_max", int(v)),
        "k": lambda v: ("level_k", int(v)),
        "worlds": lambda v: ("world_pool", tuple(
            World(a) for a in _parsed_list(v, "assertion", "worlds"))),
        "frames": lambda v: ("frame_pool",
                             _parsed_list(v, "assertion", "frames")),
        "fuel": lambda v: ("fuel", int(v)),
        "env_cap": lambda v: ("env_cap", int(v)),
    }
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        # `=` may also occur inside assertion values such as `x = 1`;
        # only split on the first one after a known key
        if key not in handlers:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            field, parsed = handlers[key](value.strip())
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from exc
        fields[field] = parsed
    base = default_config()
    merged = {f: fields.get(f, getattr(base, f)) for f in
              ("addr_pool", "int_pool", "code_pool", "tag_max", "level_k",
               "world_pool", "frame_pool", "fuel", "env_cap")}
    return TestConfig(**merged)


def load_config_file(path) -> TestConfig:
    with open(path) as fh:
        return load_config(fh.read())
