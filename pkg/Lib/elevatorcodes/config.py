"""``key = value`` configuration files and the typed record of one CLI run."""
from __future__ import annotations

import dataclasses
import logging
from pathlib import Path
from typing import Any, Dict, Optional

from elevatorcodes.errors import CodeFormatError

logger = logging.getLogger(__name__)

# options that only change how a run is executed or logged, not what it outputs
RUNTIME_OPTIONS = frozenset({"verbose", "timing", "threads", "config", "command"})
_BOOLEANS = {
    "1": True,
    "true": True,
    "yes": True,
    "0": False,
    "false": False,
    "no": False,
}


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise CodeFormatError("Reading config file failed", path) from e
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise CodeFormatError(f"line {lineno}: expected 'key = value'", path)
        values[key] = value.strip()
    return values


def subparser_defaults(parser, values, source=None):
    """Restrict config ``values`` to the options ``parser`` knows about.

    Values stay strings so argparse applies each option's ``type``; flags
    without an argument take a boolean spelled ``true``/``false``.
    """
    actions = {action.dest: action for action in parser._actions}
    unknown = sorted(set(values) - set(actions))
    for key in unknown:
        logger.warning("Ignoring unknown config key %r from %s", key, source)
    defaults = {}
    for key, value in values.items():
        action = actions.get(key)
        if action is None:
            continue
        if action.nargs == 0:
            if value.lower() not in _BOOLEANS:
                raise CodeFormatError(f"{key}: expected true or false", source)
            value = _BOOLEANS[value.lower()]
        defaults[key] = value
    return defaults


def _jsonable(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


@dataclasses.dataclass(frozen=True)
class RunConfig:
    command: str
    options: Dict[str, Any]
    seed: Optional[int] = None
    output: Optional[str] = None
    output_format: str = "json"

    @classmethod
    def from_args(cls, args):
        options = {
            k: _jsonable(v)
            for k, v in sorted(args.items())
            if k not in RUNTIME_OPTIONS and k not in ("seed", "output", "format")
        }
        output = args.get("output")
        return cls(
            command=args["command"],
            options=options,
            seed=args.get("seed"),
            output=None if output is None else str(output),
            output_format=args.get("format") or "json",
        )

    def to_dict(self):
        return {
            "command": self.command,
            "options": self.options,
            "seed": self.seed,
            "output": self.output,
            "format": self.output_format,
        }
