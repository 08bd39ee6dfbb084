"""Pipeline configuration with file < environment < flag precedence.

Config files are flat ``key=value`` lines (``#`` comments allowed);
channel fields are namespaced as ``channel.<field>``. Environment
variables use the ``NSSFP_`` prefix with dots replaced by double
underscores, e.g. ``NSSFP_CHANNEL__CAPTURE_FRACTION=0.02``.
"""

import dataclasses
import os
from dataclasses import dataclass, field

from .errors import ConfigurationError
from .sidechannel import ChannelConfig

ENV_PREFIX = "NSSFP_"


@dataclass(frozen=True)
class PipelineConfig:
    q: float = 0.9
    variability_threshold: float = 1450.0
    similarity_window: int = 50
    epsilon: float = 1e-18
    sequence_length: int = 2700
    drop_fraction: float = 0.06
    word_cap: int = 3000
    order: int = 3
    weights: tuple[float, ...] = (0.1, 0.3, 0.6)
    seed: int = 0
    channel: ChannelConfig = field(default_factory=ChannelConfig)

    def resolved_lines(self) -> list[str]:
        """Deterministic key=value dump for run logs and output headers."""
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name == "channel":
                for cf in dataclasses.fields(ChannelConfig):
                    lines.append(f"channel.{cf.name}={getattr(value, cf.name)!r}")
            elif f.name == "weights":
                lines.append("weights=" + ",".join(repr(w) for w in value))
            else:
                lines.append(f"{f.name}={value!r}")
        return sorted(lines)


_PIPELINE_FIELDS = {f.name: f for f in dataclasses.fields(PipelineConfig)}
_CHANNEL_FIELDS = {f.name: f for f in dataclasses.fields(ChannelConfig)}


def _convert(base: str, raw: str):
    try:
        if base == "weights":
            return tuple(float(v) for v in raw.split(","))
        f = _PIPELINE_FIELDS.get(base) or _CHANNEL_FIELDS[base]
        if f.type is int:
            return int(raw)
        if f.type is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {base}: {raw!r}") from exc


def read_config_file(path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, eq, value = line.partition("=")
            if not eq:
                raise ConfigurationError(f"{path}:{lineno}: expected key=value, got {line!r}")
            values[key.strip()] = value.strip()
    return values


def env_overrides(environ=None) -> dict[str, str]:
    environ = os.environ if environ is None else environ
    out = {}
    for key, value in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        name = key[len(ENV_PREFIX):].lower().replace("__", ".")
        out[name] = value
    return out


def resolve_config(file_values: dict[str, str] | None = None,
                   env_values: dict[str, str] | None = None,
                   flag_values: dict[str, object] | None = None) -> PipelineConfig:
    """Merge the three sources, lowest precedence first, and validate."""
    merged: dict[str, object] = {}
    for source in (file_values or {}, env_values or {}):
        for key, raw in source.items():
            base = key.split(".", 1)[-1] if key.startswith("channel.") else key
            if key.startswith("channel."):
                if base not in _CHANNEL_FIELDS:
                    raise ConfigurationError(f"unknown channel option {base!r}")
            elif base not in _PIPELINE_FIELDS or base == "channel":
                raise ConfigurationError(f"unknown option {key!r}")
            merged[key] = _convert(base, str(raw))
    for key, value in (flag_values or {}).items():
        if value is not None:
            merged[key] = value

    channel_kwargs = {}
    pipeline_kwargs = {}
    for key, value in merged.items():
        if key.startswith("channel."):
            channel_kwargs[key.split(".", 1)[1]] = value
        else:
            pipeline_kwargs[key] = value
    try:
        channel = ChannelConfig(**channel_kwargs)
        return PipelineConfig(channel=channel, **pipeline_kwargs)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc
