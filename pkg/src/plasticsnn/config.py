"""Flat ``key = value`` run configuration.

Every tunable has a dotted key (``episode.duration``, ``network.izh.a``,
``evolution.population_size``, ...) and a default, so an empty file is a
complete configuration. Unknown keys and unparsable values raise ConfigError.
The identified model and PID gains default to ``auto``: identify from the
truth plant and tune the PID on it, respectively.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigError
from .harness import EpisodeConfig, ExperimentConfig
from .neat import EvolutionConfig
from .network import NetworkConfig
from .plants import IdentifiedHeaveModel, PIDConfig, TruthHeaveConfig
from .plasticity import HebbianRule
from .snn import EncoderConfig, IzhikevichParams

AUTO = "auto"
# Per-connection coefficients and the stage selector are not run settings.
_SKIP = {"network.hebb.k_m", "network.hebb.k_c", "evolution.stage"}
_AUTO_GROUPS = {
    "identified": ("k_T", "k_v", "b_id"),
    "pid": ("kp", "ki", "kd"),
}
_RUN_DEFAULTS = {"run.seed": 0, "run.workers": 1, "run.runs": 10, "run.episodes": 4}


def _flatten(prefix: str, obj: Any, out: dict[str, Any]) -> None:
    for f in dataclasses.fields(obj):
        key = f"{prefix}.{f.name}"
        value = getattr(obj, f.name)
        if dataclasses.is_dataclass(value):
            _flatten(key, value, out)
        elif key not in _SKIP:
            out[key] = value


def default_values() -> dict[str, Any]:
    out: dict[str, Any] = {}
    for name, obj in (("episode", EpisodeConfig()), ("network", NetworkConfig()),
                      ("evolution", EvolutionConfig()), ("truth", TruthHeaveConfig())):
        _flatten(name, obj, out)
    pid = PIDConfig()
    for f in dataclasses.fields(pid):
        out[f"pid.{f.name}"] = AUTO if f.name in _AUTO_GROUPS["pid"] else getattr(pid, f.name)
    for name in _AUTO_GROUPS["identified"]:
        out[f"identified.{name}"] = AUTO
    out.update(_RUN_DEFAULTS)
    return out


_DEFAULTS = default_values()


def _parse_value(key: str, text: str) -> Any:
    default = _DEFAULTS[key]
    try:
        if default == AUTO:
            return AUTO if text == AUTO else float(text)
        if isinstance(default, bool):
            if text.lower() not in ("true", "false", "1", "0"):
                raise ValueError(text)
            return text.lower() in ("true", "1")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(float(x) for x in text.split(",") if x.strip())
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r}") from None


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(x)) for x in value)
    return str(value)


@dataclass
class RunConfig:
    values: dict[str, Any] = field(default_factory=lambda: dict(_DEFAULTS))

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        cfg = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (part.strip() for part in line.partition("="))
            if not sep:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            if key not in _DEFAULTS:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            cfg.values[key] = _parse_value(key, value)
        return cfg

    @classmethod
    def load(cls, path: str | os.PathLike | None) -> "RunConfig":
        if path is None or (str(path) == "default" and not os.path.exists(path)):
            return cls()
        try:
            with open(path) as fh:
                return cls.from_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def to_text(self) -> str:
        return "".join(f"{k} = {_format_value(v)}\n" for k, v in self.values.items())

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def _section(self, prefix: str) -> dict[str, Any]:
        n = len(prefix) + 1
        return {k[n:]: v for k, v in self.values.items() if k.startswith(prefix + ".")}

    def _auto_group(self, name: str) -> dict[str, float] | None:
        vals = {k: self.values[f"{name}.{k}"] for k in _AUTO_GROUPS[name]}
        autos = [v == AUTO for v in vals.values()]
        if all(autos):
            return None
        if any(autos):
            raise ConfigError(f"{name}: set all of {', '.join(vals)} or leave all on auto")
        return vals

    def experiment(self) -> ExperimentConfig:
        """Build the typed configuration; dataclass validation errors surface as ConfigError."""
        try:
            net = self._section("network")
            network = NetworkConfig(
                izh=IzhikevichParams(**{k[4:]: v for k, v in net.items() if k.startswith("izh.")}),
                ez_encoder=EncoderConfig(**{k[11:]: v for k, v in net.items() if k.startswith("ez_encoder.")}),
                vz_encoder=EncoderConfig(**{k[11:]: v for k, v in net.items() if k.startswith("vz_encoder.")}),
                hebb=HebbianRule(**{k[5:]: v for k, v in net.items() if k.startswith("hebb.")}),
                **{k: v for k, v in net.items() if "." not in k},
            )
            pid_vals = self._auto_group("pid")
            pid = None
            if pid_vals is not None:
                pid = PIDConfig(**{**{k: v for k, v in self._section("pid").items()}, **pid_vals})
            ident = self._auto_group("identified")
            return ExperimentConfig(
                episode=EpisodeConfig(**self._section("episode")),
                network=network,
                evolution=EvolutionConfig(**self._section("evolution")),
                truth=TruthHeaveConfig(**self._section("truth")),
                pid=pid,
                identified=IdentifiedHeaveModel(**ident) if ident else None,
                workers=int(self.values["run.workers"]),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
