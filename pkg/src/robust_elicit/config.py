"""Run configuration from flat ``key=value`` text or JSON."""
import json
from dataclasses import dataclass, field, fields

from . import datagen
from .datagen import CVScheme
from .experiments import RunOptions


class ConfigError(ValueError):
    pass


_SCENARIO_KEYS = {f.name for f in fields(datagen.ScenarioConfig)} - {"name"}
_OPTION_KEYS = {"r_grid", "r_val_grid", "cv_schemes", "lts_starts", "loo_starts", "lam", "identify_train", "n_grid"}
_TOP_KEYS = {"preset", "seed", "output", "V", "workers"}
KNOWN_KEYS = _SCENARIO_KEYS | _OPTION_KEYS | _TOP_KEYS


@dataclass
class RunConfig:
    preset: str | None = None
    overrides: dict = field(default_factory=dict)
    master_seed: int = 0
    output: str | None = None
    V: int | None = None
    workers: int = 1
    options: dict = field(default_factory=dict)

    def scenario(self):
        over = dict(self.overrides)
        if self.V is not None:
            over["V"] = self.V
        if "cv" in over and isinstance(over["cv"], str):
            over["cv"] = CVScheme.parse(over["cv"])
        if self.preset is None:
            missing = {"p", "n", "n_test", "n_sub", "s0", "mu"} - set(over)
            if missing:
                raise ConfigError(f"no preset given and scenario keys missing: {', '.join(sorted(missing))}")
            return datagen.ScenarioConfig(**over)
        return datagen.preset(self.preset, **over)

    def run_options(self):
        opts = dict(self.options)
        if "cv_schemes" in opts:
            opts["cv_schemes"] = tuple(cv if isinstance(cv, CVScheme) else CVScheme.parse(cv)
                                       for cv in opts["cv_schemes"])
        for key in ("r_grid", "r_val_grid", "n_grid"):
            if key in opts:
                opts[key] = tuple(opts[key])
        return RunOptions(V=self.V, workers=self.workers, **opts)


def _scalar(text):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


_LIST_KEYS = {"r_grid", "r_val_grid", "cv_schemes", "n_grid"}


def parse_text(text):
    """Mapping from ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _LIST_KEYS:
            out[key] = [_scalar(v.strip()) for v in value.split(",") if v.strip()]
        else:
            out[key] = _scalar(value)
    return out


def from_mapping(mapping):
    unknown = sorted(set(mapping) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    cfg = RunConfig()
    for key, value in mapping.items():
        if key == "preset":
            cfg.preset = value
        elif key == "seed":
            cfg.master_seed = int(value)
        elif key == "output":
            cfg.output = value
        elif key == "V":
            cfg.V = int(value)
        elif key == "workers":
            cfg.workers = int(value)
        elif key in _OPTION_KEYS:
            cfg.options[key] = value
        else:
            cfg.overrides[key] = value
    return cfg


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {path}") from None
    if path.endswith(".json") or text.lstrip().startswith("{"):
        try:
            mapping = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(mapping, dict):
            raise ConfigError(f"{path}: top level must be an object")
    else:
        mapping = parse_text(text)
    return from_mapping(mapping)
