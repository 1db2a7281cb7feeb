"""INI scenario files.

Example::

    [game]
    name = congestion2pop

    [pdm]
    kind = delayed
    d = 1

    [protocol]
    kind = kldrl
    eta = 4.5

    [algorithm1]
    enabled = true

    [sim]
    T = 100
    h = 0.01
    x0 = 0.2, 0.3, 0.5, 0.6, 0.2, 0.2

Every section and key is optional except ``game``; unknown ones are errors.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .game import AffineGame, builtin_game, load_game
from .pdm import Delayed, MultiDelay, Smoothing, Static
from .protocol import KLDRL, LOGIT, Protocol
from .sim import Scenario, default_horizon
from .simplex import random_state


class ConfigError(ValueError):
    pass


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _float(v):
    if isinstance(v, bool):
        raise ValueError("boolean given where a number is expected")
    return float(v)


def _int(v):
    if isinstance(v, float) and not v.is_integer():
        raise ValueError(f"not an integer: {v!r}")
    return int(v)


def _floats(v):
    if isinstance(v, str):
        v = [s for s in v.replace(";", ",").split(",") if s.strip()]
    return tuple(float(s) for s in v)


def _words(v):
    if isinstance(v, str):
        v = [s.strip() for s in v.split(",") if s.strip()]
    return tuple(str(s) for s in v)


def _state(v):
    """'uniform', 'random' or an explicit list of shares."""
    if isinstance(v, str) and v.strip().lower() in ("uniform", "random"):
        return v.strip().lower()
    return _floats(v)


def _choice(*options):
    def parse(v):
        s = str(v).strip().lower()
        if s not in options:
            raise ValueError(f"expected one of {options}, got {v!r}")
        return s

    return parse


SCHEMA = {
    "game": {"name": (str, None), "file": (str, None)},
    "pdm": {
        "kind": (_choice("static", "delayed", "multidelay", "smoothing"), "static"),
        "d": (_float, None),
        "lambda": (_float, None),
        "delays": (_floats, None),
        "weights": (_floats, None),
        "B_d": (_float, None),
        "gamma": (_float, None),
    },
    "protocol": {
        "kind": (_choice(LOGIT, KLDRL, "mixed"), KLDRL),
        "eta": (_float, 1.0),
        "theta0": (_state, "uniform"),
        "populations": (_words, None),
    },
    "algorithm1": {
        "enabled": (_bool, False),
        "distributed": (_bool, False),
        "gamma": (_float, None),
        "B_d": (_float, None),
    },
    "sim": {
        "T": (_float, None),
        "h": (_float, 0.01),
        "x0": (_state, "uniform"),
        "seed": (_int, 0),
        "record_stride": (_int, 1),
    },
    "output": {
        "trajectory": (str, "trajectory.csv"),
        "events": (str, "events.csv"),
        "summary": (str, "summary.json"),
        "threshold": (_float, 1e-3),
    },
}

SWEEPABLE = {"protocol.eta", "pdm.d", "pdm.lambda"}


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated, defaults-filled configuration; ``values`` maps section -> key -> value."""

    values: dict

    def __getitem__(self, dotted: str):
        section, key = dotted.split(".", 1)
        return self.values[section][key]

    def to_dict(self) -> dict:
        def plain(v):
            return list(v) if isinstance(v, tuple) else v

        return {s: {k: plain(v) for k, v in kv.items()} for s, kv in self.values.items()}

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> "ScenarioConfig":
        cfg = cls(_normalize(raw, base_dir))
        build_scenario(cfg)
        return cfg

    def with_value(self, dotted: str, value) -> "ScenarioConfig":
        raw = self.to_dict()
        section, key = dotted.split(".", 1)
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown parameter {dotted!r}")
        raw.setdefault(section, {})[key] = value
        return ScenarioConfig.from_dict(raw)


def _normalize(raw: dict, base_dir: Path | None) -> dict:
    out = {}
    for section in raw:
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
    for section, keys in SCHEMA.items():
        given = dict(raw.get(section, {}))
        for key in given:
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
        vals = {}
        for key, (parse, default) in keys.items():
            if key in given and given[key] is not None:
                try:
                    vals[key] = parse(given[key])
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"[{section}] {key}: {exc}") from None
            else:
                vals[key] = default
        out[section] = vals
    game = out["game"]
    if (game["name"] is None) == (game["file"] is None):
        raise ConfigError("[game] needs exactly one of 'name' or 'file'")
    if game["file"] is not None and base_dir is not None:
        game["file"] = str((base_dir / game["file"]).resolve())
    if out["sim"]["T"] is None:
        out["sim"]["T"] = default_horizon(Smoothing(1.0) if out["pdm"]["kind"] == "smoothing" else Static())
    return out


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    raw = {s: dict(parser.items(s)) for s in parser.sections()}
    return ScenarioConfig.from_dict(raw, base_dir=path.parent)


def _game(cfg: ScenarioConfig) -> AffineGame:
    if cfg["game.name"] is not None:
        return builtin_game(cfg["game.name"])
    return load_game(cfg["game.file"])


def _state_value(spec, layout, rng) -> np.ndarray:
    if spec == "uniform":
        return layout.uniform_state()
    if spec == "random":
        return random_state(layout, rng)
    return np.array(spec, dtype=float)


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    """Turn a configuration into a validated Scenario; raises ConfigError."""
    try:
        return _build(cfg)
    except ConfigError:
        raise
    except (ValueError, KeyError, OSError) as exc:
        raise ConfigError(str(exc)) from None


def _either(cfg: ScenarioConfig, key: str, default):
    """B_d and gamma may be given under [pdm] or [algorithm1], not both differently."""
    a, b = cfg[f"pdm.{key}"], cfg[f"algorithm1.{key}"]
    if a is not None and b is not None and a != b:
        raise ConfigError(f"pdm.{key}={a} conflicts with algorithm1.{key}={b}")
    if a is None and b is None:
        return default
    return a if a is not None else b


def _build(cfg: ScenarioConfig) -> Scenario:
    game = _game(cfg)
    layout = game.layout
    rng = np.random.default_rng(cfg["sim.seed"])

    kind = cfg["pdm.kind"]
    B_d = _either(cfg, "B_d", None)
    gamma = _either(cfg, "gamma", 0.1)
    if kind == "delayed":
        if cfg["pdm.d"] is None:
            raise ConfigError("[pdm] delayed needs 'd'")
        pdm = Delayed(cfg["pdm.d"], B_d)
    elif kind == "multidelay":
        if cfg["pdm.delays"] is None:
            raise ConfigError("[pdm] multidelay needs 'delays'")
        pdm = MultiDelay.split(game, cfg["pdm.delays"], cfg["pdm.weights"], B_d)
    elif kind == "smoothing":
        if cfg["pdm.lambda"] is None:
            raise ConfigError("[pdm] smoothing needs 'lambda'")
        pdm = Smoothing(cfg["pdm.lambda"], gamma)
    else:
        pdm = Static()

    eta = cfg["protocol.eta"]
    theta0 = _state_value(cfg["protocol.theta0"], layout, rng)
    pkind = cfg["protocol.kind"]
    if pkind == LOGIT:
        protocol = Protocol.logit(layout, eta)
    elif pkind == KLDRL:
        protocol = Protocol.kldrl(layout, eta, theta0)
    else:
        pops = cfg["protocol.populations"]
        if pops is None:
            raise ConfigError("[protocol] mixed needs 'populations', e.g. kldrl, logit")
        protocol = Protocol.mixed(layout, eta, [p.lower() for p in pops], theta0)

    if cfg["algorithm1.enabled"] and not protocol.kldrl_populations:
        raise ConfigError("[algorithm1] enabled but no population uses kldrl")
    x0 = _state_value(cfg["sim.x0"], layout, rng)
    return Scenario(
        game=game,
        pdm=pdm,
        protocol=protocol,
        x0=x0,
        T=cfg["sim.T"],
        h=cfg["sim.h"],
        algorithm1=cfg["algorithm1.enabled"],
        distributed=cfg["algorithm1.distributed"],
        record_stride=cfg["sim.record_stride"],
        seed=cfg["sim.seed"],
    )


def bundled_config(name: str) -> Path:
    """Path of a configuration shipped with the package."""
    path = Path(__file__).parent / "configs" / name
    if not path.suffix:
        path = path.with_suffix(".cfg")
    if not path.exists():
        raise FileNotFoundError(path)
    return path
