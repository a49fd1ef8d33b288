"""Scenario configuration: the SoC testbed and run parameters.

JSON schema (all keys except ``ips`` optional)::

    {
      "name": "single-bus",
      "bus_topology": "SingleBus" | "MultiBus",
      "n_chip_id_ips": 3,            # IPs whose PUF responses form the ChipID
      "ber": 0.001,                  # PUF bit-error rate
      "puf_width": 256,              # multiple of 16
      "attempts": 10000,             # brute-force attempts in the reverse-engineering case
      "scm_order": ["puf", "unlock"],
      "ips": [
        {"id": "aes256", "input_width": 128, "has_puf": true, "is_locked": true,
         "key": "<hex unlock vector>", "segment": 0, "functional_model": "identity"}
      ]
    }
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from ..obfuscation import FUNCTIONAL_MODELS
from ..puf import DEFAULT_BER, DEFAULT_WIDTH, SEGMENT_BITS


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class IpConfig:
    id: str
    input_width: int
    has_puf: bool = False
    is_locked: bool = False
    key: str | None = None
    segment: int = 0
    functional_model: str = "identity"

    @property
    def key_bytes(self) -> bytes | None:
        return None if self.key is None else bytes.fromhex(self.key)


@dataclass(frozen=True)
class SocConfig:
    name: str
    ips: tuple[IpConfig, ...]
    bus_topology: str = "SingleBus"
    n_chip_id_ips: int | None = None
    ber: float = DEFAULT_BER
    puf_width: int = DEFAULT_WIDTH
    attempts: int = 10_000
    scm_order: tuple[str, ...] = ("puf", "unlock")

    def __post_init__(self):
        validate(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SocConfig":
        try:
            ips = tuple(IpConfig(**ip) for ip in d["ips"])
            rest = {k: v for k, v in d.items() if k != "ips"}
            if "scm_order" in rest:
                rest["scm_order"] = tuple(rest["scm_order"])
            return cls(ips=ips, **rest)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad scenario config: {exc}") from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ips"] = [asdict(ip) for ip in self.ips]
        d["scm_order"] = list(self.scm_order)
        return d

    @property
    def puf_ips(self) -> list[IpConfig]:
        return [ip for ip in self.ips if ip.has_puf]

    @property
    def locked_ips(self) -> list[IpConfig]:
        return [ip for ip in self.ips if ip.is_locked]


def validate(cfg: SocConfig) -> None:
    if cfg.bus_topology not in ("SingleBus", "MultiBus"):
        raise ConfigError(f"unknown bus topology {cfg.bus_topology!r}")
    if cfg.puf_width <= 0 or cfg.puf_width % SEGMENT_BITS:
        raise ConfigError("puf_width must be a positive multiple of 16")
    if not 0 <= cfg.ber < 0.5:
        raise ConfigError("ber must be in [0, 0.5)")
    if cfg.attempts < 1:
        raise ConfigError("attempts must be >= 1")
    ids = [ip.id for ip in cfg.ips]
    if len(set(ids)) != len(ids):
        raise ConfigError("IP ids must be unique")
    for ip in cfg.ips:
        if ip.input_width <= 0:
            raise ConfigError(f"{ip.id}: input_width must be positive")
        if ip.functional_model not in FUNCTIONAL_MODELS:
            raise ConfigError(f"{ip.id}: unknown functional model {ip.functional_model!r}")
        if ip.is_locked:
            if not ip.key:
                raise ConfigError(f"{ip.id}: locked IPs must carry a key")
            try:
                bytes.fromhex(ip.key)
            except ValueError:
                raise ConfigError(f"{ip.id}: key must be hex") from None
    if cfg.n_chip_id_ips is not None and cfg.n_chip_id_ips < 1:
        raise ConfigError("n_chip_id_ips must be >= 1")


def load_config(path: str | Path) -> SocConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return SocConfig.from_dict(data)


def builtin_config(name: str) -> SocConfig:
    fname = {"single-bus": "single_bus.json", "multi-bus": "multi_bus.json"}.get(name)
    if fname is None:
        raise ConfigError(f"unknown builtin config {name!r}")
    text = resources.files("citadel_sim").joinpath("data", fname).read_text(encoding="utf-8")
    return SocConfig.from_dict(json.loads(text))
