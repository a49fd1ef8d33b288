"""Area and delay analytics, calibrated on reference synthesis and timing data."""
from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

NAND2_PER_PUF_BIT = 6


class OutOfRange(ValueError):
    pass


class UnknownIpClass(KeyError):
    pass


class UnknownSoc(KeyError):
    pass


@dataclass(frozen=True)
class TechnologyProfile:
    name: str
    citadel_area: float
    citadel_dyn_power: float
    citadel_leak_power: float
    gate_area: float | None = None

    def __post_init__(self):
        if min(self.citadel_area, self.citadel_dyn_power, self.citadel_leak_power) <= 0:
            raise ValueError("technology metrics must be positive")


@dataclass(frozen=True)
class DelayCalibration:
    auth: tuple[tuple[int, float], ...]
    unlock: dict[str, tuple[tuple[int, float], ...]]

    def __post_init__(self):
        for pts in (self.auth, *self.unlock.values()):
            xs = [b for b, _ in pts]
            if any(b >= a for a, b in zip(xs[1:], xs)) or not pts:
                raise ValueError("calibration bits must be strictly increasing")


@lru_cache(maxsize=1)
def calibration_data() -> dict:
    text = resources.files("citadel_sim").joinpath("data/calibration.json").read_text(encoding="utf-8")
    return json.loads(text)


def technology_profiles() -> dict[str, TechnologyProfile]:
    return {
        name: TechnologyProfile(
            name, t["citadel_area_um2"], t["citadel_dyn_power_mw"], t["citadel_leak_power_mw"], t["gate_area_um2"]
        )
        for name, t in calibration_data()["technologies"].items()
    }


def soc_baselines(soc: str) -> dict[str, float]:
    try:
        return dict(calibration_data()["soc_baselines"][soc]["area_um2"])
    except KeyError:
        raise UnknownSoc(soc) from None


def default_delays() -> DelayCalibration:
    d = calibration_data()
    return DelayCalibration(
        tuple(map(tuple, d["auth_delay_ps"])),
        {k: tuple(map(tuple, v)) for k, v in d["unlock_delay_ps"].items()},
    )


def puf_overhead(chip_id_bits_per_ip: list[int]) -> int:
    """NAND-2 equivalent gates for the PUF cells behind a ChipID."""
    if any(b < 0 for b in chip_id_bits_per_ip):
        raise ValueError("bit counts must be non-negative")
    return sum(b * NAND2_PER_PUF_BIT for b in chip_id_bits_per_ip)


def total_overhead(
    tech: TechnologyProfile, wrapper_areas: list[float], puf_gates: int, gate_area: float | None = None
) -> float:
    """Enclave area plus wrapper areas plus PUF gate area, in square microns."""
    if gate_area is None:
        gate_area = tech.gate_area
    if gate_area is None:
        if puf_gates:
            raise ValueError(f"no NAND-2 gate area configured for {tech.name}")
        gate_area = 0.0
    if any(a < 0 for a in wrapper_areas) or puf_gates < 0 or gate_area < 0:
        raise ValueError("overhead inputs must be non-negative")
    return tech.citadel_area + sum(wrapper_areas) + puf_gates * gate_area


def per_tech_percentages(baselines: dict[str, float], techs: dict[str, TechnologyProfile]) -> dict[str, float]:
    out = {}
    for name, base in baselines.items():
        if base <= 0:
            raise ValueError("baseline area must be positive")
        out[name] = techs[name].citadel_area / base * 100.0
    return out


def overhead_percentages(baselines: dict[str, float], techs: dict[str, TechnologyProfile] | None = None) -> float:
    """Mean area overhead, in percent, across the technologies in ``baselines``."""
    pct = per_tech_percentages(baselines, techs or technology_profiles())
    return sum(pct.values()) / len(pct)


def _interpolate(points: tuple[tuple[int, float], ...], bits: int) -> float:
    xs = [b for b, _ in points]
    if not xs[0] <= bits <= xs[-1]:
        raise OutOfRange(f"{bits} bits outside calibrated range [{xs[0]}, {xs[-1]}]")
    i = bisect.bisect_left(xs, bits)
    if xs[i] == bits:
        return float(points[i][1])
    (x0, y0), (x1, y1) = points[i - 1], points[i]
    return y0 + (y1 - y0) * (bits - x0) / (x1 - x0)


def auth_delay(chip_id_bits: int, cal: DelayCalibration | None = None) -> float:
    return _interpolate((cal or default_delays()).auth, chip_id_bits)


def unlock_delay(ip_class: str, key_bits: int, cal: DelayCalibration | None = None) -> float:
    cal = cal or default_delays()
    try:
        points = cal.unlock[ip_class]
    except KeyError:
        raise UnknownIpClass(ip_class) from None
    return _interpolate(points, key_bits)


def frame_delay_estimate(key_bits: int, input_width: int, ps_per_frame: float) -> float:
    """Closed-form estimate: one frame per cycle, ``ceil(key_bits / input_width)`` frames.

    Only an approximation of the calibration tables; the GPIO series is not
    proportional to key size.
    """
    if input_width <= 0:
        raise ValueError("input width must be positive")
    return math.ceil(key_bits / input_width) * ps_per_frame


def sweep(kind: str, ip_class: str | None = None, points: list[int] | None = None) -> list[tuple[int, float]]:
    """(bits, delay_ps) rows over the calibrated points, or over ``points`` if given."""
    cal = default_delays()
    if kind == "auth":
        table = cal.auth
        fn = lambda b: auth_delay(b, cal)  # noqa: E731
    elif kind == "unlock":
        if ip_class not in cal.unlock:
            raise UnknownIpClass(ip_class)
        table = cal.unlock[ip_class]
        fn = lambda b: unlock_delay(ip_class, b, cal)  # noqa: E731
    else:
        raise ValueError(f"unknown sweep kind {kind!r}")
    bits = points if points is not None else [b for b, _ in table]
    return [(b, fn(b)) for b in bits]
