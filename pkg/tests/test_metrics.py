import random

import pytest
from hypothesis import given, strategies as st

from citadel_sim import metrics as m

import oracles

AUTH_POINTS = [(128, 320), (256, 680), (512, 1270), (1024, 2540), (2048, 4870)]


def test_puf_overhead_examples():
    assert m.puf_overhead([256]) == 1536
    assert m.puf_overhead([]) == 0
    assert m.puf_overhead([256, 256, 128]) == 3840
    with pytest.raises(ValueError):
        m.puf_overhead([-1])


@given(st.lists(st.integers(0, 4096), max_size=20))
def test_puf_overhead_linear(bits):
    assert m.puf_overhead(bits) == 6 * sum(bits)


def test_total_overhead():
    gscl = m.technology_profiles()["GSCL45"]
    assert m.total_overhead(gscl, [], 0) == 756716
    assert m.total_overhead(gscl, [10.5, 20.25], 1536, gate_area=0.5) == 756716 + 30.75 + 768
    with pytest.raises(ValueError):
        m.total_overhead(gscl, [], 1536)  # no gate area known
    with pytest.raises(ValueError):
        m.total_overhead(gscl, [-1.0], 0)


def test_technology_profiles():
    t = m.technology_profiles()
    assert t["LEDA250"].citadel_area == 12783906
    assert t["LEDA250"].citadel_dyn_power == 551
    assert t["GSCL45"].citadel_leak_power == 3.5
    with pytest.raises(ValueError):
        m.TechnologyProfile("x", 0, 1, 1)


def test_with_citadel_column_is_additive():
    data = m.calibration_data()
    techs = m.technology_profiles()
    for soc in data["soc_baselines"].values():
        for tech, base in soc["area_um2"].items():
            assert soc["with_citadel_um2"][tech] == base + techs[tech].citadel_area


@pytest.mark.parametrize("soc,reported,recomputed", [
    ("Single-SoC", 17.50, 17.36),
    ("Multi-SoC", 14.00, 14.31),
    ("MIT CEP", 10.50, 10.95),
])
def test_overhead_percentages(soc, reported, recomputed):
    avg = m.overhead_percentages(m.soc_baselines(soc))
    assert avg == pytest.approx(recomputed, abs=0.01)
    assert abs(avg - reported) <= 1.0


def test_overhead_identity_and_errors():
    techs = m.technology_profiles()
    assert m.overhead_percentages({"GSCL45": techs["GSCL45"].citadel_area}) == pytest.approx(100.0)
    with pytest.raises(ValueError):
        m.overhead_percentages({"GSCL45": 0})
    with pytest.raises(m.UnknownSoc):
        m.soc_baselines("Nope")


def test_auth_delay_points():
    for bits, ps in AUTH_POINTS:
        assert m.auth_delay(bits) == ps
    assert m.auth_delay(384) == 975
    assert m.auth_delay(384) == oracles.lerp(AUTH_POINTS, 384)
    for bad in (127, 2049):
        with pytest.raises(m.OutOfRange):
            m.auth_delay(bad)


def test_unlock_delay_points():
    assert m.unlock_delay("aes256", 512) == 480
    assert m.unlock_delay("uart", 2048) == 4080
    assert m.unlock_delay("aes256", 1024) == 2 * m.unlock_delay("aes256", 512)
    assert m.unlock_delay("gpio", 1024) == 1500
    with pytest.raises(m.UnknownIpClass):
        m.unlock_delay("dma", 512)
    with pytest.raises(m.OutOfRange):
        m.unlock_delay("sha256", 4096)


def test_interpolation_matches_oracle():
    rng = random.Random(0)
    cal = m.default_delays()
    for ip, pts in cal.unlock.items():
        for _ in range(200):
            b = rng.randint(128, 2048)
            assert m.unlock_delay(ip, b) == pytest.approx(oracles.lerp(pts, b))


@pytest.mark.parametrize("ip", ["aes256", "uart", "sha256", "gpio"])
def test_monotone(ip):
    vals = [m.unlock_delay(ip, b) for b in range(128, 2049, 16)]
    assert vals == sorted(vals)
    auth = [m.auth_delay(b) for b in range(128, 2049, 16)]
    assert auth == sorted(auth)


def test_calibration_validation():
    with pytest.raises(ValueError):
        m.DelayCalibration(((256, 1), (128, 2)), {})


def test_frame_estimate():
    assert m.frame_delay_estimate(512, 128, 120) == 480
    assert m.frame_delay_estimate(100, 32, 10) == 40
    with pytest.raises(ValueError):
        m.frame_delay_estimate(512, 0, 1)


def test_sweep():
    assert m.sweep("auth") == AUTH_POINTS
    assert (512, 480) in m.sweep("unlock", "aes256")
    assert m.sweep("auth", points=[384]) == [(384, 975)]
    with pytest.raises(m.UnknownIpClass):
        m.sweep("unlock", "dma")
    with pytest.raises(ValueError):
        m.sweep("power")
