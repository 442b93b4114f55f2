import math
import random

import pytest
from hypothesis import given
import hypothesis.strategies as st

from teleosim import netem
from teleosim.netem import NetProfile, ProfileError, ScheduledDelivery, apply


def flat(base=0.0, jitter=0.0, loss=0.0, penalty=0.0, name="t"):
    return NetProfile(name, base, jitter, loss, penalty)


def test_zero_profile_delivers_now():
    rng = random.Random(1)
    out = apply(flat(), 5000, 1234, rng)
    assert out == ScheduledDelivery(1234, False, b"")


def test_penalty_arithmetic():
    # 50 ms base + 2 KiB x 10 ms/KiB = 70 ms
    rng = random.Random(1)
    out = apply(flat(base=50.0, penalty=10.0), 2048, 0, rng)
    assert out.deliver_at == 70_000 and not out.dropped


def test_loss_fraction_monte_carlo():
    for loss in (0.1, 0.5, 0.9):
        rng = random.Random(99)
        n = 10_000
        drops = sum(apply(flat(loss=loss), 0, 0, rng).dropped for _ in range(n))
        assert abs(drops / n - loss) <= 0.02


def test_determinism_same_seed_same_schedule():
    def run():
        rng = random.Random(7)
        return [apply(flat(base=10, jitter=5, loss=0.2), n * 10, n, rng)
                for n in range(500)]
    assert run() == run()


def test_payload_monotone_with_zero_jitter():
    rng = random.Random(3)
    profile = flat(base=20.0, penalty=4.0)
    prev = -1
    for size in range(0, 20000, 512):
        out = apply(profile, size, 0, rng)
        assert out.deliver_at >= prev
        prev = out.deliver_at


def test_empirical_mean_matches_model():
    profile = flat(base=40.0, jitter=12.0, penalty=2.0)
    rng = random.Random(11)
    size = 2048
    n = 10_000
    total = 0
    for _ in range(n):
        out = apply(profile, size, 0, rng)
        total += out.deliver_at / 1000.0
    expected = 40.0 + 12.0 * math.sqrt(2 / math.pi) + (size / 1024) * 2.0
    assert abs(total / n - expected) / expected <= 0.03


def test_profile_invariants():
    with pytest.raises(ValueError):
        NetProfile("x", -1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        NetProfile("x", 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        NetProfile("x", float("nan"), 0.0, 0.0)


def test_route_defaults_calibration():
    # round trip ~= 2 x owd + 20 ms node processing lands on the targets
    for route, base in (("local", 90.0), ("hongkong", 140.0),
                        ("japan", 240.0), ("belgium", 340.0)):
        assert netem.profile_for_route(route).base_owd_ms == base
    with pytest.raises(ProfileError):
        netem.profile_for_route("mars")


def test_profile_file_roundtrip(tmp_path):
    path = tmp_path / "profiles.ini"
    path.write_text("[slow]\nbase_owd_ms = 500\njitter_sigma_ms = 1\n"
                    "loss_rate = 0.25\nbandwidth_penalty_ms_per_kb = 2\n")
    profiles = netem.load_profiles(str(path))
    assert profiles["slow"] == NetProfile("slow", 500.0, 1.0, 0.25, 2.0)


def test_profile_file_unknown_key(tmp_path):
    path = tmp_path / "profiles.ini"
    path.write_text("[slow]\nspeed = 9\n")
    with pytest.raises(ProfileError):
        netem.load_profiles(str(path))


def test_profile_file_missing():
    with pytest.raises(ProfileError):
        netem.load_profiles("/nonexistent/profiles.ini")


@given(st.integers(min_value=0, max_value=10**6), st.integers(min_value=0, max_value=2**32))
def test_delivery_never_before_send(seed, now):
    rng = random.Random(seed)
    out = apply(flat(base=5.0, jitter=3.0, loss=0.1, penalty=1.0), 100, now, rng)
    assert out.deliver_at >= now or out.dropped
