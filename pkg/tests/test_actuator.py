import json
import random

import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from teleosim.actuator import (
    AckMessage,
    ArmState,
    CommandDecodeError,
    ControlMessage,
    GraspConfig,
    JOINTS,
    clamp_angle,
    converged,
    grasp_attempt,
    handle_command,
    step,
    step_with_rate,
)
from teleosim.perception import BBox, Detection, SceneObject


def cmd(seq, joint, target, issued=0):
    return ControlMessage(seq=seq, joint=joint, target_deg=target, issued_at_us=issued)


def test_set_target_and_ack():
    state = ArmState()
    new, ack, last = handle_command(cmd(1, "J3", 45.0), state, 0, now_us=10)
    assert new.targets_deg[2] == 45.0
    assert ack.applied and ack.seq == 1 and last == 1


def test_limit_clamp():
    new, ack, _ = handle_command(cmd(1, "J1", 200.0), ArmState(), 0, 0)
    assert new.targets_deg[0] == 180.0 and ack.applied
    new, _, _ = handle_command(cmd(2, "J1", -15.0), ArmState(), 0, 0)
    assert new.targets_deg[0] == 0.0


def test_duplicate_seq_rejected_idempotent():
    state = ArmState()
    s1, a1, last = handle_command(cmd(5, "J2", 90.0), state, 0, 0)
    s2, a2, last2 = handle_command(cmd(5, "J2", 90.0), s1, last, 0)
    assert a1.applied and not a2.applied
    assert a2.error == "stale-seq"
    assert s2 == s1 and last2 == last


def test_old_command_times_out():
    _, ack, _ = handle_command(cmd(1, "J1", 10.0, issued=0), ArmState(), 0,
                               now_us=3_000_000, staleness_timeout_s=2.0)
    assert not ack.applied and ack.error == "stale-timeout"


def test_unknown_joint_rejection_ack():
    state = ArmState()
    new, ack, _ = handle_command(cmd(1, "J9", 10.0), state, 0, 0)
    assert not ack.applied and ack.error == "unknown-joint"
    assert new == state


def test_gripper_command_sets_boolean():
    s1, ack, _ = handle_command(cmd(1, "GRIP", 180.0), ArmState(), 0, 0)
    assert s1.gripper_closed and ack.applied
    s2, _, _ = handle_command(cmd(2, "GRIP", 0.0), s1, 1, 0)
    assert not s2.gripper_closed


def test_step_moves_by_slew_budget():
    state = ArmState(targets_deg=(90.0, 0, 0, 0, 0, 0))
    out = step_with_rate(state, 0.1, 300.0)
    assert out.angles_deg[0] == pytest.approx(30.0)


def test_step_fixed_point_at_target():
    state = ArmState(angles_deg=(10.0,) * 6, targets_deg=(10.0,) * 6)
    assert step(state, 0.05).angles_deg == state.angles_deg


def test_step_no_overshoot():
    state = ArmState(angles_deg=(89.0, 0, 0, 0, 0, 0),
                     targets_deg=(90.0, 0, 0, 0, 0, 0))
    out = step_with_rate(state, 0.1, 300.0)
    assert out.angles_deg[0] == 90.0


def test_step_requires_positive_dt():
    with pytest.raises(ValueError):
        step(ArmState(), 0.0)


angles6 = st.tuples(*[st.floats(0, 180, allow_nan=False) for _ in range(6)])


@settings(max_examples=200)
@given(angles6, angles6, st.floats(0.001, 0.5))
def test_slew_bound_property(start, targets, dt):
    state = ArmState(angles_deg=start, targets_deg=targets)
    out = step_with_rate(state, dt, 300.0)
    for before, after in zip(state.angles_deg, out.angles_deg):
        assert abs(after - before) <= 300.0 * dt + 1e-9


@settings(max_examples=100)
@given(st.lists(st.tuples(st.sampled_from(JOINTS + ("GRIP",)),
                          st.floats(-720, 720, allow_nan=False)),
                max_size=40))
def test_joint_limits_never_violated(commands):
    state = ArmState()
    last = 0
    for i, (joint, target) in enumerate(commands, start=1):
        state, _, last = handle_command(cmd(i, joint, target), state, last, 0)
        state = step(state, 0.01)
        assert all(0.0 <= a <= 180.0 for a in state.angles_deg)
        assert all(0.0 <= t <= 180.0 for t in state.targets_deg)


def test_trajectory_determinism():
    def run():
        state = ArmState()
        last = 0
        rng = random.Random(9)
        trace = []
        for i in range(1, 50):
            joint = JOINTS[rng.randrange(6)]
            state, _, last = handle_command(cmd(i, joint, rng.uniform(-20, 200)),
                                            state, last, i)
            state = step(state, 0.01)
            trace.append(state.angles_deg)
        return trace
    assert run() == run()


def test_control_message_canonical_json():
    msg = ControlMessage(seq=4, joint="J2", target_deg=45.0, issued_at_us=123)
    raw = msg.to_json()
    assert raw == b'{"v":1,"seq":4,"joint":"J2","target_deg":45.0,"issued_at_us":123}'
    assert ControlMessage.from_json(raw) == msg


def test_ack_canonical_json_field_order():
    state = ArmState(angles_deg=(1.0, 2.0, 3.0, 4.0, 5.0, 6.0))
    ack = AckMessage(seq=9, applied=True, acked_at_us=77, state=state)
    obj = json.loads(ack.to_json())
    assert list(obj.keys()) == ["seq", "applied", "acked_at_us", "angles_deg", "grip"]
    parsed = AckMessage.from_json(ack.to_json())
    assert parsed.seq == 9 and parsed.applied and parsed.state.angles_deg[2] == 3.0


def test_malformed_payload_is_decode_error():
    for bad in (b"", b"{}", b'{"seq":1}', b"\xff\xfe", b'{"v":1,"seq":"x"}'):
        with pytest.raises(CommandDecodeError):
            ControlMessage.from_json(bad)


def make_target(cx=0.5, cy=0.5):
    return SceneObject(0, BBox(cx, cy, 0.1, 0.1))


def settled_state():
    return ArmState(angles_deg=(10.0,) * 6, targets_deg=(10.0,) * 6)


def test_grasp_zero_error_succeeds():
    target = make_target()
    det = Detection(target.box, 0, 1.0)
    out = grasp_attempt(settled_state(), target, det, random.Random(0))
    assert out.success and out.center_error_norm == 0.0


def test_grasp_threshold_failure():
    target = make_target(0.5, 0.5)
    det = Detection(BBox(0.55, 0.5, 0.1, 0.1), 0, 0.9)  # 0.05 off, tau ~0.019
    out = grasp_attempt(settled_state(), target, det, random.Random(0))
    assert not out.success and out.reason == "misaligned"
    assert out.center_error_norm == pytest.approx(0.05)


def test_grasp_requires_convergence():
    target = make_target()
    det = Detection(target.box, 0, 1.0)
    moving = ArmState(angles_deg=(0.0,) * 6, targets_deg=(90.0,) * 6)
    out = grasp_attempt(moving, target, det, random.Random(0))
    assert not out.success and out.reason == "not-converged"


def test_grasp_missing_detection_fails_with_reason():
    target = make_target()
    out = grasp_attempt(settled_state(), target, None, random.Random(0))
    assert not out.success and out.reason == "no-detection"
    wrong_class = Detection(target.box, 1, 0.9)
    out2 = grasp_attempt(settled_state(), target, wrong_class, random.Random(0))
    assert not out2.success and out2.reason == "no-detection"


def test_grasp_stale_pending_command_fails():
    target = make_target()
    det = Detection(target.box, 0, 1.0)
    out = grasp_attempt(settled_state(), target, det, random.Random(0),
                        GraspConfig(), oldest_pending_age_s=5.0)
    assert not out.success and out.reason == "stale-command-pending"


def test_grasp_requires_open_gripper():
    target = make_target()
    det = Detection(target.box, 0, 1.0)
    closed = ArmState(angles_deg=(0.0,) * 6, targets_deg=(0.0,) * 6,
                      gripper_closed=True)
    with pytest.raises(ValueError):
        grasp_attempt(closed, target, det, random.Random(0))


def test_grasp_success_rate_monte_carlo():
    # default noise: sigma 5.5px/640 per axis, tau 12px/640 -> ~0.94 expected
    rng = random.Random(2024)
    cfg = GraspConfig()
    wins = 0
    n = 300
    sigma = 5.5 / 640.0
    for _ in range(n):
        target = make_target()
        det = Detection(BBox(0.5 + rng.gauss(0, sigma), 0.5 + rng.gauss(0, sigma),
                             0.1, 0.1), 0, 0.9)
        wins += grasp_attempt(settled_state(), target, det, rng, cfg).success
    assert 0.90 <= wins / n <= 0.98


def test_clamp_angle():
    assert clamp_angle(-5) == 0.0
    assert clamp_angle(200) == 180.0
    assert clamp_angle(90) == 90.0


def test_converged_tolerance():
    state = ArmState(angles_deg=(10.4,) + (0.0,) * 5,
                     targets_deg=(10.0,) + (0.0,) * 5)
    assert converged(state, 0.5)
    assert not converged(state, 0.3)
