import numpy as np
import pytest
from hypothesis import given, strategies as st

from foresight_planner.core import (
    GOAL_SLOT,
    ActionChunk,
    ActionKind,
    AugmentError,
    Decision,
    GuidancePacket,
    Image,
    Observation,
    augment_observation,
)


def _obs(w=16, h=16, cameras=2):
    rng = np.random.default_rng(w * h)
    cams = {i: Image.from_array(rng.integers(0, 256, (h, w, 3))) for i in range(cameras)}
    return Observation(3, 300, cams, (1.0, 2.0))


def test_image_validates_length():
    with pytest.raises(ValueError):
        Image(2, 2, bytes(11))
    with pytest.raises(ValueError):
        Image(0, 2, b"")
    assert Image.blank(3, 2, (1, 2, 3)).to_array()[1, 2].tolist() == [1, 2, 3]


def test_observation_requires_head():
    with pytest.raises(ValueError):
        Observation(0, 0, {1: Image.blank(2, 2)})


def test_augment_appends_goal():
    obs = _obs()
    goal = Image.blank(16, 16, (9, 9, 9))
    out = augment_observation(obs, goal)
    assert len(out.cameras) == 3
    assert out.cameras[GOAL_SLOT] == goal
    assert GOAL_SLOT not in obs.cameras


def test_augment_without_goal_duplicates_head():
    obs = _obs()
    out = augment_observation(obs, None)
    assert len(out.cameras) == 3
    assert out.goal.data == obs.head.data


def test_augment_rejects_size_mismatch():
    with pytest.raises(AugmentError):
        augment_observation(_obs(), Image.blank(8, 8))


def test_augment_twice_is_an_error():
    once = augment_observation(_obs(), None)
    with pytest.raises(AugmentError):
        augment_observation(once, None)


@given(st.integers(1, 12), st.lists(st.sampled_from(list(ActionKind)), max_size=20))
def test_padded_chunk_has_exact_length(length, actions):
    chunk = ActionChunk.padded(actions, length)
    assert len(chunk) == length
    assert list(chunk)[: min(length, len(actions))] == actions[:length]


@pytest.mark.parametrize("decision", [Decision.DONE, Decision.UNRECOVERABLE])
def test_terminal_packets_carry_no_text(decision):
    GuidancePacket(decision, "", None, 2)
    with pytest.raises(ValueError):
        GuidancePacket(decision, "pick up the red block")
    with pytest.raises(ValueError):
        GuidancePacket(decision, "", Image.blank(2, 2))


@pytest.mark.parametrize("decision", [Decision.CONTINUE, Decision.ADVANCE])
def test_live_packets_need_text(decision):
    with pytest.raises(ValueError):
        GuidancePacket(decision, "")
