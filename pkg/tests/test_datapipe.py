import json

import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_pairs
from foresight_planner.core import Image
from foresight_planner.datapipe import (
    EpisodeManifest,
    ManifestError,
    OffsetPolicy,
    ScoreRecord,
    SubtaskSegment,
    aggregate_scores,
    condition_frames,
    dataset_stats,
    format_score_table,
    read_manifests,
    read_ppm,
    read_score_csv,
    sample_all,
    sample_pairs,
    write_episode,
    write_ppm,
)
from foresight_planner.gridworld import generate_episode, load_suite


def manifest(segments, fps=10, frame_count=None, episode_id="ep"):
    segs = tuple(SubtaskSegment(s, e, "pick up the red block") for s, e in segments)
    n = frame_count if frame_count is not None else (segments[-1][1] + 1 if segments else 0)
    return EpisodeManifest(episode_id, fps, episode_id, n, "test", segs)


def test_worked_example_half_length():
    pairs = sample_pairs(manifest([(0, 100)]), OffsetPolicy.HALF_LENGTH)
    assert [(p.cond_frame, p.future_frame) for p in pairs] == [
        (0, 50), (10, 60), (20, 70), (30, 80), (40, 90), (50, 100), (60, 100), (70, 100), (80, 100), (90, 100)]


def test_worked_example_final_state():
    pairs = sample_pairs(manifest([(0, 100)]), "final")
    assert len(pairs) == 10 and {p.future_frame for p in pairs} == {100}


def test_single_frame_segment_has_no_pairs():
    assert sample_pairs(manifest([(0, 0)]), "half") == []


def test_fractional_fps_uses_elapsed_time():
    assert condition_frames(0, 10, 2.5) == [0, 3, 5, 8, 10]
    assert condition_frames(4, 20, 7) == [4, 11, 18]


@pytest.mark.parametrize("segments,frame_count,field", [
    ([(0, 10)], 5, "subtasks[0].end_frame"),
    ([(3, 1)], 10, "subtasks[0].start_frame"),
    ([(0, 5), (5, 9)], 10, "subtasks[1].start_frame"),
])
def test_invalid_manifest_names_field(segments, frame_count, field):
    with pytest.raises(ManifestError) as err:
        sample_pairs(manifest(segments, frame_count=frame_count), "half")
    assert err.value.field == field


def test_fps_must_be_positive():
    with pytest.raises(ManifestError):
        sample_pairs(manifest([(0, 4)], fps=0), "half")


@st.composite
def manifests(draw):
    fps = draw(st.sampled_from([1, 2, 5, 10, 30, 2.5, 7.5]))
    n = draw(st.integers(1, 6))
    bounds, cursor = [], 0
    for _ in range(n):
        cursor += draw(st.integers(0, 5))
        length = draw(st.integers(1, 80))
        bounds.append((cursor, cursor + length - 1))
        cursor += length
    return manifest(bounds, fps=fps, frame_count=cursor + draw(st.integers(0, 3)))


@settings(max_examples=300, deadline=None)
@given(manifests(), st.sampled_from(["half", "final"]))
def test_pairs_match_brute_force(m, policy):
    pairs = sample_pairs(m, policy)
    assert [(p.episode_id, p.subtask_index, p.cond_frame, p.future_frame) for p in pairs] == brute_force_pairs(m, policy)
    for p in pairs:
        seg = m.subtasks[p.subtask_index]
        assert seg.start_frame <= p.cond_frame < p.future_frame <= seg.end_frame


def test_dataset_stats_counts():
    suite = load_suite(__import__("conftest").SUITE_DIR)
    three = [s for s in suite if len(s.subtasks) == 2]
    ms = [generate_episode(s, seed=k).manifest for s in three for k in range(4)]
    stats = dataset_stats(ms)
    assert stats["episodes"] == len(ms)
    assert stats["total_subtasks"] == sum(stats["subtasks_per_source"].values()) == 2 * len(ms)
    for policy in ("half", "final"):
        assert stats["pairs_per_policy"][policy] == len(sample_all(ms, policy))
    json.dumps(stats)


def test_empty_stats():
    assert dataset_stats([]) == {"episodes": 0, "subtasks_per_source": {}, "total_subtasks": 0,
                                 "pairs_per_policy": {"half": 0, "final": 0}}


def test_sample_all_is_sorted():
    a = manifest([(0, 30)], episode_id="b")
    b = manifest([(0, 30), (31, 60)], episode_id="a")
    keys = [(p.episode_id, p.subtask_index, p.cond_frame) for p in sample_all([a, b], "half")]
    assert keys == sorted(keys)


def test_score_aggregation_examples():
    recs = [ScoreRecord(f"in{i}", "InDist", 1, 1) for i in range(50)]
    recs += [ScoreRecord(f"ood{i}", "OOD", int(i < 44), int(i < 48)) for i in range(50)]
    rows = {r.split: r.render() for r in aggregate_scores(recs)}
    assert rows == {"InDist": "InDist,50,1.00,1.00", "OOD": "OOD,50,0.88,0.96"}


def test_empty_split_gives_warning_row(caplog):
    rows = aggregate_scores([ScoreRecord("a", "OOD", 1, 0)])
    table = format_score_table(rows)
    assert "InDist,0,n/a,n/a  # warning" in table
    assert "OOD,1,1.00,0.00" in table


def test_score_record_validation(tmp_path):
    with pytest.raises(ValueError):
        ScoreRecord("x", "OOD", 2, 0)
    path = tmp_path / "scores.csv"
    path.write_text("image_id,split,fidelity,quality\na,InDist,1,0\nb,OOD,0,1\n")
    assert read_score_csv(path) == [ScoreRecord("a", "InDist", 1, 0), ScoreRecord("b", "OOD", 0, 1)]


def test_episode_files_round_trip(tmp_path):
    spec = load_suite(__import__("conftest").SUITE_DIR)[0]
    rec = generate_episode(spec, seed=1)
    write_episode(rec.frames, rec.manifest, tmp_path)
    [back] = read_manifests(tmp_path)
    assert back == rec.manifest
    assert read_ppm(tmp_path / back.frames_dir / "frame_000000.ppm") == rec.frames[0]


def test_ppm_with_whitespace_bytes(tmp_path):
    img = Image(2, 1, bytes([10, 32, 9, 13, 0, 255]))
    write_ppm(img, tmp_path / "x.ppm")
    assert read_ppm(tmp_path / "x.ppm") == img
