"""Shared fixtures: synthesized videos, extracted samples, a running server."""

import numpy as np
import pytest

cv2 = pytest.importorskip("cv2")

from framebridge import BridgeConfig, extract_features, serve_oracle

QA = [
    ("What shape moves across the scene?",
     ["a circle", "a square", "a triangle", "nothing moves"], 0),
    ("What happens to the brightness over time?",
     ["it decreases", "it stays constant", "it increases", "it flickers randomly"], 2),
    ("Where does the rectangle end up?",
     ["top left", "bottom right", "center", "it leaves the frame"], 1),
]


def _write_video(path, painter, n_frames=48, size=(96, 72)):
    writer = cv2.VideoWriter(
        str(path), cv2.VideoWriter_fourcc(*"MJPG"), 12, size
    )
    assert writer.isOpened()
    for i in range(n_frames):
        frame = np.zeros((size[1], size[0], 3), np.uint8)
        painter(frame, i, n_frames)
        writer.write(frame)
    writer.release()


def _moving_circle(frame, i, n):
    x = int(10 + (frame.shape[1] - 20) * i / n)
    cv2.circle(frame, (x, frame.shape[0] // 2), 8, (40, 200, 240), -1)


def _brightening(frame, i, n):
    frame[:] = int(30 + 200 * i / n)


def _bouncing_rect(frame, i, n):
    x = int((frame.shape[1] - 24) * i / n)
    y = int((frame.shape[0] - 18) * i / n)
    cv2.rectangle(frame, (x, y), (x + 20, y + 14), (230, 80, 60), -1)


@pytest.fixture(scope="session")
def video_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("videos")
    _write_video(root / "vid0.avi", _moving_circle)
    _write_video(root / "vid1.avi", _brightening)
    _write_video(root / "vid2.avi", _bouncing_rect)
    return root


@pytest.fixture(scope="session")
def sample_store(video_dir, tmp_path_factory):
    root = tmp_path_factory.mktemp("samples")
    config = BridgeConfig(frames_per_video=12)
    for index, (question, options, answer_id) in enumerate(QA):
        extract_features(
            video_dir / f"vid{index}.avi",
            question,
            options,
            answer_id,
            root / f"vid{index}",
            config=config,
            sample_id=f"vid{index}",
        )
    return root


@pytest.fixture(scope="session")
def oracle_server(sample_store):
    server = serve_oracle(BridgeConfig(frames_per_video=12), sample_store)
    yield server
    server.stop()
