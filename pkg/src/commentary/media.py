"""Frame manifests: ingest per-second frame listings and serve frame windows.

Frames are pre-extracted images (1 frame per second) referenced by URI; this
module never opens them. Extraction is left to an external tool, e.g.
``ffmpeg -i video.mp4 -vf fps=1 frames/%04d.jpg``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

from .core import Seconds, check_seconds

MANIFEST_HEADER_TAG = "#video_id"

# Bounds the prompt payload when a dynamic window grows long.
DEFAULT_WINDOW_CAP = 30


class ManifestError(ValueError):
    """Manifest file is structurally invalid."""


class ManifestGapError(ManifestError):
    """Manifest does not cover every second of the video."""

    def __init__(self, second: int) -> None:
        super().__init__(f"manifest is missing a frame for second {second}")
        self.second = second


class WindowRangeError(ValueError):
    """Requested frame window lies outside the video bounds."""


@dataclass(frozen=True)
class FrameRef:
    """Reference to one sampled frame; the image itself is opened by backends only."""

    video_id: str
    second: int
    uri: str


@dataclass(frozen=True)
class FrameStore:
    """All frames of one video, keyed by integer second. Read-only after load."""

    video_id: str
    video_duration: Seconds
    frames: dict[int, FrameRef]

    def __post_init__(self) -> None:
        check_seconds(self.video_duration, "video_duration")

    @property
    def frame_count(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class FrameWindow:
    """Frames covering [window_start, window_end), ascending, newest retained on cap."""

    frames: tuple[FrameRef, ...]
    window_start: Seconds
    window_end: Seconds

    def __post_init__(self) -> None:
        object.__setattr__(self, "frames", tuple(self.frames))
        if self.window_start > self.window_end:
            raise ValueError("window_start must not exceed window_end")


def _required_seconds(duration: float) -> int:
    # A zero-length video still carries its opening frame so every window is
    # non-empty and the initialization prompt has a scene to show.
    return max(math.ceil(duration), 1)


def load_manifest(path: str | Path) -> FrameStore:
    """Load a frame manifest file into a FrameStore.

    Format: header line ``#video_id<TAB><id><TAB>duration<TAB><seconds>``,
    then one ``second<TAB>uri`` record per line covering every integer second
    of the video contiguously.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ManifestError(f"{path}: empty manifest, missing header line")

    header = lines[0].split("\t")
    if len(header) != 4 or header[0] != MANIFEST_HEADER_TAG or header[2] != "duration":
        raise ManifestError(f"{path}: malformed header line: {lines[0]!r}")
    video_id = header[1]
    if not video_id:
        raise ManifestError(f"{path}: empty video id in header")
    try:
        duration = check_seconds(float(header[3]), "duration")
    except ValueError as exc:
        raise ManifestError(f"{path}: bad duration in header: {exc}") from exc

    n = _required_seconds(duration)
    frames: dict[int, FrameRef] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ManifestError(f"{path}:{lineno}: expected 'second<TAB>uri', got {line!r}")
        try:
            second = int(parts[0])
        except ValueError as exc:
            raise ManifestError(f"{path}:{lineno}: non-integer second {parts[0]!r}") from exc
        uri = parts[1].strip()
        if not uri:
            raise ManifestError(f"{path}:{lineno}: empty frame uri")
        if second < 0 or second >= n:
            raise ManifestError(f"{path}:{lineno}: second {second} outside [0, {n})")
        if second in frames:
            raise ManifestError(f"{path}:{lineno}: duplicate second {second}")
        frames[second] = FrameRef(video_id=video_id, second=second, uri=uri)

    for second in range(n):
        if second not in frames:
            raise ManifestGapError(second)

    return FrameStore(video_id=video_id, video_duration=duration, frames=frames)


def frames_between(
    store: FrameStore, t_a: Seconds, t_b: Seconds, cap: int = DEFAULT_WINDOW_CAP
) -> FrameWindow:
    """Frames whose second lies in [t_a, max(t_b, t_a + 1)), newest `cap` retained.

    A degenerate window (t_a == t_b) therefore yields the single current frame.
    When the formula reaches past the last stored frame, the newest available
    frame is served instead so a window is never empty.
    """
    check_seconds(t_a, "t_a")
    check_seconds(t_b, "t_b")
    if cap < 1:
        raise ValueError(f"cap must be a positive integer, got {cap}")
    if t_a > t_b:
        raise WindowRangeError(f"window start {t_a} exceeds window end {t_b}")
    if t_b > store.video_duration:
        raise WindowRangeError(
            f"window [{t_a}, {t_b}] exceeds video duration {store.video_duration}"
        )

    n = store.frame_count
    limit = max(t_b, t_a + 1.0)
    seconds = [s for s in range(math.ceil(t_a), math.ceil(limit)) if s < n]
    if not seconds:
        seconds = [min(math.floor(t_a), n - 1)]
    if len(seconds) > cap:
        seconds = seconds[-cap:]
    refs = tuple(store.frames[s] for s in seconds)
    return FrameWindow(frames=refs, window_start=t_a, window_end=t_b)
