"""Synthetic grayscale videos with known background and foreground masks."""

import logging
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from pydantic import ValidationError

from .errors import SpecError
from .frames import FrameSequence, frames_to_matrix
from .model import BackgroundKind, BackgroundSpec, ForegroundEvent, SynthSpec

logger = logging.getLogger(__name__)


def load_spec(path: Union[str, Path]) -> SynthSpec:
    """Read a JSON synthetic video spec."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise SpecError(f"cannot read spec {path}: {e}")
    try:
        return SynthSpec.model_validate_json(text)
    except ValidationError as e:
        raise SpecError(f"invalid spec {path}: {e}")


def check_geometry(spec: SynthSpec) -> None:
    """Every event must stay inside the frame and the sequence.

    Raises:
        SpecError: describing the first offending event.
    """
    for idx, event in enumerate(spec.events):
        if event.end_frame < event.start_frame:
            raise SpecError(f"event {idx}: end_frame {event.end_frame} precedes start_frame {event.start_frame}")
        if event.end_frame >= spec.n_frames:
            raise SpecError(f"event {idx}: end_frame {event.end_frame} beyond last frame {spec.n_frames - 1}")
        if event.static_tail > event.duration:
            raise SpecError(f"event {idx}: static_tail {event.static_tail} longer than the event ({event.duration} frames)")
        for t in range(event.start_frame, event.end_frame + 1):
            top, left = event.position(t)
            if top < 0 or left < 0 or top + event.height > spec.height or left + event.width > spec.width:
                raise SpecError(
                    f"event {idx}: box at ({top}, {left}) size {event.height}x{event.width} "
                    f"leaves the {spec.height}x{spec.width} frame at frame {t}"
                )


def background_frame(bg: BackgroundSpec, height: int, width: int, t: int, n_frames: int) -> np.ndarray:
    cols = np.arange(width, dtype=np.float64)
    ramp = bg.low + (bg.high - bg.low) * cols / max(width - 1, 1)
    ramp = np.broadcast_to(ramp, (height, width))
    if bg.kind == BackgroundKind.CONSTANT:
        return np.full((height, width), bg.level)
    if bg.kind == BackgroundKind.GRADIENT:
        return ramp.copy()
    if bg.kind == BackgroundKind.DRIFTING_GAIN:
        gain = 1.0 + (bg.gain_end - 1.0) * t / max(n_frames - 1, 1)
        frame = ramp * gain
        if bg.drift_amplitude > 0:
            center_col = (width - 1) * t / max(n_frames - 1, 1)
            rows = np.arange(height, dtype=np.float64)[:, None]
            dist_sq = (cols[None, :] - center_col) ** 2 + (rows - (height - 1) / 2.0) ** 2
            frame = frame + bg.drift_amplitude * np.exp(-dist_sq / (2.0 * bg.drift_sigma ** 2))
        return frame
    rows = np.arange(height, dtype=np.float64)[:, None]
    texture = np.sin(2 * np.pi * (cols[None, :] + rows) / bg.texture_period)
    swing = np.sin(2 * np.pi * t / bg.oscillation_period)
    return ramp + bg.texture_amplitude * swing * texture


def synth_video(spec: SynthSpec) -> Tuple[FrameSequence, FrameSequence, FrameSequence]:
    """Render ``(A, true_background, gt_masks)``.

    ``A = clip(background + foreground + noise, 0, 255)``; foreground boxes add
    their amplitude to the background; masks are 1 on box pixels and 0 elsewhere.
    All randomness comes from ``spec.seed``.
    """
    check_geometry(spec)
    rng = np.random.default_rng(spec.seed)
    h, w, n = spec.height, spec.width, spec.n_frames
    backgrounds, masks, observed = [], [], []
    for t in range(n):
        bg = np.clip(background_frame(spec.background, h, w, t, n), 0, 255)
        fg = np.zeros((h, w))
        mask = np.zeros((h, w))
        for event in spec.events:
            pos = event.position(t)
            if pos is None:
                continue
            top, left = pos
            fg[top:top + event.height, left:left + event.width] += event.amplitude
            mask[top:top + event.height, left:left + event.width] = 1.0
        backgrounds.append(bg)
        masks.append(mask)
        observed.append(bg + fg)
    A = frames_to_matrix(observed)
    if spec.noise_sigma > 0:
        A = A + rng.normal(0.0, spec.noise_sigma, size=A.shape)
    A = np.clip(A, 0, 255)
    logger.info(f"Synthesized {n} frames of {h}x{w}, {len(spec.events)} foreground events")
    return (
        FrameSequence(h, w, A),
        FrameSequence(h, w, frames_to_matrix(backgrounds)),
        FrameSequence(h, w, frames_to_matrix(masks)),
    )


def standard_spec(seed: int = 0) -> SynthSpec:
    """60-frame 40x48 gradient scene: two moving boxes and one that stops for its last 10 frames."""
    return SynthSpec(
        height=40,
        width=48,
        n_frames=60,
        background=BackgroundSpec(kind=BackgroundKind.GRADIENT, low=60, high=160),
        events=[
            ForegroundEvent(start_frame=8, end_frame=15, top=5, left=4, height=6, width=6, d_col=3, amplitude=80),
            ForegroundEvent(start_frame=28, end_frame=35, top=25, left=40, height=6, width=6, d_col=-3, amplitude=80),
            ForegroundEvent(start_frame=48, end_frame=59, top=16, left=10, height=5, width=5, d_col=2,
                            amplitude=80, static_tail=10),
        ],
        noise_sigma=1.5,
        seed=seed,
    )
