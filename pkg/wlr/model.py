from enum import Enum
from typing import List, Literal, Optional

from pydantic import BaseModel, Field, model_validator


class BgParams(BaseModel):
    """Parameters of the batch and incremental background pipelines."""

    i1: int = Field(2, ge=1)
    i2: int = Field(1, ge=0)
    ir: int = Field(1, ge=0)
    k_max: int = Field(10, ge=1)
    eps: float = Field(1e-7, gt=0)
    max_iter: int = Field(500, ge=1)
    alpha: float = Field(500.0, gt=0)
    beta: float = Field(1000.0, gt=0)
    tau: Optional[float] = Field(None, ge=0)  # None means 5 * sqrt(m * n1)
    p: int = Field(1, ge=1)
    seed: int = 0
    init_rank: int = Field(1, ge=1)
    prior_source: Literal["data", "background"] = "data"
    solver: Literal["wlr", "ghs"] = "wlr"
    eps1: Optional[float] = Field(None, ge=0)  # None means Otsu threshold
    workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def check_weight_interval(self):
        if self.beta < self.alpha:
            raise ValueError(f"beta ({self.beta}) must be >= alpha ({self.alpha})")
        return self


class BackgroundKind(str, Enum):
    CONSTANT = "constant"
    GRADIENT = "gradient"
    DRIFTING_GAIN = "drifting-gain"
    OSCILLATING_TEXTURE = "oscillating-texture"


class BackgroundSpec(BaseModel):
    kind: BackgroundKind = BackgroundKind.GRADIENT
    level: float = Field(100.0, ge=0, le=255)  # constant kind
    low: float = Field(60.0, ge=0, le=255)  # left edge of the horizontal ramp
    high: float = Field(160.0, ge=0, le=255)  # right edge of the horizontal ramp
    gain_end: float = Field(1.2, gt=0)  # drifting-gain: gain at the last frame, starting from 1.0
    # drifting-gain: peak of an additive Gaussian spot that travels along the middle row from
    # the left edge (first frame) to the right edge (last frame)
    drift_amplitude: float = Field(0.0, ge=0)
    drift_sigma: float = Field(6.0, gt=0)  # pixels
    texture_amplitude: float = Field(15.0, ge=0)
    texture_period: float = Field(8.0, gt=0)  # pixels
    oscillation_period: float = Field(20.0, gt=0)  # frames


class ForegroundEvent(BaseModel):
    """An additive box moving at constant velocity over ``start_frame..end_frame`` (inclusive).

    The last ``static_tail`` frames of the event keep the box at one position.
    """

    start_frame: int = Field(ge=0)
    end_frame: int = Field(ge=0)
    top: int = Field(ge=0)
    left: int = Field(ge=0)
    height: int = Field(gt=0)
    width: int = Field(gt=0)
    d_row: int = 0
    d_col: int = 0
    amplitude: float = 80.0
    static_tail: int = Field(0, ge=0)

    @property
    def duration(self) -> int:
        return self.end_frame - self.start_frame + 1

    def position(self, frame: int) -> Optional[tuple]:
        """Top-left corner of the box at ``frame``, or None when the event is inactive."""
        if not self.start_frame <= frame <= self.end_frame:
            return None
        offset = min(frame - self.start_frame, self.duration - self.static_tail)
        return self.top + self.d_row * offset, self.left + self.d_col * offset


class SynthSpec(BaseModel):
    height: int = Field(gt=0)
    width: int = Field(gt=0)
    n_frames: int = Field(gt=0)
    background: BackgroundSpec = Field(default_factory=BackgroundSpec)
    events: List[ForegroundEvent] = Field(default_factory=list)
    noise_sigma: float = Field(0.0, ge=0)
    seed: int = 0
