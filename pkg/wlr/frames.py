"""Frame sequences and their binary PGM (P5) storage.

A frame of height h and width w becomes one column of an (h*w) x n matrix
by a column-major pixel scan: column j of the matrix is
``frame_j.reshape(-1, order="F")``.
"""

import io
import logging
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Tuple, Union

import numpy as np
from PIL import Image

from .errors import FrameFormatError, ParameterError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass(frozen=True)
class FrameSequence:
    height: int
    width: int
    data: np.ndarray  # (height * width) x n_frames

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] != self.height * self.width:
            raise ParameterError(
                f"data shape {data.shape} does not match {self.height}x{self.width} frames"
            )
        if data.size and not (np.all(np.isfinite(data)) and data.min() >= 0.0 and data.max() <= 255.0):
            raise ParameterError("pixel values must be finite and lie in [0, 255]")
        object.__setattr__(self, "data", data)

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]

    def frame(self, j: int) -> np.ndarray:
        return matrix_to_frames(self.data[:, j:j + 1], self.height, self.width)[0]

    def frames(self) -> List[np.ndarray]:
        return matrix_to_frames(self.data, self.height, self.width)

    @classmethod
    def from_frames(cls, frames: Iterable[np.ndarray]) -> "FrameSequence":
        frames = [np.asarray(f, dtype=np.float64) for f in frames]
        if not frames:
            raise ParameterError("no frames given")
        h, w = frames[0].shape
        return cls(height=h, width=w, data=frames_to_matrix(frames))


def frames_to_matrix(frames: List[np.ndarray]) -> np.ndarray:
    return np.column_stack([f.reshape(-1, order="F") for f in frames])


def matrix_to_frames(data: np.ndarray, height: int, width: int) -> List[np.ndarray]:
    return [data[:, j].reshape((height, width), order="F") for j in range(data.shape[1])]


def _read_token(buf: bytes, pos: int) -> Tuple[bytes, int]:
    # Netpbm header tokens are separated by whitespace; '#' starts a comment running to end of line.
    while pos < len(buf):
        ch = buf[pos:pos + 1]
        if ch == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < len(buf) and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    return buf[start:pos], pos


def decode_pgm(raw: bytes, name: str) -> np.ndarray:
    """Decode an 8-bit binary graymap. The header is checked before Pillow decodes the pixels."""
    pos = 0
    fields = []
    for _ in range(4):
        token, pos = _read_token(raw, pos)
        fields.append(token)
    magic, width, height, maxval = fields
    if magic != b"P5":
        raise FrameFormatError(f"expected P5 magic, found {magic[:8]!r}", path=name)
    try:
        width, height, maxval = int(width), int(height), int(maxval)
    except ValueError:
        raise FrameFormatError("malformed P5 header", path=name)
    if maxval != 255:
        raise FrameFormatError(f"maxval must be 255, found {maxval}", path=name)
    if width <= 0 or height <= 0:
        raise FrameFormatError(f"invalid dimensions {width}x{height}", path=name)
    try:
        with Image.open(io.BytesIO(raw)) as img:
            pixels = np.asarray(img, dtype=np.uint8)
    except (OSError, ValueError) as e:
        raise FrameFormatError(f"cannot decode pixels: {e}", path=name)
    if pixels.shape != (height, width):
        raise FrameFormatError(f"pixel data has shape {pixels.shape}, header says {height}x{width}", path=name)
    return pixels.astype(np.float64)


def encode_pgm(frame: np.ndarray) -> bytes:
    """Round to the nearest integer, clip to [0, 255] and encode as P5."""
    pixels = np.clip(np.rint(frame), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(pixels).save(buf, format="PPM")
    return buf.getvalue()


def _collect(path: Path) -> List[Tuple[str, bytes]]:
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.is_file() and p.suffix.lower() == ".pgm")
        return [(str(p), p.read_bytes()) for p in files]
    if path.is_file() and zipfile.is_zipfile(path):
        with zipfile.ZipFile(path) as archive:
            names = sorted(n for n in archive.namelist() if n.lower().endswith(".pgm") and not n.endswith("/"))
            return [(f"{path}:{n}", archive.read(n)) for n in names]
    raise FrameFormatError("not a directory or zip archive", path=str(path))


def read_frames(path: PathLike) -> FrameSequence:
    """Read every ``.pgm`` frame of a directory or zip archive, in lexicographic filename order.

    Raises:
        FrameFormatError: no frames, bad header, maxval other than 255, or mixed dimensions.
    """
    path = Path(path)
    if not path.exists():
        raise FrameFormatError("path does not exist", path=str(path))
    entries = _collect(path)
    if not entries:
        raise FrameFormatError("no frames found", path=str(path))
    frames = []
    for name, raw in entries:
        frame = decode_pgm(raw, name)
        if frames and frame.shape != frames[0].shape:
            raise FrameFormatError(
                f"frame is {frame.shape[0]}x{frame.shape[1]}, expected {frames[0].shape[0]}x{frames[0].shape[1]}",
                path=name,
            )
        frames.append(frame)
    logger.info(f"Read {len(frames)} frames of {frames[0].shape[0]}x{frames[0].shape[1]} from {path}")
    return FrameSequence.from_frames(frames)


def write_frames(seq: FrameSequence, path: PathLike, prefix: str = "frame") -> List[Path]:
    """Write one ``<prefix>_00000.pgm`` file per frame into directory ``path``."""
    out_dir = Path(path)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for j, frame in enumerate(seq.frames()):
        target = out_dir / f"{prefix}_{j:05d}.pgm"
        target.write_bytes(encode_pgm(frame))
        written.append(target)
    logger.info(f"Wrote {len(written)} frames to {out_dir}")
    return written
