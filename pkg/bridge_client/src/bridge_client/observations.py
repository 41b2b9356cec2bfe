"""Reading the exported observations a request points at.

An observation is three sibling files sharing a stem: ``{stem}.depth.png``
(16-bit grayscale, samples 0..65534 spanning [depth_min, depth_max], the
sentinel 65535 meaning background), ``{stem}.mask.png`` (16-bit grayscale,
nonzero means masked), and ``{stem}.meta.json`` (camera, sizes, offsets,
quantization range). Requests reference them as ``{"dir", "stem"}``;
peers on another machine get the same bytes inlined base-64 under
``"blobs"``, keyed by file name.
"""

from __future__ import annotations

import base64
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

SCHEMA = "artisim-observation/v1"

_REQUIRED_META = ("schema", "camera", "offset_u", "offset_v",
                  "depth_background", "files")


@dataclass(frozen=True)
class Frame:
    """One exported observation, parsed."""

    depth: np.ndarray  # uint16 samples; meta["depth_background"] = no hit
    mask: np.ndarray  # bool
    meta: dict

    @property
    def background(self) -> int:
        return int(self.meta["depth_background"])

    def to_exported(self, pixel) -> tuple:
        """Map a native-frame pixel into this image's coordinates."""
        return (int(pixel[0]) + int(self.meta["offset_u"]),
                int(pixel[1]) + int(self.meta["offset_v"]))


def _png16(data: bytes) -> np.ndarray:
    return np.asarray(Image.open(io.BytesIO(data))).astype(np.uint16)


def _file_bytes(ref: dict, name: str) -> bytes:
    blobs = ref.get("blobs")
    if blobs is not None:
        if name not in blobs:
            raise ValueError(f"inlined observation lacks {name!r}")
        return base64.b64decode(blobs[name])
    return (Path(ref["dir"]) / name).read_bytes()


def load_frame(ref: dict) -> Frame:
    """Parse the observation a request references; raises ValueError on a
    missing or malformed reference."""
    if not isinstance(ref, dict) or "stem" not in ref:
        raise ValueError(f"not an observation reference: {ref!r}")
    stem = ref["stem"]
    meta = json.loads(_file_bytes(ref, f"{stem}.meta.json").decode("utf-8"))
    for key in _REQUIRED_META:
        if key not in meta:
            raise ValueError(f"observation metadata lacks {key!r}")
    if meta["schema"] != SCHEMA:
        raise ValueError(f"unsupported observation schema {meta['schema']!r}")
    depth = _png16(_file_bytes(ref, meta["files"]["depth"]))
    mask = _png16(_file_bytes(ref, meta["files"]["mask"])) > 0
    if depth.shape != mask.shape:
        raise ValueError(
            f"depth {depth.shape} and mask {mask.shape} disagree")
    return Frame(depth=depth, mask=mask, meta=meta)
