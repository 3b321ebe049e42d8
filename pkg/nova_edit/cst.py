"""
Constants used throughout nova-edit.
"""

from __future__ import annotations  # Support of `|` for type union in Python 3.9

from pathlib import Path
from importlib import resources

ref = resources.files("nova_edit") / "data/defaults.ini"
with resources.as_file(ref) as path:
    DEFAULTS_FILE: Path = path

# Container format
NVT_MAGIC: bytes = b"NVT1"
NVT_SUFFIX: str = ".nvt"
FRAME_EXTENSIONS: list[str] = ["png"]
FRAME_NAME_DIGITS: int = 5

# Counter-based randomness
SEED_MASK: int = (1 << 64) - 1

# Source fidelity pipeline
MASK_SHAPES: list[str] = ["rectangle", "ellipse", "polygon"]
MAX_MASK_ATTEMPTS: int = 16
SPEED_REFERENCE_WIDTH: int = 64  # speeds are given in px/frame at this width

# Anchored control pipeline
DEGRADATION_OPERATORS: list[str] = ["zoom_stretch", "blur_blob"]
BLOB_SOFT_EDGE: float = 2.0  # pixels

# Denoiser
POSITION_SCALE: float = 0.5
COSINE_SCHEDULE_OFFSET: float = 0.008
MAX_BETA: float = 0.999
PARAM_GROUPS: list[str] = ["codec", "time", "main", "sparse", "dense", "cross", "head"]
TWO_PHASE_FIRST: list[str] = ["time", "main", "sparse", "head"]
TWO_PHASE_SECOND: list[str] = ["cross"]
LOSS_SMOOTHING: int = 100

# Metrics
SSIM_WINDOW: int = 11
SSIM_SIGMA: float = 1.5
SSIM_K1: float = 0.01
SSIM_K2: float = 0.03
EMBED_GRID: int = 8
PSNR_CAP: float = 100.0  # dB, reported for identical frames

# Editors
RECOLOR_MIN_SATURATION: float = 0.35
RECOLOR_MIN_VALUE: float = 0.25
SPRITE_RADIUS: float = 0.2  # fraction of min(H, W)

# Ablation
INTERVAL_BAND: float = 0.05
DENSE_MARGIN_DB: float = 1.0
DENSE_WIN_FRACTION: float = 0.8  # seeds on which the full model must win
ABLATION_JITTER: float = 10.0  # degrees, when infer.jitter is 0
SUGGESTED_SEGMENTS: tuple[int, int] = (4, 10)

# Exit codes
EXIT_CONFIG: int = 2
EXIT_DATA: int = 3
EXIT_NUMERIC: int = 4
