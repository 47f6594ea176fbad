"""
Utility functions for image I/O, previews and configuration files
"""

import logging
import math
import os
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import cv2
import numpy as np
from PIL import Image

from config import PREVIEW_SETTINGS, THREADS_ENV_VAR, TWO_PI

logger = logging.getLogger(__name__)


def read_grayscale_image(path: Union[str, Path]) -> Tuple[np.ndarray, int]:
    """
    Read an 8-bit or 16-bit grayscale image.
    Returns the pixel array as float64 and the bit depth.
    """
    with Image.open(path) as image:
        if image.mode == 'L':
            return np.asarray(image, dtype=np.float64), 8
        if image.mode in ('I;16', 'I;16L', 'I;16B', 'I'):
            pixels = np.asarray(image)
            if pixels.max(initial=0) > 65535 or pixels.min(initial=0) < 0:
                raise ValueError(f"{path}: 32-bit integer images are not supported")
            return pixels.astype(np.float64), 16
        raise ValueError(f"{path}: expected an 8-bit or 16-bit grayscale image, got mode {image.mode}")


def grayscale_to_signed(pixels: np.ndarray, bits: int) -> np.ndarray:
    """Map unsigned gray levels [0, 2^bits - 1] onto [-1, 1]"""
    mid = (2 ** bits - 1) / 2.0
    return (pixels - mid) / mid


def read_rgb_image(path: Union[str, Path]) -> np.ndarray:
    """Read an RGB image as float64 channels in [0, 1], shape (H, W, 3)"""
    with Image.open(path) as image:
        if image.mode not in ('RGB', 'RGBA', 'P'):
            raise ValueError(f"{path}: expected an RGB image, got mode {image.mode}")
        return np.asarray(image.convert('RGB'), dtype=np.float64) / 255.0


def angle_to_gray8(angle: np.ndarray) -> np.ndarray:
    """
    Map angles in [-pi, pi) linearly onto 0..255.
    The seam at -pi/pi shows as a 0/255 jump in the preview only.
    """
    levels = PREVIEW_SETTINGS['levels']
    scaled = np.floor((np.asarray(angle) + math.pi) / TWO_PI * levels)
    return np.clip(scaled, 0, levels - 1).astype(np.uint8)


def angle_to_hue_rgb(angle: np.ndarray) -> np.ndarray:
    """Render angles on the hue wheel (red = 0) as an 8-bit RGB image"""
    hue_degrees = np.mod(np.rad2deg(np.asarray(angle, dtype=np.float64)), 360.0).astype(np.float32)
    hsv = np.stack([hue_degrees,
                    np.full_like(hue_degrees, PREVIEW_SETTINGS['hue_saturation']),
                    np.full_like(hue_degrees, PREVIEW_SETTINGS['hue_value'])], axis=-1)
    rgb = cv2.cvtColor(hsv.reshape(-1, 1, 3), cv2.COLOR_HSV2RGB).reshape(hsv.shape)
    return np.clip(np.round(rgb * 255.0), 0, 255).astype(np.uint8)


def preview_plane(angle: np.ndarray) -> np.ndarray:
    """Reduce a 1D/2D/3D label map to a 2D image (middle slice for 3D, one row for 1D)"""
    angle = np.asarray(angle)
    if angle.ndim == 1:
        return angle[None, :]
    if angle.ndim == 3:
        return angle[angle.shape[0] // 2]
    return angle


def save_preview(angle: np.ndarray, path: Union[str, Path], hue_wheel: bool = False) -> Path:
    """Write an 8-bit PNG preview of an angle map"""
    plane = preview_plane(angle)
    pixels = angle_to_hue_rgb(plane) if hue_wheel else angle_to_gray8(plane)
    Image.fromarray(pixels).save(path, 'PNG')
    logger.debug("Wrote preview %s", path)
    return Path(path)


def parse_key_value_text(text: str, source: str = '<string>') -> Dict[str, str]:
    """
    Parse flat key=value lines.
    Blank lines and lines starting with '#' are ignored; keys must be unique.
    """
    settings = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ValueError(f"{source}:{line_number}: expected key=value, got '{line}'")
        key, value = (part.strip() for part in line.split('=', 1))
        if not key:
            raise ValueError(f"{source}:{line_number}: empty key")
        if key in settings:
            raise ValueError(f"{source}:{line_number}: duplicate key '{key}'")
        settings[key] = value
    return settings


def format_key_value_text(settings: Dict) -> str:
    return ''.join(f"{key}={value}\n" for key, value in settings.items())


def thread_count(env: Optional[Dict[str, str]] = None) -> int:
    """Worker thread count from the environment, 1 when unset"""
    env = os.environ if env is None else env
    raw = env.get(THREADS_ENV_VAR, '').strip()
    if not raw:
        return 1
    try:
        threads = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV_VAR} must be an integer, got '{raw}'")
    if threads < 1:
        raise ValueError(f"{THREADS_ENV_VAR} must be at least 1, got {threads}")
    return threads


def configure_threads(env: Optional[Dict[str, str]] = None) -> int:
    """
    Apply the environment's thread count to OpenCV and return it.
    The oracle's exhaustive search reads the same count through thread_count().
    """
    threads = thread_count(env)
    cv2.setNumThreads(threads)
    return threads
