"""Binary PGM (P5) reader and writer, 8- and 16-bit."""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from ..errors import ParseError

_WS = b" \t\r\n\v\f"


def _header_tokens(data: bytes, count: int, start: int = 0):
    """Yield ``count`` whitespace-separated header tokens, skipping comments.

    Returns (tokens, offset of the byte following the last token).
    """
    tokens = []
    i = start
    n = len(data)
    while len(tokens) < count:
        while i < n and (data[i] in _WS or data[i] == ord("#")):
            if data[i] == ord("#"):
                while i < n and data[i] not in b"\r\n":
                    i += 1
            else:
                i += 1
        if i >= n:
            raise ParseError("unexpected end of header", i)
        start = i
        while i < n and data[i] not in _WS and data[i] != ord("#"):
            i += 1
        tokens.append((data[start:i], start))
    return tokens, i


def decode_pgm(data: bytes) -> tuple[np.ndarray, int]:
    """Decode P5 bytes into (raw integer samples of shape (H, W), maxval)."""
    if data[:2] != b"P5":
        raise ParseError(f"expected magic b'P5', got {data[:2]!r}", 0)
    (w_tok, h_tok, m_tok), end = _header_tokens(data, 3, start=2)
    fields = []
    for tok, off in (w_tok, h_tok, m_tok):
        if not tok.isdigit():
            raise ParseError(f"expected a decimal integer in header, got {tok!r}", off)
        fields.append((int(tok), off))
    (width, w_off), (height, h_off), (maxval, m_off) = fields
    if width < 1:
        raise ParseError("width must be positive", w_off)
    if height < 1:
        raise ParseError("height must be positive", h_off)
    if not 0 < maxval < 65536:
        raise ParseError(f"maxval {maxval} outside 1..65535", m_off)
    start = end
    if start >= len(data) or data[start] not in _WS:
        raise ParseError("expected a single whitespace byte after maxval", start)
    start += 1
    depth = 1 if maxval < 256 else 2
    need = width * height * depth
    if len(data) - start < need:
        raise ParseError(f"truncated payload: need {need} bytes, have {len(data) - start}", len(data))
    dtype = np.uint8 if depth == 1 else np.dtype(">u2")
    raw = np.frombuffer(data, dtype=dtype, count=width * height, offset=start).reshape(height, width)
    if raw.max(initial=0) > maxval:
        bad = int(np.argmax(raw.ravel() > maxval))
        raise ParseError(f"sample exceeds maxval {maxval}", start + bad * depth)
    return raw, maxval


def load_image(path) -> np.ndarray:
    """Read a P5 file into float64 pixels in [0, 1] (sample / maxval)."""
    raw, maxval = decode_pgm(Path(path).read_bytes())
    return raw.astype(np.float64) / maxval


def encode_pgm(pixels, maxval: int = 255) -> bytes:
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim != 2:
        raise ValueError(f"PGM images are 2-D, got shape {pixels.shape}")
    if not 0 < maxval < 65536:
        raise ValueError(f"maxval {maxval} outside 1..65535")
    q = np.rint(np.clip(pixels, 0.0, 1.0) * maxval)
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    h, w = pixels.shape
    return f"P5\n{w} {h}\n{maxval}\n".encode("ascii") + q.astype(dtype).tobytes()


def write_image(path, pixels, maxval: int = 255):
    """Quantize [0, 1] pixels to ``round(p * maxval)`` and write atomically."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_pgm(pixels, maxval))
    os.replace(tmp, path)
