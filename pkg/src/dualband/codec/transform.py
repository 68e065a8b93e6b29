"""Fixed 8x8 orthonormal DCT-II applied per channel."""
from __future__ import annotations

import math

import numpy as np

BLOCK = 8


def dct_matrix(n: int = BLOCK) -> np.ndarray:
    """Orthonormal DCT-II basis, rows are frequencies."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    mat = np.cos(math.pi * (2 * i + 1) * k / (2 * n))
    mat[0, :] *= math.sqrt(1.0 / n)
    mat[1:, :] *= math.sqrt(2.0 / n)
    return mat


_D = dct_matrix()


def padded_shape(height: int, width: int) -> tuple[int, int]:
    return (-(-height // BLOCK) * BLOCK, -(-width // BLOCK) * BLOCK)


def latent_length(height: int, width: int, channels: int) -> int:
    ph, pw = padded_shape(height, width)
    return ph * pw * channels


def forward(image: np.ndarray) -> np.ndarray:
    """Map an ``(H, W, C)`` image to a flat coefficient vector.

    Dimensions that are not multiples of 8 are padded by mirror reflection.
    Coefficients are ordered channel, block row, block column, then the 64
    coefficients of each block in row-major order.
    """
    img = np.asarray(image, dtype=float)
    h, w, c = img.shape
    ph, pw = padded_shape(h, w)
    if (ph, pw) != (h, w):
        img = np.pad(img, ((0, ph - h), (0, pw - w), (0, 0)), mode="symmetric")
    # (C, bh, 8, bw, 8) -> (C, bh, bw, 8, 8)
    blocks = img.transpose(2, 0, 1).reshape(c, ph // BLOCK, BLOCK, pw // BLOCK, BLOCK)
    blocks = blocks.transpose(0, 1, 3, 2, 4)
    coeffs = np.einsum("ij,cabjk,lk->cabil", _D, blocks, _D, optimize=True)
    return coeffs.reshape(-1)


def inverse(coeffs: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    """Inverse of :func:`forward`; crops the reflection padding."""
    h, w, c = shape
    ph, pw = padded_shape(h, w)
    blocks = np.asarray(coeffs, dtype=float).reshape(c, ph // BLOCK, pw // BLOCK, BLOCK, BLOCK)
    pixels = np.einsum("ji,cabjk,kl->cabil", _D, blocks, _D, optimize=True)
    img = pixels.transpose(0, 1, 3, 2, 4).reshape(c, ph, pw).transpose(1, 2, 0)
    return img[:h, :w, :]
