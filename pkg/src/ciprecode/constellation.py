"""M-PSK constellation: Gray bit mapping, threshold angle and angular detection.

Points sit at ``exp(2j*pi*m/M)`` for angular index ``m = 0..M-1``. The bit word
carried by index ``m`` is its binary-reflected Gray code ``m ^ (m >> 1)``, so
angular neighbours differ in exactly one bit.
"""

import numpy as np

from .errors import ConfigError


def check_order(M):
    """Return ``M`` as an int, raising ConfigError unless it is a power of two >= 2."""
    try:
        m = int(M)
    except (TypeError, ValueError):
        raise ConfigError(f"modulation order must be an integer, got {M!r}") from None
    if m != M or m < 2 or (m & (m - 1)) != 0:
        raise ConfigError(f"modulation order must be a power of two >= 2, got {M!r}")
    return m


def bits_per_symbol(M):
    return check_order(M).bit_length() - 1


def threshold_angle(M):
    """Half-width of an M-PSK decision sector, ``pi / M`` radians."""
    return np.pi / check_order(M)


def threshold_cot(M):
    """``1 / tan(pi / M)``, exactly zero for BPSK.

    The CI constraints are written as ``Re(lam) - t >= |Im(lam)| * cot`` so that
    BPSK (infinite tangent) needs no special casing.
    """
    m = check_order(M)
    if m == 2:
        return 0.0
    return 1.0 / np.tan(np.pi / m)


def gray_encode(index):
    index = np.asarray(index, dtype=np.int64)
    return index ^ (index >> 1)


def gray_decode(word):
    word = np.asarray(word, dtype=np.int64)
    index = word.copy()
    shift = word >> 1
    while np.any(shift):
        index ^= shift
        shift >>= 1
    return index


def constellation(M):
    """All M points in angular-index order."""
    m = check_order(M)
    return np.exp(2j * np.pi * np.arange(m) / m)


def _check_range(values, M, what):
    values = np.asarray(values)
    if values.size and (np.any(values < 0) or np.any(values >= M)):
        raise ValueError(f"{what} must lie in [0, {M}), got {values}")
    if values.size and not np.issubdtype(values.dtype, np.integer):
        if np.any(values != np.floor(values)):
            raise ValueError(f"{what} must be integers, got {values}")
    return values.astype(np.int64)


def word_to_index(words, M):
    """Angular index that carries each bit word."""
    M = check_order(M)
    return gray_decode(_check_range(words, M, "bit words"))


def index_to_symbol(index, M):
    M = check_order(M)
    index = _check_range(index, M, "constellation indices")
    return np.exp(2j * np.pi * index / M)


def modulate(words, M):
    """Map log2(M)-bit words (given as integers) to unit-modulus PSK symbols.

    Parameters
    ----------
    words : int or array_like of int
        Bit words in ``[0, M)``.
    M : int
        Modulation order.

    Returns
    -------
    numpy.ndarray of complex
        Symbols ``exp(2j*pi*g(word)/M)`` with ``g`` the inverse Gray map, so that
        the word carried by each point is the Gray code of its angular index.
    """
    return index_to_symbol(word_to_index(words, M), M)


def detect(r, M):
    """Minimum-angular-distance PSK detection.

    Returns the angular index of the nearest constellation point for each entry
    of ``r``. Sector boundaries and ``r == 0`` resolve to the smaller index
    (between ``M-1`` and ``0`` that is ``0``).
    """
    M = check_order(M)
    r = np.asarray(r)
    phase = np.mod(np.angle(r), 2 * np.pi)
    x = phase * (M / (2 * np.pi)) - 0.5
    idx = np.ceil(x).astype(np.int64)
    # ceil keeps the lower neighbour on exact ties; x == M - 1 is the 0 / M-1 boundary
    idx = np.where(x == M - 1, 0, idx) % M
    return idx if idx.ndim else int(idx)


def bit_errors(sent_index, detected_index, M):
    """Hamming distance between the Gray words of two angular indices."""
    M = check_order(M)
    a = gray_encode(_check_range(sent_index, M, "sent index"))
    b = gray_encode(_check_range(detected_index, M, "detected index"))
    diff = np.bitwise_xor(a, b)
    counts = np.zeros(diff.shape, dtype=np.int64)
    while np.any(diff):
        counts += diff & 1
        diff = diff >> 1
    return counts if counts.ndim else int(counts)
