"""Rayleigh channel and AWGN generation, plus a plain-text channel dump format.

Every generator takes an explicit ``numpy.random.Generator`` (or anything
``numpy.random.default_rng`` accepts). Channel and noise draws use a trailing
real/imag axis, so the first ``K`` rows of a draw do not depend on how many
users were requested. Sweeps over ``K`` therefore reuse the same users.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import ChannelFileError


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class NoiseSpec:
    """Noise variance with the matching transmit SNR ``rho = 1 / sigma2`` (p0 = 1)."""

    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError(f"noise variance must be positive, got {self.sigma2}")

    @property
    def rho(self):
        return 1.0 / self.sigma2

    @classmethod
    def from_snr_db(cls, snr_db):
        return cls(10.0 ** (-snr_db / 10.0))


def sample_channel(K, Nt, seed=None):
    """K x Nt matrix of i.i.d. CN(0, 1) entries; row k is user k's channel."""
    if K < 1 or Nt < 1:
        raise ValueError(f"channel dimensions must be >= 1, got K={K}, Nt={Nt}")
    z = _rng(seed).standard_normal((K, Nt, 2))
    return (z[..., 0] + 1j * z[..., 1]) * math.sqrt(0.5)


def complex_normal(n, sigma2, seed=None):
    z = _rng(seed).standard_normal((n, 2))
    return (z[:, 0] + 1j * z[:, 1]) * math.sqrt(sigma2 / 2)


def add_noise(x, spec, seed=None):
    """Return ``x + n`` with n i.i.d. CN(0, sigma2)."""
    sigma2 = spec.sigma2 if isinstance(spec, NoiseSpec) else float(spec)
    if not sigma2 > 0:
        raise ValueError(f"noise variance must be positive, got {sigma2}")
    x = np.asarray(x, dtype=complex)
    return x + complex_normal(x.size, sigma2, seed).reshape(x.shape)


def format_channel(H):
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    lines = [f"# {H.shape[0]} {H.shape[1]}"]
    for row in H:
        lines.append(" ".join(f"{float(v.real)!r}:{float(v.imag)!r}" for v in row))
    return "\n".join(lines) + "\n"


def parse_channel(text):
    """Parse the channel dump format; raises ChannelFileError with a location."""
    lines = [(n, ln.strip()) for n, ln in enumerate(text.splitlines(), 1)]
    lines = [(n, ln) for n, ln in lines if ln]
    if not lines:
        raise ChannelFileError("empty channel file")
    n0, header = lines[0]
    parts = header.lstrip("#").split()
    if not header.startswith("#") or len(parts) != 2:
        raise ChannelFileError("expected header '# K Nt'", line=n0)
    try:
        K, Nt = int(parts[0]), int(parts[1])
    except ValueError:
        raise ChannelFileError(f"non-integer dimensions in header {header!r}", line=n0) from None
    if K < 1 or Nt < 1:
        raise ChannelFileError(f"dimensions must be >= 1, got K={K}, Nt={Nt}", line=n0)
    rows = lines[1:]
    if len(rows) != K:
        where = rows[-1][0] if rows else n0
        raise ChannelFileError(f"expected {K} user rows, found {len(rows)}", line=where)
    H = np.empty((K, Nt), dtype=complex)
    for k, (n, ln) in enumerate(rows):
        fields = ln.split()
        if len(fields) != Nt:
            raise ChannelFileError(f"expected {Nt} columns, found {len(fields)}", line=n)
        for i, field in enumerate(fields, 1):
            re, sep, im = field.partition(":")
            if not sep:
                raise ChannelFileError(f"expected 're:im', got {field!r}", line=n, field=i)
            try:
                H[k, i - 1] = complex(float(re), float(im))
            except ValueError:
                raise ChannelFileError(f"bad number in {field!r}", line=n, field=i) from None
    return H


def save_channel(H, path):
    with open(path, "w") as fh:
        fh.write(format_channel(H))


def load_channel(path):
    with open(path) as fh:
        return parse_channel(fh.read())
