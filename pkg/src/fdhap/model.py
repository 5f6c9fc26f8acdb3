"""System parameters, large-scale path loss and Rayleigh channel generation.

All matrices follow the orientation of the signal model:

* ``g_ap_dl``  (N_r x K_d)  users -> HAP receive array
* ``h_si``     (N_r x N_t)  HAP transmit array -> HAP receive array
* ``g_ap_ul``  (N_t x K_u)  sensors <-> HAP transmit array
* ``g_dl_ul``  (K_d x K_u)  column k holds the users -> sensor k channel
* ``g_ul_dl``  (K_u x K_d)  entry [l, k] is the sensor l -> user k channel

Channel arrays may carry leading batch axes (one per Monte Carlo trial);
every function in the package that consumes a :class:`ChannelRealization`
broadcasts over them.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "SystemParams",
    "PathLossProfile",
    "ChannelRealization",
    "RngStream",
    "DiskModel",
    "draw_channels",
    "sample_path_losses",
    "path_loss",
    "db2lin",
    "lin2db",
    "as_generator",
]

_U64 = 2**64


def db2lin(value_db):
    return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)


def lin2db(value):
    return 10.0 * np.log10(value)


@dataclass(frozen=True)
class SystemParams:
    """Scalar constants of the full-duplex HAP system (all linear units).

    ``k_dl`` and ``k_ul`` may be zero so that single-link special cases can
    be expressed; ``p_ap`` and ``sigma_si2`` may be zero for the same reason.
    """

    n_tx: int = 10
    n_rx: int = 50
    k_dl: int = 5
    k_ul: int = 3
    p_ap: float = 100.0
    p_dl: float = 1.0
    tau: int = 15
    alpha: float = 0.5
    eta: float = 0.5
    sigma_n2: float = 1.0
    sigma_si2: float = 1.0
    r_ul_min: float = 0.0

    def __post_init__(self):
        for name in ("n_tx", "n_rx"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigurationError(f"must be a positive integer, got {value!r}", name)
        for name in ("k_dl", "k_ul", "tau"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise ConfigurationError(f"must be a nonnegative integer, got {value!r}", name)
        if self.tau < self.k_dl:
            raise ConfigurationError(
                f"pilot length {self.tau} shorter than the number of users {self.k_dl}", "tau")
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigurationError(f"time split must satisfy 0 <= alpha < 1, got {self.alpha}", "alpha")
        if not 0.0 < self.eta < 1.0:
            raise ConfigurationError(f"conversion efficiency must lie in (0, 1), got {self.eta}", "eta")
        for name in ("p_dl", "sigma_n2"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigurationError(f"must be a positive finite number, got {value!r}", name)
        for name in ("p_ap", "sigma_si2", "r_ul_min"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise ConfigurationError(f"must be a nonnegative finite number, got {value!r}", name)

    @property
    def kappa(self) -> float:
        return self.eta * self.alpha / (1.0 - self.alpha)

    @property
    def n_total(self) -> int:
        return self.n_tx + self.n_rx

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)


def _frozen_array(values, name, shape):
    arr = np.array(values, dtype=float)
    if arr.size == 0:
        arr = arr.reshape(shape)
    if arr.shape != shape:
        raise ConfigurationError(f"expected shape {shape}, got {arr.shape}", name)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ConfigurationError("path losses must be strictly positive and finite", name)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PathLossProfile:
    """Large-scale gains.

    ``beta_dl_ul[k, m]`` is the loss between user m and sensor k and
    ``beta_ul_dl[k, l]`` the loss between sensor l and user k.
    """

    beta_ap_dl: np.ndarray
    beta_ap_ul: np.ndarray
    beta_dl_ul: np.ndarray
    beta_ul_dl: np.ndarray

    def __post_init__(self):
        k_dl = np.size(self.beta_ap_dl)
        k_ul = np.size(self.beta_ap_ul)
        object.__setattr__(self, "beta_ap_dl", _frozen_array(self.beta_ap_dl, "beta_ap_dl", (k_dl,)))
        object.__setattr__(self, "beta_ap_ul", _frozen_array(self.beta_ap_ul, "beta_ap_ul", (k_ul,)))
        object.__setattr__(self, "beta_dl_ul", _frozen_array(self.beta_dl_ul, "beta_dl_ul", (k_ul, k_dl)))
        object.__setattr__(self, "beta_ul_dl", _frozen_array(self.beta_ul_dl, "beta_ul_dl", (k_dl, k_ul)))

    @property
    def k_dl(self) -> int:
        return self.beta_ap_dl.size

    @property
    def k_ul(self) -> int:
        return self.beta_ap_ul.size

    @classmethod
    def uniform(cls, params: SystemParams, value: float = 1.0) -> "PathLossProfile":
        kd, ku = params.k_dl, params.k_ul
        return cls(np.full(kd, value), np.full(ku, value),
                   np.full((ku, kd), value), np.full((kd, ku), value))

    def check(self, params: SystemParams) -> None:
        if (self.k_dl, self.k_ul) != (params.k_dl, params.k_ul):
            raise ConfigurationError(
                f"path-loss tables sized for K_d={self.k_dl}, K_u={self.k_ul} but "
                f"parameters have K_d={params.k_dl}, K_u={params.k_ul}")

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name).tolist() for f in dataclasses.fields(self)}


@dataclass(frozen=True)
class ChannelRealization:
    """One coherence-interval draw of every channel (optionally batched)."""

    g_ap_dl: np.ndarray
    h_si: np.ndarray
    g_ap_ul: np.ndarray
    g_dl_ul: np.ndarray
    g_ul_dl: np.ndarray

    @property
    def batch_shape(self) -> tuple:
        return self.g_ap_dl.shape[:-2]

    def __getitem__(self, index) -> "ChannelRealization":
        return ChannelRealization(*(getattr(self, f.name)[index] for f in dataclasses.fields(self)))

    @classmethod
    def stack(cls, realizations: Sequence["ChannelRealization"]) -> "ChannelRealization":
        names = [f.name for f in dataclasses.fields(cls)]
        return cls(*(np.stack([getattr(r, n) for r in realizations]) for n in names))


@dataclass(frozen=True)
class RngStream:
    """Named, splittable source of randomness.

    The pair (seed, stream_id) fully determines the generated numbers, so
    trials can run in any order or in parallel and still reproduce.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if int(value) != value or not 0 <= value < _U64:
                raise ConfigurationError(f"must be an unsigned 64-bit integer, got {value!r}", name)

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(seq))


RngLike = Union[RngStream, np.random.Generator, int, None]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if rng is None or isinstance(rng, (int, np.integer)):
        return np.random.default_rng(rng)
    raise TypeError(f"cannot make a random generator from {type(rng).__name__}")


def _cn(gen, shape, variance):
    """Circularly-symmetric complex Gaussian draws with the given variance."""
    scale = np.sqrt(np.asarray(variance, dtype=float) / 2.0)
    return scale * (gen.standard_normal(shape) + 1j * gen.standard_normal(shape))


def draw_channels(params: SystemParams, losses: PathLossProfile, rng: RngLike) -> ChannelRealization:
    """Draw one i.i.d. Rayleigh realization scaled by the square-root path loss."""
    losses.check(params)
    gen = as_generator(rng)
    nt, nr, kd, ku = params.n_tx, params.n_rx, params.k_dl, params.k_ul
    return ChannelRealization(
        g_ap_dl=_cn(gen, (nr, kd), losses.beta_ap_dl[None, :]),
        h_si=_cn(gen, (nr, nt), params.sigma_si2),
        g_ap_ul=_cn(gen, (nt, ku), losses.beta_ap_ul[None, :]),
        g_dl_ul=_cn(gen, (kd, ku), losses.beta_dl_ul.T),
        g_ul_dl=_cn(gen, (ku, kd), losses.beta_ul_dl.T),
    )


def path_loss(distance, exponent, reference_gain=1.0, reference_distance=1.0):
    """Log-distance law ``reference_gain * (d / d0) ** -exponent``."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ConfigurationError("distances must be positive")
    return reference_gain * (d / reference_distance) ** (-float(exponent))


@dataclass(frozen=True)
class DiskModel:
    """Users and sensors dropped uniformly in a disk centred on the HAP."""

    radius: float = 100.0
    exponent: float = 3.0
    reference_gain: float = 1.0
    reference_distance: float = 1.0
    min_distance: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigurationError("radius must be positive", "radius")
        if not self.min_distance > 0:
            raise ConfigurationError("min_distance must be positive", "min_distance")
        if not self.reference_gain > 0:
            raise ConfigurationError("reference_gain must be positive", "reference_gain")


def _drop(gen, count, radius):
    r = radius * np.sqrt(gen.random(count))
    theta = 2 * np.pi * gen.random(count)
    return r * np.cos(theta) + 1j * r * np.sin(theta)


def sample_path_losses(config: Union[PathLossProfile, DiskModel], params: SystemParams,
                       rng: RngLike = None) -> PathLossProfile:
    """Return explicit tables unchanged or drop nodes for a :class:`DiskModel`."""
    if isinstance(config, PathLossProfile):
        config.check(params)
        return config
    if not isinstance(config, DiskModel):
        raise ConfigurationError(f"unsupported path-loss configuration {type(config).__name__}")
    gen = as_generator(rng)
    users = _drop(gen, params.k_dl, config.radius)
    sensors = _drop(gen, params.k_ul, config.radius)

    def gain(d):
        return path_loss(np.maximum(np.abs(d), config.min_distance), config.exponent,
                         config.reference_gain, config.reference_distance)

    between = gain(sensors[:, None] - users[None, :])  # (K_u, K_d)
    return PathLossProfile(gain(users), gain(sensors), between, between.T)
