"""Geometry, constants, and the spherical-wave channel of a pinched waveguide.

A pinching antenna radiates the guided signal at a chosen point on a
dielectric waveguide.  The received amplitude from one antenna combines the
free-space spherical-wave term with the phase accumulated inside the guide
between the feed point and the activation point.  Everything downstream
(codebooks, training, NOMA, multi-waveguide models) is built on the helpers
in this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import GeometryError, InvalidParameterError, SingularityError

SPEED_OF_LIGHT = 299792458.0  # m/s, exact
TWO_PI = 2.0 * math.pi

_COLLINEAR_TOL = 1e-9  # m


class Point3(NamedTuple):
    """Cartesian point in meters.  Users live at z = 0, antennas at z = d."""

    x: float
    y: float
    z: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)

    def distance_to(self, other: "Point3") -> float:
        return math.dist(self, other)


@dataclass(frozen=True)
class SystemParams:
    """Carrier-derived constants plus the power/noise operating point.

    Attributes:
        carrier_frequency: f_c in Hz.
        speed_of_light: c in m/s.
        wavelength: free-space wavelength c / f_c in m.
        refractive_index: effective index of the guide (>= 1).
        guide_wavelength: wavelength inside the waveguide, lambda / n_eff.
        attenuation: free-space attenuation constant c^2 / (16 pi^2 f_c^2), m^2.
        waveguide_height: default antenna height d in m.
        total_power: total transmit power P in W.
        noise_power: receiver noise power sigma^2 in W.
    """

    carrier_frequency: float
    speed_of_light: float
    wavelength: float
    refractive_index: float
    guide_wavelength: float
    attenuation: float
    waveguide_height: float
    total_power: float
    noise_power: float


def derive_params(
    carrier_frequency: float,
    refractive_index: float = 1.4,
    waveguide_height: float = 3.0,
    total_power: float = 1.0,
    noise_power: float = 1e-12,
) -> SystemParams:
    """Derive wavelengths and the attenuation constant from the carrier.

    Args:
        carrier_frequency: f_c in Hz, > 0.
        refractive_index: n_eff >= 1.
        waveguide_height: antenna height d in m, > 0.
        total_power: P in W, > 0.
        noise_power: sigma^2 in W, > 0.

    Returns:
        A fully populated SystemParams.

    Raises:
        InvalidParameterError: on non-positive frequency, power, noise or
            height, or a refractive index below 1.
    """
    if not carrier_frequency > 0.0:
        raise InvalidParameterError(f"carrier frequency must be > 0, got {carrier_frequency}")
    if not refractive_index >= 1.0:
        raise InvalidParameterError(f"refractive index must be >= 1, got {refractive_index}")
    if not waveguide_height > 0.0:
        raise InvalidParameterError(f"waveguide height must be > 0, got {waveguide_height}")
    if not total_power > 0.0:
        raise InvalidParameterError(f"total power must be > 0, got {total_power}")
    if not noise_power > 0.0:
        raise InvalidParameterError(f"noise power must be > 0, got {noise_power}")

    wavelength = SPEED_OF_LIGHT / carrier_frequency
    return SystemParams(
        carrier_frequency=carrier_frequency,
        speed_of_light=SPEED_OF_LIGHT,
        wavelength=wavelength,
        refractive_index=refractive_index,
        guide_wavelength=wavelength / refractive_index,
        attenuation=SPEED_OF_LIGHT**2 / (16.0 * math.pi**2 * carrier_frequency**2),
        waveguide_height=waveguide_height,
        total_power=total_power,
        noise_power=noise_power,
    )


@dataclass(frozen=True)
class Waveguide:
    """A dielectric waveguide parallel to the x-axis at height `height`.

    The feed point sits on the line at x = feed_x; antennas may be activated
    anywhere in [x_start, x_end].  In-guide phase is measured from the feed.
    """

    index: int
    y: float
    height: float
    feed_x: float
    x_start: float
    x_end: float

    def __post_init__(self):
        if not self.x_start < self.x_end:
            raise InvalidParameterError(
                f"waveguide {self.index}: x_start {self.x_start} must be < x_end {self.x_end}"
            )
        if not self.x_start <= self.feed_x <= self.x_end:
            raise InvalidParameterError(
                f"waveguide {self.index}: feed_x {self.feed_x} outside "
                f"[{self.x_start}, {self.x_end}]"
            )

    @property
    def feed_point(self) -> Point3:
        return Point3(self.feed_x, self.y, self.height)

    def antenna_point(self, x: float) -> Point3:
        return Point3(x, self.y, self.height)


def in_waveguide_phase(feed: Point3, antenna: Point3, params: SystemParams) -> float:
    """Phase accumulated between the feed and an activation point on the guide.

    Both points must lie on the same waveguide line (equal y and z).

    Returns:
        (2 pi / lambda_g) * |feed - antenna|, in radians (>= 0).

    Raises:
        GeometryError: if the points are not collinear with a waveguide.
    """
    if abs(feed.y - antenna.y) > _COLLINEAR_TOL or abs(feed.z - antenna.z) > _COLLINEAR_TOL:
        raise GeometryError(
            f"feed {tuple(feed)} and antenna {tuple(antenna)} are not on the same waveguide line"
        )
    return TWO_PI / params.guide_wavelength * feed.distance_to(antenna)


def channel_coefficient(
    user: Point3, antenna: Point3, feed: Point3, params: SystemParams
) -> complex:
    """Complex channel between one activated antenna and a user.

    Magnitude is sqrt(eta) / |user - antenna|; the phase subtracts both the
    free-space term (2 pi / lambda) |user - antenna| and the in-guide term
    (2 pi / lambda_g) |feed - antenna|.

    Raises:
        SingularityError: if user and antenna coincide.
    """
    dist = user.distance_to(antenna)
    if dist <= 0.0:
        raise SingularityError(f"user and antenna coincide at {tuple(user)}")
    theta = TWO_PI / params.guide_wavelength * feed.distance_to(antenna)
    phase = TWO_PI / params.wavelength * dist + theta
    return math.sqrt(params.attenuation) * np.exp(-1j * phase) / dist


def coherent_sum(
    antenna_x,
    waveguide: Waveguide,
    user_x: float,
    user_y: float,
    params: SystemParams,
):
    """Sum of per-antenna channel coefficients along the last axis.

    Args:
        antenna_x: array of antenna x-positions, shape (..., N).
        waveguide: geometry supplying y, height and feed_x.
        user_x, user_y: user location on the ground plane.
        params: system constants.

    Returns:
        Complex array of shape (...,): sum_n sqrt(eta) e^{-j phi_n} / r_n.
    """
    xs = np.asarray(antenna_x, dtype=float)
    dx = xs - user_x
    dy = waveguide.y - user_y
    dist = np.sqrt(dx * dx + dy * dy + waveguide.height**2)
    phase = (
        TWO_PI / params.wavelength * dist
        + TWO_PI / params.guide_wavelength * np.abs(xs - waveguide.feed_x)
    )
    terms = math.sqrt(params.attenuation) * np.exp(-1j * phase) / dist
    return terms.sum(axis=-1)


def received_signal_swsu(
    user: Point3,
    antenna_x,
    waveguide: Waveguide,
    params: SystemParams,
    rng: np.random.Generator | None = None,
):
    """Noiseless (or optionally noisy) received amplitude for one codeword.

    The total power is split evenly over the activated antennas, so each
    carries amplitude sqrt(P / N).  With `rng` given, a complex Gaussian
    sample of variance sigma^2 is added to the measurement.

    Args:
        user: receiver location.
        antenna_x: activated positions, shape (..., N).
        waveguide: host waveguide.
        params: system constants.
        rng: optional noise source.

    Returns:
        Complex received amplitude(s) of shape (...,).

    Raises:
        InvalidParameterError: on an empty codeword.
    """
    xs = np.asarray(antenna_x, dtype=float)
    if xs.shape[-1] == 0:
        raise InvalidParameterError("codeword must contain at least one antenna")
    n_active = xs.shape[-1]
    signal = math.sqrt(params.total_power / n_active) * coherent_sum(
        xs, waveguide, user.x, user.y, params
    )
    if rng is not None:
        scale = math.sqrt(params.noise_power / 2.0)
        noise = rng.normal(0.0, scale, np.shape(signal)) + 1j * rng.normal(
            0.0, scale, np.shape(signal)
        )
        signal = signal + noise
    return signal


def rate_from_signal(signal_power: float, interference_power: float, noise_power: float) -> float:
    """Shannon rate log2(1 + S / (I + sigma^2)) in bits/s/Hz."""
    if signal_power < 0.0 or interference_power < 0.0:
        raise InvalidParameterError("signal and interference powers must be >= 0")
    if not noise_power > 0.0:
        raise InvalidParameterError("noise power must be > 0")
    return math.log2(1.0 + signal_power / (interference_power + noise_power))
