"""Sparse mmWave angular channel, DFT beam codebook, and beam tracking.

Angles are measured relative to the array boresight (the BS heading). The
codebook is the standard N-beam DFT codebook of a half-wavelength uniform
linear array; beamforming gain is normalized so a single perfectly aligned
path reaches gain N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (DegenerateGeometryError, InsufficientPilotsError,
                     InvalidArgumentError, NotFoundError)
from .twin import GlobalTwin, LocalTwin, predict_state
from .world import FloorPlan, MachineNode, Vec2, line_of_sight, wrap_angle

SCATTER_EXCESS_LOSS_DB = 10.0


@dataclass(frozen=True)
class ChannelState:
    """List of (angle at BS, complex gain); the first path is the LoS when
    present."""
    paths: tuple[tuple[float, complex], ...]


@dataclass(frozen=True)
class UlaCodebook:
    antenna_count: int

    def __post_init__(self):
        if self.antenna_count < 1:
            raise InvalidArgumentError("antenna_count must be >= 1")

    @property
    def beam_angles(self) -> np.ndarray:
        """Steering angles asin(2b/N - 1), b = 0..N-1, sorted ascending."""
        n = self.antenna_count
        return np.arcsin(2.0 * np.arange(n) / n - 1.0)

    def __len__(self) -> int:
        return self.antenna_count


@dataclass(frozen=True)
class LinkMetric:
    beamforming_gain: float
    spectral_efficiency: float


def _af_vec(n: int, sin_path: float, sin_beams: np.ndarray) -> np.ndarray:
    """Normalized complex array factor against many beams at once.

    Closed-form Dirichlet kernel of the half-wavelength ULA: magnitude <= 1
    with equality when the path aligns with the steering direction.
    """
    delta = sin_path - sin_beams
    half = math.pi * delta / 2.0
    den = np.sin(half)
    num = np.sin(n * half)
    with np.errstate(invalid="ignore", divide="ignore"):
        mag = np.where(np.abs(den) < 1e-12, 1.0, num / (n * den))
    return mag * np.exp(1j * (n - 1) * half)


def _array_factor(n: int, sin_path: float, sin_beam: float) -> complex:
    """Normalized complex array factor (magnitude <= 1, = 1 when aligned)."""
    return complex(_af_vec(n, sin_path, np.array([sin_beam]))[0])


def channel_from_geometry(bs: MachineNode, im: MachineNode, plan: FloorPlan,
                          scatterers: list[Vec2] = ()) -> ChannelState:
    """LoS path plus one single-bounce path per visible scatterer.

    LoS amplitude is 1/range; scatterer paths carry the combined path length
    and a 10 dB excess loss. Phases follow the carrier path length at 28 GHz.
    """
    if bs.pose == im.pose:
        raise DegenerateGeometryError("coincident BS and IM")
    wavelength = 299_792_458.0 / 28e9
    paths: list[tuple[float, complex]] = []
    if line_of_sight(plan, bs.pose, im.pose):
        d = (im.pose - bs.pose).norm()
        angle = wrap_angle(math.atan2(im.pose.y - bs.pose.y,
                                      im.pose.x - bs.pose.x) - bs.heading)
        gain = np.exp(-2j * math.pi * d / wavelength) / d
        paths.append((angle, complex(gain)))
    excess = 10.0 ** (-SCATTER_EXCESS_LOSS_DB / 20.0)
    for sc in scatterers:
        if not (line_of_sight(plan, bs.pose, sc) and line_of_sight(plan, sc, im.pose)):
            continue
        d1 = (sc - bs.pose).norm()
        d2 = (im.pose - sc).norm()
        if d1 == 0 or d2 == 0:
            continue
        angle = wrap_angle(math.atan2(sc.y - bs.pose.y, sc.x - bs.pose.x) - bs.heading)
        gain = excess * np.exp(-2j * math.pi * (d1 + d2) / wavelength) / (d1 + d2)
        paths.append((angle, complex(gain)))
    return ChannelState(paths=tuple(paths))


def beam_gain(codebook: UlaCodebook, beam_index: int, channel: ChannelState) -> float:
    """Beamforming gain in [0, N] of one codebook beam against a channel."""
    n = codebook.antenna_count
    if not (0 <= beam_index < n):
        raise InvalidArgumentError(f"beam index {beam_index} out of range")
    if not channel.paths:
        return 0.0
    sin_beam = math.sin(codebook.beam_angles[beam_index])
    acc = 0.0 + 0.0j
    total = 0.0
    for angle, g in channel.paths:
        acc += g * _array_factor(n, math.sin(angle), sin_beam)
        total += abs(g) ** 2
    if total == 0:
        return 0.0
    return float(abs(acc) ** 2 / total * n)


def spectral_efficiency(gain: float, snr0: float) -> float:
    """log2(1 + gain * snr0) bits/s/Hz."""
    if gain < 0 or snr0 < 0:
        raise InvalidArgumentError("gain and snr0 must be >= 0")
    return math.log2(1.0 + gain * snr0)


def all_beam_gains(codebook: UlaCodebook, channel: ChannelState) -> np.ndarray:
    """Beamforming gain of every codebook beam against a channel."""
    n = codebook.antenna_count
    if not channel.paths:
        return np.zeros(n)
    sin_beams = np.sin(codebook.beam_angles)
    acc = np.zeros(n, dtype=complex)
    total = 0.0
    for angle, g in channel.paths:
        acc += g * _af_vec(n, math.sin(angle), sin_beams)
        total += abs(g) ** 2
    if total == 0:
        return np.zeros(n)
    return np.abs(acc) ** 2 / total * n


def best_beam(codebook: UlaCodebook, channel: ChannelState) -> int:
    """Exhaustive-search beam index (lowest index wins ties)."""
    return int(np.argmax(all_beam_gains(codebook, channel)))


def track_feedback(codebook: UlaCodebook, previous_frame_best_beam_report: int) -> int:
    """Feedback baseline: reuse the beam the IM reported best one frame ago."""
    if not (0 <= previous_frame_best_beam_report < len(codebook)):
        raise InvalidArgumentError("reported beam index out of range")
    return previous_frame_best_beam_report


def beam_for_angle(codebook: UlaCodebook, angle: float) -> int:
    """Codebook beam maximizing the array-factor response at an angle."""
    s = math.sin(max(-math.pi / 2, min(math.pi / 2, angle)))
    responses = np.abs(_af_vec(codebook.antenna_count, s,
                               np.sin(codebook.beam_angles)))
    return int(np.argmax(responses))


def track_sensing_assisted(codebook: UlaCodebook, twin: LocalTwin | GlobalTwin,
                           track_id: str, frame_time: float,
                           bs_pose: Vec2 = Vec2(0.0, 0.0),
                           bs_heading: float = 0.0) -> int:
    """Point the beam at the twin-predicted IM position at frame_time."""
    pos, _ = predict_state(twin, track_id, frame_time)
    angle = wrap_angle(math.atan2(pos.y - bs_pose.y, pos.x - bs_pose.x) - bs_heading)
    return beam_for_angle(codebook, angle)


def pilot_response(codebook: UlaCodebook, beam_index: int,
                   channel: ChannelState) -> complex:
    """Complex pilot observation through one beam (the LS forward model)."""
    sin_beam = math.sin(codebook.beam_angles[beam_index])
    acc = 0.0 + 0.0j
    for angle, g in channel.paths:
        acc += g * _array_factor(codebook.antenna_count, math.sin(angle), sin_beam)
    return acc


def estimate_channel_dt_assisted(codebook: UlaCodebook,
                                 pilot_observations: list[tuple[int, complex]],
                                 candidate_angles: list[float]) -> ChannelState:
    """Least-squares path gains on a twin-supplied angular support."""
    if not candidate_angles:
        raise InvalidArgumentError("need at least one candidate angle")
    if len(pilot_observations) < len(candidate_angles):
        raise InsufficientPilotsError(
            f"{len(pilot_observations)} pilots for {len(candidate_angles)} candidates")
    n = codebook.antenna_count
    a = np.array([[_array_factor(n, math.sin(th), math.sin(codebook.beam_angles[b]))
                   for th in candidate_angles]
                  for b, _ in pilot_observations])
    y = np.array([obs for _, obs in pilot_observations])
    gains, *_ = np.linalg.lstsq(a, y, rcond=None)
    return ChannelState(paths=tuple((float(th), complex(g))
                                    for th, g in zip(candidate_angles, gains)))


def estimate_channel_grid_baseline(codebook: UlaCodebook,
                                   pilot_observations: list[tuple[int, complex]],
                                   num_paths: int) -> ChannelState:
    """On-grid baseline: matching pursuit over the N codebook angles with the
    same pilot budget, then least squares on the selected support."""
    if num_paths < 1:
        raise InvalidArgumentError("num_paths must be >= 1")
    if len(pilot_observations) < num_paths:
        raise InsufficientPilotsError("fewer pilots than requested paths")
    n = codebook.antenna_count
    grid_angles = list(codebook.beam_angles)
    dictionary = np.array([[_array_factor(n, math.sin(th),
                                          math.sin(codebook.beam_angles[b]))
                            for th in grid_angles]
                           for b, _ in pilot_observations])
    y = np.array([obs for _, obs in pilot_observations])
    support: list[int] = []
    residual = y.copy()
    for _ in range(num_paths):
        scores = np.abs(dictionary.conj().T @ residual)
        scores[support] = -1.0
        support.append(int(np.argmax(scores)))
        sub = dictionary[:, support]
        gains, *_ = np.linalg.lstsq(sub, y, rcond=None)
        residual = y - sub @ gains
    sub = dictionary[:, support]
    gains, *_ = np.linalg.lstsq(sub, y, rcond=None)
    return ChannelState(paths=tuple((float(grid_angles[i]), complex(g))
                                    for i, g in zip(support, gains)))


def estimation_residual(codebook: UlaCodebook, estimate: ChannelState,
                        pilot_observations: list[tuple[int, complex]]) -> float:
    """Squared pilot-domain residual of a channel estimate."""
    err = 0.0
    for b, obs in pilot_observations:
        err += abs(obs - pilot_response(codebook, b, estimate)) ** 2
    return err
