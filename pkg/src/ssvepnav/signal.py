"""EEG data model, synthetic SSVEP epoch generation and bandpass preprocessing.

An epoch is 9 channels x 1500 samples (3 s at 500 Hz). The synthetic generator
replaces the headset: per class, a harmonic stack at the stimulus frequency is
scaled by an SNR and a per-channel scalp gain, then mixed with unit-power
noise (white + 1/f). Everything is deterministic in (params, class, trial).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import signal as sps

from .errors import DataError, FormatError, ParameterError

SAMPLE_RATE_HZ = 500
EPOCH_DURATION_S = 3.0
EPOCH_SAMPLES = 1500
N_CHANNELS = 9

DATASET_MAGIC = b"SSVEP1"
UNLABELED = 255


class Hemisphere(Enum):
    LEFT = "left"
    RIGHT = "right"
    MIDLINE = "midline"


class ScalpRegion(Enum):
    PARIETAL = "parietal"
    OCCIPITAL = "occipital"
    FRONTAL = "frontal"
    REFERENCE = "reference"


class ChannelId(Enum):
    """The nine streamed sensors, in fixed row order."""

    P7 = (0, Hemisphere.LEFT, ScalpRegion.PARIETAL)
    P3 = (1, Hemisphere.LEFT, ScalpRegion.PARIETAL)
    Pz = (2, Hemisphere.MIDLINE, ScalpRegion.PARIETAL)
    P4 = (3, Hemisphere.RIGHT, ScalpRegion.PARIETAL)
    P8 = (4, Hemisphere.RIGHT, ScalpRegion.PARIETAL)
    O1 = (5, Hemisphere.LEFT, ScalpRegion.OCCIPITAL)
    O2 = (6, Hemisphere.RIGHT, ScalpRegion.OCCIPITAL)
    Fz = (7, Hemisphere.MIDLINE, ScalpRegion.FRONTAL)
    A2ref = (8, Hemisphere.RIGHT, ScalpRegion.REFERENCE)

    @property
    def row(self) -> int:
        return self.value[0]

    @property
    def hemisphere(self) -> Hemisphere:
        return self.value[1]

    @property
    def region(self) -> ScalpRegion:
        return self.value[2]


class StimulusClass(Enum):
    """The three flicker frequencies, with fixed class indices."""

    F10 = (0, 10.0)
    F12 = (1, 12.0)
    F15 = (2, 15.0)

    @property
    def class_index(self) -> int:
        return self.value[0]

    @property
    def freq_hz(self) -> float:
        return self.value[1]

    @classmethod
    def from_index(cls, idx: int) -> "StimulusClass":
        for c in cls:
            if c.class_index == idx:
                return c
        raise ParameterError(f"no stimulus class with index {idx}")

    @classmethod
    def from_freq(cls, freq_hz: float) -> "StimulusClass":
        for c in cls:
            if abs(c.freq_hz - freq_hz) < 1e-9:
                return c
        raise ParameterError(f"no stimulus class at {freq_hz} Hz")


ALL_CLASSES = (StimulusClass.F10, StimulusClass.F12, StimulusClass.F15)

# Scalp topography defaults: occipital strongest, reference nearly silent.
_REGION_GAIN = {
    ScalpRegion.OCCIPITAL: 1.0,
    ScalpRegion.PARIETAL: 0.6,
    ScalpRegion.FRONTAL: 0.2,
    ScalpRegion.REFERENCE: 0.05,
}
DEFAULT_CHANNEL_GAIN = tuple(_REGION_GAIN[ch.region] for ch in ChannelId)
OCCIPITAL_ROWS = tuple(ch.row for ch in ChannelId if ch.region is ScalpRegion.OCCIPITAL)


@dataclass(frozen=True)
class SsvepGenParams:
    snr: float = 1.0
    n_harmonics: int = 3
    harmonic_decay: float = 0.5
    channel_gain: tuple = DEFAULT_CHANNEL_GAIN
    noise_mix: float = 0.7  # fraction of 1/f noise vs white
    rng_seed: int = 0

    def validate(self) -> None:
        if self.snr < 0:
            raise ParameterError(f"snr must be >= 0, got {self.snr}")
        if self.n_harmonics < 1:
            raise ParameterError(f"n_harmonics must be >= 1, got {self.n_harmonics}")
        if not (0 < self.harmonic_decay <= 1):
            raise ParameterError(f"harmonic_decay must be in (0,1], got {self.harmonic_decay}")
        if not (0 <= self.noise_mix <= 1):
            raise ParameterError(f"noise_mix must be in [0,1], got {self.noise_mix}")
        if len(self.channel_gain) != N_CHANNELS:
            raise ParameterError("channel_gain must have 9 entries")


@dataclass
class EegEpoch:
    samples: np.ndarray  # (9, 1500) microvolts
    sample_rate_hz: int = SAMPLE_RATE_HZ
    label: StimulusClass | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.shape != (N_CHANNELS, EPOCH_SAMPLES):
            raise DataError(
                f"epoch must be {N_CHANNELS}x{EPOCH_SAMPLES}, got {self.samples.shape}"
            )
        if not np.all(np.isfinite(self.samples)):
            raise DataError("epoch contains non-finite samples")

    @property
    def duration_s(self) -> float:
        return EPOCH_SAMPLES / self.sample_rate_hz


@dataclass
class SsvepDataset:
    epochs: list
    metadata: dict = field(default_factory=dict)

    def class_counts(self) -> dict:
        counts = {c: 0 for c in ALL_CLASSES}
        for ep in self.epochs:
            if ep.label is not None:
                counts[ep.label] += 1
        return counts


def _epoch_rng(params: SsvepGenParams, cls_index: int, trial_index: int) -> np.random.Generator:
    # Order-independent stream: one child per (class, trial).
    ss = np.random.SeedSequence(entropy=params.rng_seed, spawn_key=(cls_index, trial_index))
    return np.random.default_rng(ss)


def _pink_noise(rng: np.random.Generator, n: int) -> np.ndarray:
    """Unit-RMS 1/f noise via spectral shaping of white noise."""
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / SAMPLE_RATE_HZ)
    shape = np.zeros_like(freqs)
    shape[1:] = 1.0 / np.sqrt(freqs[1:])
    pink = np.fft.irfft(spec * shape, n=n)
    return pink / np.sqrt(np.mean(pink**2))


def generate_epoch(cls: StimulusClass, params: SsvepGenParams, trial_index: int) -> EegEpoch:
    """Synthesize one labeled 9x1500 epoch for the given stimulus class."""
    params.validate()
    rng = _epoch_rng(params, cls.class_index, trial_index)
    t = np.arange(EPOCH_SAMPLES) / SAMPLE_RATE_HZ

    # Harmonic phases are stimulus-locked: constant across trials of a
    # class (epochs are cut from flicker onset), so only the noise varies
    # trial to trial.
    phase_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=params.rng_seed, spawn_key=(cls.class_index,)))
    phases = phase_rng.uniform(0.0, 2.0 * np.pi, params.n_harmonics)
    s = np.zeros(EPOCH_SAMPLES)
    for k in range(1, params.n_harmonics + 1):
        amp = params.harmonic_decay ** (k - 1)
        s += amp * np.sin(2.0 * np.pi * k * cls.freq_hz * t + phases[k - 1])
    s /= np.sqrt(np.mean(s**2))  # unit RMS before snr / gain scaling

    white = rng.standard_normal((N_CHANNELS, EPOCH_SAMPLES))
    pink = np.stack([_pink_noise(rng, EPOCH_SAMPLES) for _ in range(N_CHANNELS)])
    noise = np.sqrt(1.0 - params.noise_mix) * white + np.sqrt(params.noise_mix) * pink
    noise /= np.sqrt(np.mean(noise**2, axis=1, keepdims=True))  # unit power per channel

    gain = np.asarray(params.channel_gain, dtype=np.float64)[:, None]
    samples = params.snr * gain * s[None, :] + noise
    # Quantize to float32 precision so on-disk float32 round trips are exact.
    samples = samples.astype(np.float32).astype(np.float64)
    return EegEpoch(samples=samples, label=cls)


def generate_dataset(params: SsvepGenParams, trials_per_class: int,
                     subject_id: str = "VS01") -> SsvepDataset:
    """Class-interleaved labeled dataset, trials_per_class epochs per class."""
    params.validate()
    if trials_per_class < 1:
        raise ParameterError(f"trials_per_class must be >= 1, got {trials_per_class}")
    epochs = []
    for trial in range(trials_per_class):
        for cls in ALL_CLASSES:
            epochs.append(generate_epoch(cls, params, trial))
    meta = {
        "subject_id": subject_id,
        "trials_per_class": trials_per_class,
        "snr": params.snr,
        "noise_mix": params.noise_mix,
        "rng_seed": params.rng_seed,
    }
    return SsvepDataset(epochs=epochs, metadata=meta)


@dataclass(frozen=True)
class FilterSpec:
    sos: np.ndarray  # second-order sections, (n_sections, 6)
    sample_rate_hz: int
    low_hz: float
    high_hz: float


def design_bandpass(low_hz: float = 9.0, high_hz: float = 100.0,
                    sample_rate_hz: int = SAMPLE_RATE_HZ) -> FilterSpec:
    """4th-order Butterworth bandpass as cascaded biquads (causal)."""
    if not (0 < low_hz < high_hz < sample_rate_hz / 2):
        raise ParameterError(
            f"band edges out of range: {low_hz}-{high_hz} Hz at fs={sample_rate_hz}"
        )
    sos = sps.butter(2, [low_hz, high_hz], btype="bandpass",
                     fs=sample_rate_hz, output="sos")
    return FilterSpec(sos=sos, sample_rate_hz=sample_rate_hz,
                      low_hz=low_hz, high_hz=high_hz)


def apply_filter(spec: FilterSpec, epoch: EegEpoch) -> EegEpoch:
    """Causal (forward-only) per-channel filtering; label preserved."""
    if epoch.sample_rate_hz != spec.sample_rate_hz:
        raise DataError("epoch sample rate does not match filter design")
    filtered = sps.sosfilt(spec.sos, epoch.samples, axis=1)
    return EegEpoch(samples=filtered, sample_rate_hz=epoch.sample_rate_hz,
                    label=epoch.label)


def save_dataset(dataset: SsvepDataset, path) -> None:
    """Write the SSVEP1 binary format (little-endian, float32 channel-major)."""
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<IIII", len(dataset.epochs), N_CHANNELS,
                             EPOCH_SAMPLES, SAMPLE_RATE_HZ))
        for ep in dataset.epochs:
            idx = UNLABELED if ep.label is None else ep.label.class_index
            fh.write(struct.pack("<B", idx))
            fh.write(ep.samples.astype("<f4").tobytes())


def load_dataset(path) -> SsvepDataset:
    """Read an SSVEP1 file; format errors name the byte offset."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:6] != DATASET_MAGIC:
        raise FormatError(f"bad magic {blob[:6]!r} at offset 0")
    if len(blob) < 22:
        raise FormatError(f"truncated header at offset {len(blob)}")
    n_epochs, n_ch, n_samp, fs = struct.unpack_from("<IIII", blob, 6)
    if n_ch != N_CHANNELS:
        raise FormatError(f"header claims {n_ch} channels at offset 10; expected {N_CHANNELS}")
    if n_samp != EPOCH_SAMPLES:
        raise FormatError(f"header claims {n_samp} samples at offset 14; expected {EPOCH_SAMPLES}")
    if fs != SAMPLE_RATE_HZ:
        raise FormatError(f"header claims {fs} Hz at offset 18; expected {SAMPLE_RATE_HZ}")
    off = 22
    frame = n_ch * n_samp * 4
    epochs = []
    for i in range(n_epochs):
        if off + 1 + frame > len(blob):
            raise FormatError(f"truncated payload for epoch {i} at offset {off}")
        (idx,) = struct.unpack_from("<B", blob, off)
        off += 1
        if idx != UNLABELED and idx > 2:
            raise FormatError(f"invalid class index {idx} at offset {off - 1}")
        data = np.frombuffer(blob, dtype="<f4", count=n_ch * n_samp, offset=off)
        off += frame
        label = None if idx == UNLABELED else StimulusClass.from_index(idx)
        epochs.append(EegEpoch(samples=data.reshape(n_ch, n_samp).astype(np.float64),
                               label=label))
    return SsvepDataset(epochs=epochs, metadata={"source_file": str(path)})
