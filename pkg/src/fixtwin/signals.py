"""Input signal library for disturbances ``w`` and known inputs ``d``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class Signal:
    """Scalar signal of time with an optional analytic derivative."""

    def __call__(self, t):
        raise NotImplementedError

    def derivative(self, t):
        """Centered difference fallback; subclasses override with exact forms."""
        t = np.asarray(t, dtype=float)
        h = 1e-6 * np.maximum(1.0, np.abs(t))
        return (self(t + h) - self(t - h)) / (2 * h)

    def describe(self) -> dict:
        return {"kind": type(self).__name__}


@dataclass(frozen=True)
class Constant(Signal):
    value: float = 0.0

    def __call__(self, t):
        return np.full(np.shape(t), float(self.value))

    def derivative(self, t):
        return np.zeros(np.shape(t))

    def describe(self):
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class Sinusoid(Signal):
    amplitude: float = 1.0
    frequency: float = 1.0  # rad/s
    phase: float = 0.0
    offset: float = 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.offset + self.amplitude * np.sin(self.frequency * t + self.phase)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        return self.amplitude * self.frequency * np.cos(self.frequency * t + self.phase)

    def describe(self):
        return {"kind": "sinusoid", "amplitude": self.amplitude, "frequency": self.frequency,
                "phase": self.phase, "offset": self.offset}


@dataclass(frozen=True)
class DampedSinusoid(Signal):
    """``a exp(-b t) sin(c t)``."""

    a: float = 10.0
    b: float = 0.1
    c: float = 1.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.a * np.exp(-self.b * t) * np.sin(self.c * t)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        e = np.exp(-self.b * t)
        return self.a * e * (self.c * np.cos(self.c * t) - self.b * np.sin(self.c * t))

    def describe(self):
        return {"kind": "damped_sinusoid", "a": self.a, "b": self.b, "c": self.c}


@dataclass(frozen=True)
class SumOfSines(Signal):
    """Band-limited ``sum_k a_k sin(f_k t)``; starts at zero."""

    amplitudes: tuple[float, ...]
    frequencies: tuple[float, ...]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        for a, f in zip(self.amplitudes, self.frequencies):
            out = out + a * np.sin(f * t)
        return out

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        for a, f in zip(self.amplitudes, self.frequencies):
            out = out + a * f * np.cos(f * t)
        return out

    def describe(self):
        return {"kind": "sum_of_sines", "amplitudes": list(self.amplitudes),
                "frequencies": list(self.frequencies)}


class Sampled(Signal):
    """Piecewise-linear interpolation of samples (held constant outside)."""

    def __init__(self, times, values):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape or times.size == 0:
            raise ValueError("sampled signal needs matching 1-D time and value arrays")
        if np.any(np.diff(times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("sample values must be finite")
        self.times, self.values = times, values

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    def describe(self):
        return {"kind": "sampled", "n": int(self.times.size)}


def band_limited_family(n: int, seed: int = 0, f_max: float = 2.0, terms: int = 4,
                        amplitude: float = 1.0) -> list[SumOfSines]:
    """Random band-limited disturbances with frequencies in ``(0, f_max]`` rad/s."""
    rng = np.random.default_rng(seed)
    fam = []
    for _ in range(n):
        f = rng.uniform(0.05, f_max, size=terms)
        a = rng.normal(size=terms)
        a = amplitude * a / np.sum(np.abs(a))
        fam.append(SumOfSines(tuple(float(x) for x in a), tuple(float(x) for x in f)))
    return fam


class SignalBank:
    """Vector signal assembled from scalar channels."""

    def __init__(self, channels: Sequence[Signal]):
        self.channels = list(channels)

    def __len__(self):
        return len(self.channels)

    def __call__(self, t) -> np.ndarray:
        if not self.channels:
            return np.zeros(0) if np.ndim(t) == 0 else np.zeros((np.size(t), 0))
        vals = [np.asarray(c(t), dtype=float) for c in self.channels]
        return np.stack(vals, axis=-1)

    @classmethod
    def zeros(cls, n: int) -> "SignalBank":
        return cls([Constant(0.0) for _ in range(n)])

    @classmethod
    def constants(cls, values) -> "SignalBank":
        return cls([Constant(float(v)) for v in values])


def as_bank(x, n: int) -> SignalBank:
    """Coerce ``None``, a constant vector, a callable or a bank into a bank."""
    if x is None:
        return SignalBank.zeros(n)
    if isinstance(x, SignalBank):
        if len(x) != n:
            raise ValueError(f"expected {n} signal channels, got {len(x)}")
        return x
    if isinstance(x, Signal):
        return SignalBank([x])
    if callable(x):
        return _CallableBank(x, n)
    vals = np.atleast_1d(np.asarray(x, dtype=float))
    if vals.size != n:
        raise ValueError(f"expected {n} input values, got {vals.size}")
    return SignalBank.constants(vals)


class _CallableBank(SignalBank):
    def __init__(self, fn, n):
        super().__init__([])
        self.fn, self.n = fn, n

    def __len__(self):
        return self.n

    def __call__(self, t):
        out = np.asarray(self.fn(t), dtype=float)
        if np.ndim(t) == 0:
            return out.reshape(self.n)
        return out.reshape(np.size(t), self.n)
