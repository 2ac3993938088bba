"""Independent reference computations shared by the tests."""

import math

import numpy as np

C = 299_792_458.0


def detected_harmonics(envelope, f_rep, wavelength, length_m, d_si, k_values):
    """Field-level propagation + square-law detection, harmonic magnitudes.

    Each line gets the quadratic spectral phase 0.5 * beta2 * w**2 * L with
    beta2 = -D lambda**2 / (2 pi c); the photocurrent over one repetition
    period is Fourier-analysed and each harmonic is normalized by its
    undispersed value.
    """
    w = np.asarray(envelope, dtype=float)
    n = w.size
    m = 1 << max(3, int(math.ceil(math.log2(4 * n))))
    t = np.arange(m) / (m * f_rep)
    omega = 2 * np.pi * (np.arange(n) - (n - 1) / 2) * f_rep
    beta2 = -d_si * wavelength**2 / (2 * np.pi * C)

    def current(L):
        phase = 0.5 * beta2 * omega**2 * L
        field = (w * np.exp(1j * phase)) @ np.exp(1j * np.outer(omega, t))
        return np.abs(field) ** 2

    ref = np.fft.fft(current(0.0)) / m
    got = np.fft.fft(current(length_m)) / m
    floor = 1e-12 * abs(ref[0])  # harmonics with no contributing line pairs
    out = []
    for k in k_values:
        r = abs(ref[k])
        out.append(abs(got[k]) / r if r > floor else 0.0)
    return np.array(out)
