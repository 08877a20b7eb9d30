"""Independent reference values: closed forms and spectral quadrature.

Nothing here shares stencils with the finite-difference code, so agreement
between the two is a genuine check.
"""
from __future__ import annotations

from typing import Callable

import numpy as np


def free_width(t, width0: float, mass: float = 1.0, lambda_mag: float = 1.0):
    """Position std of a free Gaussian packet, ``sigma0 sqrt(1 + (lambda t / 2 m sigma0^2)^2)``."""
    return width0 * np.sqrt(1.0 + (lambda_mag * np.asarray(t) / (2 * mass * width0**2)) ** 2)


def width_doubling_time(width0: float, mass: float = 1.0, lambda_mag: float = 1.0) -> float:
    return float(np.sqrt(3.0) * 2 * mass * width0**2 / lambda_mag)


def gaussian_bohmian_path(q0, t, center: float = 0.0, width0: float = 1.0, boost: float = 0.0,
                          mass: float = 1.0, lambda_mag: float = 1.0):
    """Guidance-equation path of a free Gaussian packet: the packet's self-similar flow."""
    t = np.asarray(t, dtype=float)
    scale = free_width(t, width0, mass, lambda_mag) / width0
    return center + boost * t / mass + (np.asarray(q0) - center) * scale


def gaussian_bohmian_velocity(q, t: float, center: float = 0.0, width0: float = 1.0, boost: float = 0.0,
                              mass: float = 1.0, lambda_mag: float = 1.0):
    tau = 2 * mass * width0**2 / lambda_mag
    s = free_width(t, width0, mass, lambda_mag)
    sdot = width0 * (t / tau**2) / np.sqrt(1 + (t / tau) ** 2)
    qc = center + boost * t / mass
    return (np.asarray(q) - qc) * sdot / s + boost / mass


def oscillator_moments(n: int, mass: float = 1.0, omega: float = 1.0, lambda_mag: float = 1.0) -> dict:
    """Exact moments of oscillator eigenstate ``n``."""
    level = n + 0.5
    return {
        "mean_q": 0.0,
        "var_q": level * lambda_mag / (mass * omega),
        "mean_p": 0.0,
        "var_p": level * lambda_mag * mass * omega,
        "energy": level * lambda_mag * omega,
        "uncertainty_product": level**2 * lambda_mag**2,
    }


def gaussian_moments(width: float, boost: float = 0.0, lambda_mag: float = 1.0, mass: float = 1.0, center: float = 0.0) -> dict:
    var_p = lambda_mag**2 / (4 * width**2)
    return {
        "mean_q": center,
        "var_q": width**2,
        "mean_p": boost,
        "var_p": var_p,
        "mean_p2": boost**2 + var_p,
        "energy": (boost**2 + var_p) / (2 * mass),
        "uncertainty_product": width**2 * var_p,
    }


def spectral_momentum_moments(psi: Callable[[np.ndarray], np.ndarray], lo: float, hi: float,
                              points: int = 1 << 14, lambda_mag: float = 1.0, t: float = 0.0,
                              mass: float = 1.0) -> dict:
    """Quantum and trajectory-model momentum moments of a 1D state by FFT.

    ``psi`` is sampled on a fine periodic grid (it must be negligible at the
    ends) and, for ``t > 0``, evolved freely and exactly in momentum space.
    Quantum moments come from ``|phi(k)|^2``; the model moments use
    spectrally differentiated ``S`` and ``log rho`` with the two velocity
    branches weighted equally.
    """
    q = lo + (hi - lo) * np.arange(points) / points
    h = (hi - lo) / points
    f = np.asarray(psi(q), dtype=np.complex128)
    f = f / np.sqrt(np.sum(np.abs(f) ** 2) * h)
    k = 2 * np.pi * np.fft.fftfreq(points, d=h)
    if t:
        f = np.fft.ifft(np.fft.fft(f) * np.exp(-0.5j * lambda_mag * k**2 * t / mass))
    weights = np.abs(np.fft.fft(f)) ** 2
    weights = weights / weights.sum()
    pk = lambda_mag * k
    out = {f"quantum_p{m}": float(np.sum(weights * pk**m)) for m in (1, 2, 3)}
    df = np.fft.ifft(1j * k * np.fft.fft(f))
    rho = np.abs(f) ** 2
    keep = rho > 1e-14 * rho.max()
    ratio = np.zeros_like(f)
    ratio[keep] = np.conj(f[keep]) * df[keep] / rho[keep]
    s = lambda_mag * ratio.imag
    u = lambda_mag * ratio.real  # (lambda / 2) d rho / rho
    w = rho * h
    out["model_p1"] = float(np.sum(w * s))
    out["model_p2"] = float(np.sum(w * (s**2 + u**2)))
    out["model_p3"] = float(np.sum(w * (s**3 + 3 * s * u**2)))
    out["model_p6"] = float(np.sum(w * 0.5 * ((s + u) ** 6 + (s - u) ** 6)))
    return out
