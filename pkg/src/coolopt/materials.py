"""Effective material properties of the two-layer thermofluid model.

Every design-dependent property is a RAMP interpolant between its solid
(gamma = 0) and fluid (gamma = 1) endpoint.  All functions accept scalars or
numpy arrays and return ``(value, d value / d gamma)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

# Profile-shape coefficients of the depth-averaged upper layer.
C_MOM = 6.0 / 7.0
C_ADV = 2.0 / 3.0
C_COND = 49.0 / 52.0

# Fully developed laminar flow between parallel plates, uniform wall flux.
NUSSELT_PARALLEL_PLATES = 8.235


@dataclass(frozen=True)
class TwoLayerConstants:
    c_mom: float = C_MOM
    c_adv: float = C_ADV
    c_cond: float = C_COND


@dataclass
class PhysicalProperties:
    """Water / silicon properties (SI units)."""

    rho: float = 1000.0
    mu: float = 1.0e-3
    cp: float = 4180.0
    k_f: float = 0.598
    k_s: float = 149.0
    k_b: float = 149.0
    cp_s: float = 942.0
    H_b: float = 0.5e-3
    q0: float = 1.0e5

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"physical property {f.name} must be > 0")


@dataclass
class RampParameters:
    alpha_f: float
    alpha_s: float
    q_f: float = 10.0
    q_k: float = 1.0
    h_f: float = 12311.0
    h_s: float = 1.49e6
    Ht_f: float = 1.0e-4
    Ht_s: float = 1.0e-4
    q_h: float = 1.0
    q_H: float = 1.0
    k_f: float = 0.598
    k_s: float = 149.0

    def __post_init__(self):
        if not (self.alpha_f >= 0 and self.alpha_s > self.alpha_f):
            raise ValueError("need alpha_s > alpha_f >= 0")
        for name in ("q_f", "q_k", "q_h", "q_H", "Ht_f", "Ht_s", "h_f", "h_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    @classmethod
    def defaults(cls, props: PhysicalProperties, Lx: float, channel_half_height: float = 1.0e-4,
                 darcy: float = 1e-9, **overrides) -> "RampParameters":
        """Defaults derived from the physical properties and domain length.

        ``alpha_s = mu / (Da Lx^2)``.  The fluid resistance is the depth-averaged
        wall friction of a parallel-plate channel, ``3 mu / Ht^2``; without it
        the inertia-dominated open cavity has no robust steady solution at the
        default pressure drop.  The fluid interfacial coefficient comes
        from the parallel-plate Nusselt number at hydraulic diameter
        ``4 * channel_half_height``; the solid one is a conduction resistance
        across the upper-layer half thickness.
        """
        values = dict(
            alpha_f=3.0 * props.mu / channel_half_height**2,
            alpha_s=props.mu / (darcy * Lx**2),
            h_f=NUSSELT_PARALLEL_PLATES * props.k_f / (4.0 * channel_half_height),
            h_s=props.k_s / channel_half_height,
            Ht_f=channel_half_height,
            Ht_s=channel_half_height,
            k_f=props.k_f,
            k_s=props.k_s,
        )
        values.update(overrides)
        return cls(**values)


def ramp(gamma, fluid_value, solid_value, q):
    """RAMP interpolant ``v_f + (v_s - v_f) (1 - g) / (1 + q g)`` and its slope."""
    gamma = np.asarray(gamma, dtype=float)
    denom = 1.0 + q * gamma
    value = fluid_value + (solid_value - fluid_value) * (1.0 - gamma) / denom
    slope = -(solid_value - fluid_value) * (1.0 + q) / denom**2
    return value, slope


def alpha_of(gamma, p: RampParameters):
    return ramp(gamma, p.alpha_f, p.alpha_s, p.q_f)


def kt_of(gamma, p: RampParameters):
    return ramp(gamma, p.k_f, p.k_s, p.q_k)


def h_of(gamma, p: RampParameters):
    return ramp(gamma, p.h_f, p.h_s, p.q_h)


def Ht_of(gamma, p: RampParameters):
    return ramp(gamma, p.Ht_f, p.Ht_s, p.q_H)


@dataclass
class MaterialFields:
    """Interpolated properties and gamma-derivatives at quadrature points."""

    gamma: np.ndarray
    alpha: np.ndarray
    dalpha: np.ndarray
    kt: np.ndarray
    dkt: np.ndarray
    h: np.ndarray
    dh: np.ndarray
    Ht: np.ndarray
    dHt: np.ndarray
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_gamma(cls, gamma, p: RampParameters) -> "MaterialFields":
        gamma = np.asarray(gamma, dtype=float)
        alpha, dalpha = alpha_of(gamma, p)
        kt, dkt = kt_of(gamma, p)
        h, dh = h_of(gamma, p)
        Ht, dHt = Ht_of(gamma, p)
        return cls(gamma, alpha, dalpha, kt, dkt, h, dh, Ht, dHt)
