"""Pointwise two-variable membrane kinetics.

Three classical reduced ionic models share one parameter set
(a, b, kappa, eps):

* ``fhn``  FitzHugh-Nagumo:    i_ion = phi^3 - (a+1) phi^2 + a phi + w
* ``rm``   Rogers-McCulloch:   i_ion = b phi^3 - (a+1) b phi^2 + a b phi + phi w
* ``ap``   Aliev-Panfilov:     same cubic as rm, different recovery source

The recovery variable obeys dw/dt = -g(phi, w) with

* fhn, rm: g = eps w - eps kappa phi
* ap:      g = eps w - eps kappa ((a+1) phi - phi^2)

so w relaxes toward a phi-dependent equilibrium s(phi) at rate eps.
Because the relaxation is linear in w, a time step has the closed form

    w(t+dt) = e^{-eps dt} w(t) + (1 - e^{-eps dt}) s(phi_bar)

which ``gating_exact_update`` implements with phi_bar the average of
the step's endpoint potentials.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("fhn", "rm", "ap")

_ALIASES = {
    "fitzhugh_nagumo": "fhn",
    "fitzhugh-nagumo": "fhn",
    "rogers_mcculloch": "rm",
    "rogers-mcculloch": "rm",
    "aliev_panfilov": "ap",
    "aliev-panfilov": "ap",
}


@dataclass(frozen=True)
class IonicParams:
    kind: str
    a: float = 0.13
    b: float = 1.0
    kappa: float = 4.0
    eps: float = 0.01

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise ValueError(f"unknown ionic model {self.kind!r}")
        if not 0.0 < self.a < 1.0:
            raise ValueError(f"need 0 < a < 1, got a={self.a}")
        if self.b <= 0 or self.kappa <= 0 or self.eps <= 0:
            raise ValueError("b, kappa and eps must be positive")


def i_ion(par, phi, w):
    """Ionic current."""
    a = par.a
    if par.kind == "fhn":
        return phi**3 - (a + 1.0) * phi**2 + a * phi + w
    b = par.b
    return b * phi**3 - (a + 1.0) * b * phi**2 + a * b * phi + phi * w


def g_gate(par, phi, w):
    """Recovery right-hand side g with dw/dt + g = 0."""
    return par.eps * (w - gating_source(par, phi))


def d_i_ion(par, phi, w):
    """Partial derivatives (d i_ion/d phi, d i_ion/d w)."""
    a = par.a
    if par.kind == "fhn":
        d_phi = 3.0 * phi**2 - 2.0 * (a + 1.0) * phi + a
        return d_phi, np.ones_like(np.asarray(phi, dtype=float))
    b = par.b
    d_phi = 3.0 * b * phi**2 - 2.0 * (a + 1.0) * b * phi + a * b + w
    return d_phi, np.asarray(phi, dtype=float)


def d_g(par, phi, w):
    """Partial derivatives (d g/d phi, d g/d w)."""
    eps, kappa = par.eps, par.kappa
    if par.kind == "ap":
        d_phi = -eps * kappa * ((par.a + 1.0) - 2.0 * phi)
    else:
        d_phi = -eps * kappa * np.ones_like(np.asarray(phi, dtype=float))
    d_w = eps * np.ones_like(np.asarray(phi, dtype=float))
    return d_phi, d_w


def gating_source(par, phi):
    """Equilibrium value s(phi) that w relaxes toward."""
    if par.kind == "ap":
        return par.kappa * ((par.a + 1.0) * phi - phi**2)
    return par.kappa * phi


def gating_source_slope(par, phi):
    """s'(phi); constant kappa except for the ap model."""
    if par.kind == "ap":
        return par.kappa * ((par.a + 1.0) - 2.0 * phi)
    return par.kappa * np.ones_like(np.asarray(phi, dtype=float))


def gating_exact_update(par, w, phi_old, phi_new, dt):
    """Advance w by one step of the exact exponential relaxation.

    The source is evaluated at phi_bar = (phi_old + phi_new)/2, so the
    update is second-order in dt for smooth potentials and exact for
    potentials constant over the step.
    """
    alpha = np.exp(-par.eps * dt)
    phi_bar = 0.5 * (phi_old + phi_new)
    return alpha * w + (1.0 - alpha) * gating_source(par, phi_bar)
