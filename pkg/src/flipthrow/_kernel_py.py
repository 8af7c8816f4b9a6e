"""Pure-python integration kernel (numpy reference implementation).

The compiled extension in _core.pyx mirrors these functions exactly; this
module is the fallback when the extension is unavailable and the reference
the extension is tested against.

Packed layouts (float64):
  state x[24]: 0:3 position, 3:6 velocity, 6:15 attitude R row-major,
               15:18 body rate, 18:21 link direction, 21:24 link omega
  input u[4]:  0 thrust, 1:4 body moment
  par[23]:     0 quad mass, 1 probe mass, 2 link length, 3 gravity,
               4 attached flag, 5:14 inertia row-major, 14:23 its inverse

Translational model (link taut, attachment at the quad center of gravity,
unit link vector p pointing quad -> probe, link rate w orthogonal to p):

  mt Vdot = (p.uf) p + (mt/Mq)(uf - (p.uf) p) + Mp l |w|^2 p - mt g e3
  l wdot  = -p x uf / Mq
  pdot    = w x p

with uf = f R e3. With the probe detached the p/w slots are carried through
untouched and the translational equation collapses to Mq Vdot = uf - Mq g e3.
"""

import numpy as np


def deriv(x, u, par, out=None):
    """Time derivative of the packed state. Returns a 24-vector."""
    if out is None:
        out = np.empty(24)
    Mq, Mp, l, g = par[0], par[1], par[2], par[3]
    attached = par[4] != 0.0

    R = x[6:15].reshape(3, 3)
    Om = x[15:18]
    f = u[0]
    uf = f * R[:, 2]

    out[0:3] = x[3:6]

    if attached and Mp > 0.0:
        mt = Mq + Mp
        p = x[18:21]
        w = x[21:24]
        s = p @ uf
        wsq = w @ w
        out[3:6] = (s * p) / mt + (uf - s * p) / Mq + (Mp * l * wsq / mt) * p
        out[5] -= g
        out[18:21] = np.cross(w, p)
        out[21:24] = -np.cross(p, uf) / (Mq * l)
    else:
        out[3:6] = uf / Mq
        out[5] -= g
        out[18:21] = 0.0
        out[21:24] = 0.0

    out[6:15] = (R @ _hat(Om)).reshape(9)

    I = par[5:14].reshape(3, 3)
    Iinv = par[14:23].reshape(3, 3)
    out[15:18] = Iinv @ (u[1:4] - np.cross(Om, I @ Om))
    return out


def _hat(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def project(x):
    """Pull the state back onto its manifolds after an integration step.

    Attitude: two Newton polar steps R <- R (3I - R^T R)/2, quadratically
    convergent for the near-orthonormal drift RK4 produces. Link direction
    renormalized, link rate re-projected orthogonal to it.
    """
    R = x[6:15].reshape(3, 3)
    for _ in range(2):
        R = R @ (1.5 * np.eye(3) - 0.5 * (R.T @ R))
    x[6:15] = R.reshape(9)

    p = x[18:21]
    n = np.sqrt(p @ p)
    if n > 0.0:
        p /= n
    w = x[21:24]
    w -= (w @ p) * p
    return x


def step(x, u, par, dt):
    """Classical RK4 advance followed by manifold projection."""
    k1 = deriv(x, u, par)
    k2 = deriv(x + 0.5 * dt * k1, u, par)
    k3 = deriv(x + 0.5 * dt * k2, u, par)
    k4 = deriv(x + dt * k3, u, par)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return project(out)


def step_n(x, u, par, dt, n):
    """n repeated fixed-input RK4 steps (hot path of long invariant runs)."""
    out = np.array(x, dtype=float)
    for _ in range(int(n)):
        out = step(out, u, par, dt)
    return out
