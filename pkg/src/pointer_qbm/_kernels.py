"""Row-batched numba kernels for the grid propagator.

Every kernel treats row ``b`` of a (B, n) array as an independent
wavefunction, so results never depend on how trajectories are batched.
"""
import math

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def moments(psi, phi, ppsi, x_min, dx, p, out):
    """Fill ``out[b] = (x, p, V_x, V_p, C_xp, norm)`` for every row.

    ``ppsi`` must be ifft(p * phi) with phi = fft(psi).
    """
    B, n = psi.shape
    for b in range(B):
        w = 0.0
        sx = 0.0
        for i in range(n):
            a = psi[b, i].real * psi[b, i].real + psi[b, i].imag * psi[b, i].imag
            w += a
            sx += a * (i * dx)
        xr = sx / w
        vx = 0.0
        for i in range(n):
            a = psi[b, i].real * psi[b, i].real + psi[b, i].imag * psi[b, i].imag
            d = i * dx - xr
            vx += a * d * d
        vx /= w
        wp = 0.0
        sp = 0.0
        for k in range(n):
            a = phi[b, k].real * phi[b, k].real + phi[b, k].imag * phi[b, k].imag
            wp += a
            sp += a * p[k]
        mp = sp / wp
        vp = 0.0
        for k in range(n):
            a = phi[b, k].real * phi[b, k].real + phi[b, k].imag * phi[b, k].imag
            d = p[k] - mp
            vp += a * d * d
        vp /= wp
        c = 0.0
        for i in range(n):
            q = ppsi[b, i] - mp * psi[b, i]
            c += (i * dx - xr) * (psi[b, i].real * q.real + psi[b, i].imag * q.imag)
        out[b, 0] = x_min[b] + xr
        out[b, 1] = mp
        out[b, 2] = vx
        out[b, 3] = vp
        out[b, 4] = 2.0 * c / w
        out[b, 5] = math.sqrt(w * dx)


@numba.njit(cache=True, nogil=True)
def momentum_factor(p, m, kappa, h, out):
    """out[b] = exp(h [-i k/2 (p^2 - <p^2>) + (V_p - (p - <p>)^2) / 16])."""
    B, n = out.shape
    for b in range(B):
        mp = m[b, 1]
        vp = m[b, 3]
        p2 = vp + mp * mp
        for k in range(n):
            d = p[k] - mp
            re = h * (vp - d * d) / 16.0
            im = -h * 0.5 * kappa * (p[k] * p[k] - p2)
            f = math.exp(re)
            out[b, k] = complex(f * math.cos(im), f * math.sin(im))


@numba.njit(cache=True, nogil=True)
def real_space_block(psi, x_min, dx, m, kappa, h, sym, lo, di, up, rhs, cp, dp, fac):
    """Position factor (h/2), Crank-Nicolson mixed term (h), position factor (h/2).

    Mixed term: -i k/2 (x - <x>)(p + <p>) with p = -(i/k) d/dx discretized by
    central differences and zero amplitude beyond the grid ends.  With
    ``sym == 1`` the product (x - <x>) p is discretized as the anti-commutator
    form {x - <x>, p}/2 + i/(2 k) instead of keeping x on the left.  ``lo``
    ... ``fac`` are length-n scratch buffers.
    """
    B, n = psi.shape
    k2 = kappa * kappa
    for b in range(B):
        mx = m[b, 0]
        mp = m[b, 1]
        vx = m[b, 2]
        c = m[b, 4]
        ph = 0.5 * h * kappa * c / 4.0
        cph = math.cos(ph)
        sph = math.sin(ph)
        off = x_min[b] - mx
        for i in range(n):
            xr = off + i * dx
            f = math.exp(0.5 * h * (k2 * (vx - xr * xr) - 0.25))
            fac[i] = complex(f * cph, f * sph)
            psi[b, i] *= fac[i]
        for i in range(n):
            xr = off + i * dx
            # M psi_i = a_up psi_{i+1} + bb psi_i + a_lo psi_{i-1}
            a_up = -xr / (4.0 * dx) - 0.125 * sym
            a_lo = xr / (4.0 * dx) - 0.125 * sym
            bb = complex(0.25 * sym, -0.5 * kappa * mp * xr)
            lo[i] = -0.5 * h * a_lo
            up[i] = -0.5 * h * a_up
            di[i] = 1.0 - 0.5 * h * bb
            r = psi[b, i] * (1.0 + 0.5 * h * bb)
            if i + 1 < n:
                r += 0.5 * h * a_up * psi[b, i + 1]
            if i > 0:
                r += 0.5 * h * a_lo * psi[b, i - 1]
            rhs[i] = r
        # Thomas sweep
        cp[0] = up[0] / di[0]
        dp[0] = rhs[0] / di[0]
        for i in range(1, n):
            den = di[i] - lo[i] * cp[i - 1]
            cp[i] = up[i] / den
            dp[i] = (rhs[i] - lo[i] * dp[i - 1]) / den
        psi[b, n - 1] = dp[n - 1]
        for i in range(n - 2, -1, -1):
            psi[b, i] = dp[i] - cp[i] * psi[b, i + 1]
        for i in range(n):
            psi[b, i] *= fac[i]


def scratch(n):
    return tuple(np.empty(n, dtype=np.complex128) for _ in range(7))
