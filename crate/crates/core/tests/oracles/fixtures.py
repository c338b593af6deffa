"""Independent reference values for the frozen test fixtures.

Run with `python3 fixtures.py`. Nothing here imports the Rust code; every value
is recomputed from the closed-form physics with numpy/scipy so the Rust tests
can compare against numbers produced by a different implementation path.
"""

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

PHI0 = 2.067833848e-15
HBAR = 1.054571817e-34
TWO_PI = 2.0 * np.pi


def squid_inductance(phi, i_c, d):
    x = np.pi * phi
    return PHI0 / (4 * np.pi * i_c * np.sqrt(np.cos(x) ** 2 + d**2 * np.sin(x) ** 2))


def calibrate(omega, phi, ratio, i_c, d):
    ls = squid_inductance(phi, i_c, d)
    # r C^2 + Ls C - 1/omega^2 = 0
    c = (-ls + np.sqrt(ls**2 + 4 * ratio / omega**2)) / (2 * ratio)
    return ratio * c, c


def mode_frequency(phi, l, c, i_c, d):
    return 1.0 / np.sqrt(c * (l + squid_inductance(phi, i_c, d)))


print("== squid inductance, phi=0.33 d=0.1 ic=1uA")
print(repr(squid_inductance(0.33, 1e-6, 0.1)))

print("== photon flux -102 dBm @ 5.728 GHz")
p = 10 ** ((-102 - 30) / 10)
print(repr(p / (HBAR * TWO_PI * 5.728e9)))

k3 = TWO_PI * 6.8857e6
k2 = TWO_PI * 4.6461e6
ke = TWO_PI * 4.0874e6
print("== single-mode on-resonance r")
print(repr(1 - 2 * ke / k3))

# Two-mode steady-state fixture: Delta2 = 0, g = 6.6 MHz, probe at delta = g.
w3 = TWO_PI * 5.7284e9
w2 = TWO_PI * 4.0614e9
wmod = w3 - w2
g = TWO_PI * 6.6e6
wp = w3 - g
d1 = w3 - wp
dl = w2 - wp + wmod
m = np.array([[-1j * d1 - k3 / 2, -1j * g], [-1j * g, -1j * dl - k2 / 2]])
rhs = np.array([1j * np.sqrt(ke), 0.0])
a, b = np.linalg.solve(m, rhs)
print("== steady amplitudes (alpha_in = 1) at delta = g, g = 6.6 MHz")
print(repr(a), repr(b))


def eq5(wp, w3, w2, wmod, k3, k2, ke, g):
    D1 = w3 - wp
    D2 = w3 - w2 - wmod
    dl = D1 - D2
    num = (ke / 2) * (dl - 1j * k2 / 2)
    den = (dl - 1j * k2 / 2) * (dl + D2 - 1j * k3 / 2) - g**2
    return 1 + 2j * num / den


print("== Fig 3(c) dip positions (offset from w3, MHz), g = 6.6 MHz")
f = lambda x: abs(eq5(w3 + TWO_PI * x * 1e6, w3, w2, wmod, k3, k2, ke, g))
lo = minimize_scalar(f, bracket=(-10, -6, -2), tol=1e-12).x
hi = minimize_scalar(f, bracket=(2, 6, 10), tol=1e-12).x
print(repr(lo), repr(hi), "separation MHz", repr(hi - lo))

print("== motional shift fixture (reference device, mode 3)")
ic, dd, ratio = 1e-6, 0.1, 2500.0
l3, c3 = calibrate(w3, 0.33, ratio, ic, dd)
print("l3, c3", repr(l3), repr(c3))
for dphi in (0.001, 0.005, 0.01):
    th = TWO_PI * np.arange(4096) / 4096
    avg = np.mean(mode_frequency(0.33 + dphi * np.sin(th), l3, c3, ic, dd))
    h = 1e-3
    wpp = (
        mode_frequency(0.33 + h, l3, c3, ic, dd)
        - 2 * mode_frequency(0.33, l3, c3, ic, dd)
        + mode_frequency(0.33 - h, l3, c3, ic, dd)
    ) / h**2
    shift = avg - w3
    print(dphi, "shift", repr(shift), "taylor", repr(dphi**2 / 4 * wpp))

print("== beating fixture period (g = 17.6 MHz, tau = 5 ns, Delta2 = 0)")
g = TWO_PI * 17.6e6
wp = TWO_PI * 5.728e9
tau = 5e-9
t0 = 25e-9
D1 = w3 - wp
dl = D1  # Delta2 = 0


def rhs_fn(t, y):
    a = y[0] + 1j * y[1]
    b = y[2] + 1j * y[3]
    ain = np.exp(-((t - t0) ** 2) / tau**2)
    da = (-1j * D1 - k3 / 2) * a - 1j * g * b - 1j * np.sqrt(ke) * ain
    db = (-1j * dl - k2 / 2) * b - 1j * g * a
    return [da.real, da.imag, db.real, db.imag]


ts = np.linspace(0, 400e-9, 40001)
sol = solve_ivp(rhs_fn, (0, 400e-9), [0, 0, 0, 0], t_eval=ts, method="DOP853", rtol=1e-11, atol=1e-14)
a = sol.y[0] + 1j * sol.y[1]
ain = np.exp(-((ts - t0) ** 2) / tau**2)
vout = np.abs(ain - 1j * np.sqrt(ke) * a)
sel = ts > t0 + 3 * tau
idx = np.where(sel)[0]
peaks = [i for i in idx[1:-1] if vout[i] > vout[i - 1] and vout[i] > vout[i + 1]]
pt = []
dt = ts[1] - ts[0]
for i in peaks:
    y0, y1, y2 = vout[i - 1], vout[i], vout[i + 1]
    off = 0.5 * (y0 - y2) / (y0 - 2 * y1 + y2)
    pt.append(ts[i] + off * dt)
pt = np.array(pt)
print("peak times ns", pt[:5] * 1e9)
print("mean period ns", repr(np.mean(np.diff(pt[:5])) * 1e9))
print("dressed-splitting period ns", repr(1e9 * np.pi / np.sqrt(g**2 - (k3 - k2) ** 2 / 16)))
