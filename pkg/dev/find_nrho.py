"""Locate the southern L2 NRHO with the target period by continuation.

Development helper, not shipped API.  Walks the halo family in z0 from a
rough NRHO-regime seed, tracking the corrected period, then brackets and
polishes the member whose period equals the target via the fixed-period
corrector.  Prints the final initial condition for embedding in configs.
"""

import numpy as np

from cislunargame.params import EARTH_MOON
from cislunargame.orbit import differential_correct, load_orbit
from cislunargame import dynamics

TARGET_T = 1.466695

# Rough 9:2-resonance-regime southern L2 NRHO seed (corrector polishes it).
seed = np.array([1.022, 0.0, -0.182, 0.0, -0.1032, 0.0])
state, period = differential_correct(seed, 1.511, EARTH_MOON, fix="z0", tol=1e-12)
print(f"seed corrected: x0={state[0]:.12f} z0={state[2]:.12f} vy0={state[4]:.12f} T={period:.9f}")

# Continue in z0 until the period brackets the target.  Along this branch
# the period shrinks as |z0| shrinks; steps stay small and the free
# coordinates are linearly predicted so Newton stays on the family.
members = [(state.copy(), period)]
dz = 2e-4 if TARGET_T < period else -2e-4
for _ in range(200):
    st, T = members[-1]
    guess = st.copy()
    guess[2] += dz
    Tg = T
    if len(members) >= 2:
        st_prev, T_prev = members[-2]
        dz_prev = st[2] - st_prev[2]
        if abs(dz_prev) > 1e-12:
            scale = dz / dz_prev
            guess[0] = st[0] + scale * (st[0] - st_prev[0])
            guess[4] = st[4] + scale * (st[4] - st_prev[4])
            Tg = T + scale * (T - T_prev)
    try:
        st2, T2 = differential_correct(guess, Tg, EARTH_MOON, fix="z0", tol=1e-12)
    except Exception as e:
        print("continuation step failed:", e)
        dz *= 0.5
        continue
    if abs(T2 - T) > 0.2:
        print(f"  rejected family jump at z0={guess[2]:.6f} (T={T2:.4f})")
        dz *= 0.5
        continue
    print(f"  z0={st2[2]: .6f}  x0={st2[0]:.8f}  vy0={st2[4]: .8f}  T={T2:.9f}")
    members.append((st2.copy(), T2))
    if (T - TARGET_T) * (T2 - TARGET_T) <= 0.0:
        print("bracketed the target period")
        break
else:
    raise SystemExit("failed to bracket target period")

# Polish with the fixed-period corrector from the nearer bracket end.
a, Ta = members[-2]
b, Tb = members[-1]
guess = b if abs(Tb - TARGET_T) < abs(Ta - TARGET_T) else a
final, Tf = differential_correct(guess, TARGET_T, EARTH_MOON, target_period=TARGET_T, tol=1e-12)
print("\nfinal member:")
print(f"  x0  = {final[0]:.16f}")
print(f"  z0  = {final[2]:.16f}")
print(f"  vy0 = {final[4]:.16f}")
print(f"  T   = {Tf:.9f}  ({Tf * EARTH_MOON.period_to_days:.4f} days)")

orb = load_orbit(final, Tf, EARTH_MOON)
print(f"  closure residual = {orb.periodicity_residual:.3e}")

# Diagnostics: perilune/apolune radii and planar extent.
phases = np.linspace(0.0, Tf, 4001)
rm = np.array([orb.radius_to_secondary(c) for c in phases])
print(f"  perilune r = {rm.min() * EARTH_MOON.lu_km:.1f} km at phase {phases[rm.argmin()]:.4f}")
print(f"  apolune  r = {rm.max() * EARTH_MOON.lu_km:.1f} km at phase {phases[rm.argmax()]:.4f}")
print(f"  jacobi C = {dynamics.jacobi_constant(final, EARTH_MOON):.8f}")
speeds = np.array([np.linalg.norm(orb.sample(c)[3:]) for c in phases])
print(f"  speed at phase 0: {speeds[0]:.6f} (min {speeds.min():.6f}, max {speeds.max():.6f})")
