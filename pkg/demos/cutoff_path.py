"""One trajectory of the cut-off dynamics with its stopping times and path checks.

    python demos/cutoff_path.py
"""
from wavedrift.cutoff import (check_path_geometry, check_transversality, derive_params,
                              integrate_modified, occupancy_table)
from wavedrift.field import GaussianSpectralDensity, SpectralFieldSpec, build_spectral_field

delta = 1e-2
field = build_spectral_field(SpectralFieldSpec(GaussianSpectralDensity(), n_modes=256), seed=3)
params = derive_params(delta, D_tilde=0.0)
print("p =", params.p, " N =", params.N, f" M* = {params.M_star:.3f}")

traj, hist, rep = integrate_modified(field, delta, params, (0.0, 0.0), (1.0, 0.0), 1.0)
print(f"steps {traj.meta['steps']}, min Theta {traj.meta['theta_min']:.3f}")
print(f"S1={rep.S1} S2={rep.S2} S3={rep.S3} U={rep.U} tau={rep.tau}")
print("witnesses re-checked:", rep.verify(hist))

geo = check_path_geometry(hist, until=rep.tau)
print("direction/momentum bounds up to tau:", geo.ok)
print("transversality:", check_transversality(hist).ok)
occ = occupancy_table(hist)
print("largest tube occupancy:", max(r.measure for r in occ))
