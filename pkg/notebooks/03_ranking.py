# coding: utf-8

# # Pooling tackles into a ranking
#
# Raw PEP is noisy and depends on who carried the ball and which offense was
# on the field. Here the mixed model separates those out on simulated
# records, we check the fit with a wormplot, and then a drive bootstrap
# produces the player ranking.

# In[1]:

import numpy as np
import pandas as pd

from tacklepep.gamlss.bootstrap import drive_bootstrap, rank_players
from tacklepep.gamlss.diagnostics import outside_band_fraction, quantile_residuals, wormplot_data
from tacklepep.gamlss.mixed import build_design, fit_gamlss
from tacklepep.synth.records import RecordSimConfig, simulate_records

REF = {"tackler_position": "ILB", "pass_result": "", "ball_carrier_position": "RB"}


# In[2]:

sim = simulate_records(RecordSimConfig(n_records=3000, n_tacklers=60, n_carriers=40, n_teams=16), seed=3)
rec = sim.records
print(rec["pep"].describe())


# Fit all three families on the same design and compare.

# In[3]:

design = build_design(rec, reference=REF)
fits = {fam: fit_gamlss(design=design, family=fam) for fam in ("normal", "TF", "SST")}
for fam, fit in fits.items():
    print(f"{fam:6s} loglik {fit.loglik:10.2f}  sigma {fit.sigma:.3f}  nu {fit.nu:.3f}  tau {fit.tau:.2f}")


# In[4]:

sst = fits["SST"]
est = sst.T.loc[sim.tackler_effect.index]
print("correlation with planted tackler ability:", round(float(np.corrcoef(est, sim.tackler_effect)[0, 1]), 3))


# A good fit keeps the worm inside its band.

# In[5]:

for fam, fit in fits.items():
    worm = wormplot_data(quantile_residuals(fit, rec))
    print(f"{fam:6s} share of points outside the 95% band: {outside_band_fraction(worm):.3f}")


# In[6]:

bs = drive_bootstrap(rec, B=30, seed=0, family="SST", reference=REF)
table = rank_players(bs, rec, min_tackles=10)
print(table.head(10).to_string(index=False))
