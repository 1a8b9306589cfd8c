# coding: utf-8

# # One tackle, two densities
#
# We simulate a small season of tracking plays, train the leave-one-week-out
# forests, and look at a single tackle: where the forest thinks the carrier
# ends up with the tackler on the field, and where it thinks they end up once
# that defender is deleted from the frame.

# In[1]:

import numpy as np
import pandas as pd

from tacklepep.ep_model import fit_ep_classifier
from tacklepep.forest import ForestConfig, fit_weekly_folds, predict_density
from tacklepep.pep import score_contacts
from tacklepep.synth.pbp import generate_pbp
from tacklepep.synth.tracking import SimConfig, generate_tracking_corpus
from tacklepep.tracking import build_contact_table, build_feature_table, feature_names, parse_tracking

NAMES = feature_names(5)


# In[2]:

corpus = generate_tracking_corpus(SimConfig(n_games=18, plays_per_game=10), seed=4)
paths = corpus.write("/tmp/tacklepep_nb01")
data = parse_tracking(paths["tracking"], paths["plays"], paths["tackles"], paths["players"])
print(len(data.plays), "plays parsed")


# The feature table has one row per carrier frame; the response is how many
# yards the carrier still gains from that frame to the end of the play.

# In[3]:

table = build_feature_table(data)
print(table[["week", "frame_id", "carrier_x", "def1_euclid_dist", "response"]].describe())


# In[4]:

folds = fit_weekly_folds(table, NAMES, ForestConfig(n_trees=200), master_seed=0, frame_stride=3)
forests = {f.week: f.forest for f in folds}
for f in folds:
    print(f"week {f.week}: trained on {f.n_train} rows, held-out MAE {f.mae:.2f} yd")


# Pick the contact row with the biggest gap between the two scenarios.

# In[5]:

contacts = build_contact_table(data)
weeks = data.plays[["game_id", "play_id", "week"]]
keys = ["game_id", "play_id", "defender_id"]
real = contacts[contacts["scenario"] == "real"].merge(weeks, on=["game_id", "play_id"])
removed = contacts[contacts["scenario"] == "removed"].merge(weeks, on=["game_id", "play_id"])
real = real.sort_values(keys).reset_index(drop=True)
removed = removed.sort_values(keys).reset_index(drop=True)
gap = []
for i in range(len(real)):
    f = forests[int(real.loc[i, "week"])]
    x = f.stats.apply(np.vstack([real.loc[i, NAMES].to_numpy(float), removed.loc[i, NAMES].to_numpy(float)]))
    d = predict_density(f, x)
    gap.append(d[1].mean() - d[0].mean())
i = int(np.argmax(gap))
row = real.iloc[i]
print("play", int(row["game_id"]), int(row["play_id"]), "tackler", int(row["defender_id"]))


# In[6]:

f = forests[int(row["week"])]
x = f.stats.apply(np.vstack([row[NAMES].to_numpy(float), removed.loc[i, NAMES].to_numpy(float)]))
with_tackler, without = predict_density(f, x)
for label, d in (("with tackler", with_tackler), ("tackler removed", without)):
    q = d.quantile([0.1, 0.5, 0.9])
    print(f"{label:16s} mean {d.mean():6.2f}  10/50/90% {q[0]:6.2f} {q[1]:6.2f} {q[2]:6.2f}")


# A crude text histogram of the two sets of per-tree draws.

# In[7]:

edges = np.linspace(min(with_tackler.draws.min(), without.draws.min()),
                    max(with_tackler.draws.max(), without.draws.max()), 13)
h1, _ = np.histogram(with_tackler.draws, edges)
h2, _ = np.histogram(without.draws, edges)
for lo, a, b in zip(edges[:-1], h1, h2):
    print(f"{lo:7.1f} | {'#' * (a // 4):50s} | {'o' * (b // 4)}")


# Now put the draws through the expected-points model to get PEP for every
# tackle in the corpus.

# In[8]:

pbp = generate_pbp(n_seasons=3, rows_per_season=4000, seed=1)
clf = fit_ep_classifier(pbp, grid=[{"max_depth": 3, "learning_rate": 0.1, "n_estimators": 150}])
records = score_contacts(contacts, data.plays, forests, clf, NAMES, players=data.players)
print(records[["pep", "pep_alt", "ep_hyp", "ep_real_pred", "ep_real_obs"]].describe())
print(records.sort_values("pep", ascending=False).head(5)[["game_id", "play_id", "tackler_id", "pep"]])
