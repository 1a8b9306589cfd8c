# coding: utf-8

# # From end-of-play yard line to expected points
#
# The forest hands us a yard line. This notebook shows what the EP mapping
# does with it as the yard line sweeps across the field, for an early down
# and for a fourth down where a short gain hands the ball over.

# In[1]:

import numpy as np
import pandas as pd

from tacklepep.ep_model import derive_next_state, evaluate_ep, fit_ep_classifier, g
from tacklepep.synth.pbp import bayes_expected_points, generate_pbp


# In[2]:

pbp = generate_pbp(n_seasons=4, rows_per_season=6000, seed=2)
train, test = pbp[pbp["season"] < pbp["season"].max()], pbp[pbp["season"] == pbp["season"].max()]
clf = fit_ep_classifier(train, seed=0)
print("held-out MAE of EP vs next score:", round(evaluate_ep(clf, test), 3))
bayes = bayes_expected_points(test)
print("MAE of the true EP:", round(float(np.mean(np.abs(bayes - test["next_score"]))), 3))


# A first-and-ten from the defense's 40 (yardline 40 means 40 yards to the
# end zone) and a fourth-and-four from the same spot.

# In[3]:

base = {"yardline": 40.0, "quarter": 2, "score_differential": 0, "home_possession": 1,
        "timeouts_off": 3, "timeouts_def": 3, "adjusted_los": 40.0}
first = dict(base, down=1, yards_to_go=10.0)
fourth = dict(base, down=4, yards_to_go=4.0)

draws = np.arange(-2.0, 50.0, 4.0)
rows = []
for d in draws:
    rows.append({"eopy": d, "first_and_10": float(g(d, first, clf)[0]),
                 "fourth_and_4": float(g(d, fourth, clf)[0])})
print(pd.DataFrame(rows).round(2).to_string(index=False))


# Past the goal line the value is a touchdown, and on fourth down anything
# short of the marker flips possession, so the curve jumps at the line to gain.

# In[4]:

nxt = derive_next_state(np.array([37.0, 36.0, 35.0]), fourth)
print(nxt.states[["yardline", "down", "yards_to_go"]])
print("sign:", nxt.sign)
